#include "ponzi/clustering.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <unordered_map>

#include "ponzi/csv.hpp"

namespace ponzi::cluster {

DisjointSets::DisjointSets(std::size_t n) : parent_(n), size_(n, 1) {
    for (std::size_t i = 0; i < n; ++i) parent_[i] = static_cast<std::uint32_t>(i);
}

std::uint32_t DisjointSets::find(std::uint32_t x) {
    std::uint32_t root = x;
    while (parent_[root] != root) root = parent_[root];
    while (parent_[x] != root) {
        const std::uint32_t next = parent_[x];
        parent_[x] = root;
        x = next;
    }
    return root;
}

bool DisjointSets::unite(std::uint32_t a, std::uint32_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (size_[a] < size_[b] || (size_[a] == size_[b] && b < a)) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
    return true;
}

ClusterSet ClusterSet::from_groups(std::vector<std::vector<std::string>> groups) {
    ClusterSet cs;
    for (auto& g : groups) {
        if (g.empty()) throw DataError("empty cluster");
        std::sort(g.begin(), g.end());
        g.erase(std::unique(g.begin(), g.end()), g.end());
    }
    std::sort(groups.begin(), groups.end(),
              [](const auto& a, const auto& b) { return a.front() < b.front(); });

    std::vector<std::pair<std::string, std::uint32_t>> tagged;
    for (std::size_t c = 0; c < groups.size(); ++c) {
        for (const auto& a : groups[c]) tagged.emplace_back(a, static_cast<std::uint32_t>(c));
    }
    std::sort(tagged.begin(), tagged.end());
    for (std::size_t i = 1; i < tagged.size(); ++i) {
        if (tagged[i].first == tagged[i - 1].first) {
            throw DataError("address " + tagged[i].first + " assigned to two clusters");
        }
    }
    cs.addresses_.reserve(tagged.size());
    cs.cluster_of_id_.reserve(tagged.size());
    for (auto& [addr, c] : tagged) {
        cs.addresses_.push_back(std::move(addr));
        cs.cluster_of_id_.push_back(c);
    }
    cs.members_ = std::move(groups);
    return cs;
}

std::optional<std::size_t> ClusterSet::find(const std::string& address) const {
    auto it = std::lower_bound(addresses_.begin(), addresses_.end(), address);
    if (it == addresses_.end() || *it != address) return std::nullopt;
    return cluster_of_id_[static_cast<std::size_t>(it - addresses_.begin())];
}

std::size_t ClusterSet::cluster_of(const std::string& address) const {
    auto c = find(address);
    if (!c) throw UnknownAddressError(address);
    return *c;
}

ClusterSet build_clusters(const chain::TxLog& log) {
    std::vector<std::string> addresses = log.addresses();
    std::unordered_map<std::string, std::uint32_t> id;
    id.reserve(addresses.size());
    for (std::size_t i = 0; i < addresses.size(); ++i) id.emplace(addresses[i], static_cast<std::uint32_t>(i));

    DisjointSets sets(addresses.size());
    for (const auto& tx : log.transactions()) {
        if (tx.coinbase || tx.inputs.size() < 2) continue;
        std::optional<std::uint32_t> first;
        for (const auto& in : tx.inputs) {
            if (!in.resolved) continue;
            const std::uint32_t a = id.at(in.address);
            if (first) {
                sets.unite(*first, a);
            } else {
                first = a;
            }
        }
    }

    // addresses are sorted, so the first member seen of each root is its
    // smallest and clusters come out in representative order
    std::unordered_map<std::uint32_t, std::size_t> dense;
    std::vector<std::vector<std::string>> groups;
    for (std::uint32_t i = 0; i < addresses.size(); ++i) {
        const auto root = sets.find(i);
        auto [it, inserted] = dense.emplace(root, groups.size());
        if (inserted) groups.emplace_back();
        groups[it->second].push_back(addresses[i]);
    }
    return ClusterSet::from_groups(std::move(groups));
}

SeedExpansion expand_seeds(const ClusterSet& clusters, const std::vector<Seed>& seeds) {
    SeedExpansion out;
    std::map<std::size_t, std::set<std::string>> labels_per_cluster;
    for (const auto& seed : seeds) {
        auto c = clusters.find(seed.address);
        if (!c) {
            out.unresolved.push_back(seed);
            continue;
        }
        out.clusters[seed.label].insert(*c);
        labels_per_cluster[*c].insert(seed.label);
    }
    for (auto& [c, labels] : labels_per_cluster) {
        if (labels.size() > 1) out.collisions.emplace(c, std::vector<std::string>(labels.begin(), labels.end()));
    }
    return out;
}

std::vector<Seed> parse_seed_file(std::istream& in) {
    std::vector<Seed> seeds;
    std::string line;
    std::size_t line_no = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++line_no;
        auto cells = csv::split(line, line_no);
        if (cells.size() == 1 && cells[0].empty()) continue;
        if (!header) {
            if (cells != std::vector<std::string>{"label", "address"}) {
                throw ParseError(line_no, 0, "expected header label,address");
            }
            header = true;
            continue;
        }
        if (cells.size() != 2 || cells[1].empty()) throw ParseError(line_no, 0, "expected label,address");
        seeds.push_back({std::move(cells[0]), std::move(cells[1])});
    }
    return seeds;
}

void write_cluster_dump(const ClusterSet& clusters, std::ostream& out) {
    out << "cluster_id,address\n";
    for (std::size_t c = 0; c < clusters.cluster_count(); ++c) {
        for (const auto& a : clusters.members(c)) out << c << ',' << csv::escape(a) << '\n';
    }
}

ClusterSet read_cluster_dump(std::istream& in) {
    std::map<std::uint64_t, std::vector<std::string>> groups;
    std::string line;
    std::size_t line_no = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++line_no;
        auto cells = csv::split(line, line_no);
        if (cells.size() == 1 && cells[0].empty()) continue;
        if (!header) {
            if (cells != std::vector<std::string>{"cluster_id", "address"}) {
                throw ParseError(line_no, 0, "expected header cluster_id,address");
            }
            header = true;
            continue;
        }
        std::uint64_t id = 0;
        if (cells.size() != 2 || !csv::parse_uint(cells[0], id) || cells[1].empty()) {
            throw ParseError(line_no, 0, "expected cluster_id,address");
        }
        groups[id].push_back(std::move(cells[1]));
    }
    if (!header) throw ParseError(line_no, 0, "missing header cluster_id,address");
    std::vector<std::vector<std::string>> list;
    list.reserve(groups.size());
    for (auto& [_, members] : groups) list.push_back(std::move(members));
    return ClusterSet::from_groups(std::move(list));
}

}  // namespace ponzi::cluster
