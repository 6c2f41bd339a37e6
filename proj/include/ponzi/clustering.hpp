#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "ponzi/chain.hpp"
#include "ponzi/error.hpp"

namespace ponzi::cluster {

/// Union-find over dense ids with path compression and union by size.
class DisjointSets {
public:
    explicit DisjointSets(std::size_t n = 0);

    std::uint32_t find(std::uint32_t x);
    /// Returns true when two distinct sets were merged.
    bool unite(std::uint32_t a, std::uint32_t b);
    std::size_t size() const noexcept { return parent_.size(); }
    std::uint32_t set_size(std::uint32_t x) { return size_[find(x)]; }

private:
    std::vector<std::uint32_t> parent_;
    std::vector<std::uint32_t> size_;
};

class UnknownAddressError : public DataError {
public:
    explicit UnknownAddressError(const std::string& address) : DataError("unknown address " + address) {}
};

/// Finalized partition of addresses into user clusters. Cluster indices are
/// dense and ordered by each cluster's lexicographically smallest member.
class ClusterSet {
public:
    ClusterSet() = default;

    /// Canonicalizes an arbitrary partition. Throws DataError if an address
    /// appears in more than one group or a group is empty.
    static ClusterSet from_groups(std::vector<std::vector<std::string>> groups);

    std::size_t cluster_count() const noexcept { return members_.size(); }
    std::size_t address_count() const noexcept { return addresses_.size(); }

    std::optional<std::size_t> find(const std::string& address) const;
    /// Throws UnknownAddressError.
    std::size_t cluster_of(const std::string& address) const;

    /// Sorted member list.
    std::span<const std::string> members(std::size_t cluster) const { return members_.at(cluster); }
    const std::string& representative(std::size_t cluster) const { return members_.at(cluster).front(); }

    /// All addresses, sorted.
    const std::vector<std::string>& addresses() const noexcept { return addresses_; }

    friend bool operator==(const ClusterSet& a, const ClusterSet& b) { return a.members_ == b.members_; }

private:
    std::vector<std::string> addresses_;
    std::vector<std::uint32_t> cluster_of_id_;
    std::vector<std::vector<std::string>> members_;
};

/// Multi-input heuristic: all input addresses of a non-coinbase transaction
/// with two or more inputs belong to one cluster. Unresolved inputs are
/// ignored.
ClusterSet build_clusters(const chain::TxLog& log);

struct Seed {
    std::string label;
    std::string address;
};

struct SeedExpansion {
    std::map<std::string, std::set<std::size_t>> clusters;  // label -> clusters
    std::vector<Seed> unresolved;
    std::map<std::size_t, std::vector<std::string>> collisions;  // cluster -> labels (two or more)
};

SeedExpansion expand_seeds(const ClusterSet& clusters, const std::vector<Seed>& seeds);

/// CSV `label,address`.
std::vector<Seed> parse_seed_file(std::istream& in);

/// CSV `cluster_id,address`, rows ordered by cluster then address.
void write_cluster_dump(const ClusterSet& clusters, std::ostream& out);
ClusterSet read_cluster_dump(std::istream& in);

}  // namespace ponzi::cluster
