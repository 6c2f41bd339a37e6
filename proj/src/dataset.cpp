#include "ponzi/dataset.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <unordered_set>

#include <fmt/format.h>

#include "ponzi/csv.hpp"
#include "ponzi/random.hpp"

namespace ponzi::data {

using features::kColumns;
using features::kFeatureCount;

std::string_view to_string(Label label) { return label == Label::ponzi ? "P" : "nP"; }

Label parse_label(std::string_view s) {
    if (s == "P") return Label::ponzi;
    if (s == "nP") return Label::nonponzi;
    throw DataError(fmt::format("invalid class label '{}' (expected P or nP)", s));
}

ClassCounts Dataset::counts() const {
    ClassCounts c;
    for (const auto& inst : instances) {
        if (inst.label == Label::ponzi) {
            ++c.ponzi;
        } else {
            ++c.other;
        }
    }
    return c;
}

void Dataset::check_unique_ids() const {
    std::unordered_set<std::string_view> seen;
    for (const auto& inst : instances) {
        if (!seen.insert(inst.id).second) throw DataError("duplicate instance id " + inst.id);
    }
}

Assembled assemble(const FeatureTable& table, const std::set<std::string>& ponzi_ids) {
    Assembled out;
    std::unordered_set<std::string_view> ids;
    for (const auto& [id, fv] : table) {
        if (!ids.insert(id).second) throw DataError("duplicate cluster id " + id);
    }
    for (const auto& id : ponzi_ids) {
        if (!ids.contains(id)) throw DataError("label for unknown cluster " + id);
    }
    out.dataset.instances.reserve(table.size());
    for (const auto& [id, fv] : table) {
        out.dataset.instances.push_back({id, fv, ponzi_ids.contains(id) ? Label::ponzi : Label::nonponzi});
    }
    const auto counts = out.dataset.counts();
    if (counts.ponzi == 0) out.warnings.push_back("dataset has no P instances; it cannot be used for training");
    if (counts.other == 0) out.warnings.push_back("dataset has no nP instances; it cannot be used for training");
    return out;
}

std::vector<std::size_t> sample_background(std::size_t population, std::size_t n, std::uint64_t seed,
                                           const std::set<std::size_t>& exclude) {
    std::vector<std::size_t> candidates;
    candidates.reserve(population);
    for (std::size_t i = 0; i < population; ++i) {
        if (!exclude.contains(i)) candidates.push_back(i);
    }
    if (n > candidates.size()) {
        throw DataError(fmt::format("cannot sample {} background clusters: only {} available", n, candidates.size()));
    }
    Rng rng(seed);
    auto picks = rng.sample_without_replacement(candidates.size(), n);
    std::vector<std::size_t> out;
    out.reserve(n);
    for (std::size_t p : picks) out.push_back(candidates[p]);
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::size_t> sample_background(const cluster::ClusterSet& clusters, std::size_t n,
                                           std::uint64_t seed, const std::set<std::size_t>& exclude) {
    return sample_background(clusters.cluster_count(), n, seed, exclude);
}

namespace {

std::string schema_cell() { return "schema=" + std::string(features::kSchemaVersion); }

void append_features(std::string& line, const features::FeatureVector& fv) {
    const auto values = features::to_values(fv);
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
        line.push_back(',');
        if (kColumns[i].kind == features::ColumnKind::integer) {
            line += std::to_string(*features::integer_field(fv, i));
        } else {
            line += csv::format_real(values[i]);
        }
    }
}

features::FeatureVector parse_features(const std::vector<std::string>& cells, std::size_t first,
                                       std::size_t line_no, std::size_t row) {
    std::array<double, kFeatureCount> values{};
    std::array<std::int64_t, kFeatureCount> exact{};
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
        const std::string& cell = cells[first + i];
        bool ok;
        if (kColumns[i].kind == features::ColumnKind::integer) {
            ok = csv::parse_int(cell, exact[i]);
            values[i] = static_cast<double>(exact[i]);
        } else {
            ok = csv::parse_double(cell, values[i]);
        }
        if (!ok) {
            throw ParseError(line_no, first + i + 1,
                             fmt::format("malformed row {}: bad value '{}' for {}", row, cell, kColumns[i].name));
        }
    }
    try {
        auto fv = features::from_values(values);
        for (std::size_t i = 0; i < kFeatureCount; ++i) {
            if (auto* field = features::integer_field(fv, i)) *field = exact[i];
        }
        return fv;
    } catch (const std::invalid_argument& e) {
        throw ParseError(line_no, 0, fmt::format("malformed row {}: {}", row, e.what()));
    }
}

void check_header(const std::vector<std::string>& cells, bool labeled, std::size_t line_no) {
    if (cells.empty() || cells[0].rfind("schema=", 0) != 0) {
        throw ParseError(line_no, 1, "missing schema cell in header");
    }
    if (cells[0] != schema_cell()) {
        throw DataError(fmt::format("schema mismatch: file has '{}', expected '{}'", cells[0], schema_cell()));
    }
    std::vector<std::string> expected{schema_cell(), "id"};
    if (labeled) expected.emplace_back("label");
    for (const auto& c : kColumns) expected.emplace_back(c.name);
    if (cells != expected) throw DataError("schema mismatch: header columns differ from schema " + schema_cell());
}

template <typename RowFn>
void read_rows(std::istream& in, bool labeled, RowFn&& on_row) {
    const std::size_t width = kFeatureCount + (labeled ? 3 : 2);
    std::string line;
    std::size_t line_no = 0;
    std::size_t row = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++line_no;
        auto cells = csv::split(line, line_no);
        if (cells.size() == 1 && cells[0].empty()) continue;
        if (!header) {
            check_header(cells, labeled, line_no);
            header = true;
            continue;
        }
        if (cells.size() != width) {
            throw ParseError(line_no, 0,
                             fmt::format("malformed row {}: expected {} cells, got {}", row, width, cells.size()));
        }
        if (!cells[0].empty()) throw ParseError(line_no, 1, fmt::format("malformed row {}: schema cell must be empty", row));
        if (cells[1].empty()) throw ParseError(line_no, 2, fmt::format("malformed row {}: empty id", row));
        on_row(cells, line_no, row);
        ++row;
    }
    if (!header) throw DataError("empty file: missing header");
}

}  // namespace

void write_csv(const Dataset& dataset, std::ostream& out) {
    if (dataset.schema != features::kSchemaVersion) throw DataError("unknown schema version " + dataset.schema);
    std::string header = schema_cell() + ",id,label";
    for (const auto& c : kColumns) header += "," + std::string(c.name);
    out << header << '\n';
    for (const auto& inst : dataset.instances) {
        std::string line = "," + csv::escape(inst.id) + "," + std::string(to_string(inst.label));
        append_features(line, inst.features);
        out << line << '\n';
    }
}

Dataset read_csv(std::istream& in) {
    Dataset ds;
    read_rows(in, true, [&](const std::vector<std::string>& cells, std::size_t line_no, std::size_t row) {
        Label label;
        try {
            label = parse_label(cells[2]);
        } catch (const DataError& e) {
            throw ParseError(line_no, 3, fmt::format("malformed row {}: {}", row, e.what()));
        }
        ds.instances.push_back({cells[1], parse_features(cells, 3, line_no, row), label});
    });
    ds.check_unique_ids();
    return ds;
}

void write_feature_table(const FeatureTable& table, std::ostream& out) {
    std::string header = schema_cell() + ",id";
    for (const auto& c : kColumns) header += "," + std::string(c.name);
    out << header << '\n';
    for (const auto& [id, fv] : table) {
        std::string line = "," + csv::escape(id);
        append_features(line, fv);
        out << line << '\n';
    }
}

FeatureTable read_feature_table(std::istream& in) {
    FeatureTable table;
    read_rows(in, false, [&](const std::vector<std::string>& cells, std::size_t line_no, std::size_t row) {
        table.emplace_back(cells[1], parse_features(cells, 2, line_no, row));
    });
    return table;
}

}  // namespace ponzi::data
