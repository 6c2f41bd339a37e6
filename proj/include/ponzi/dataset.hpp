#pragma once

#include <cstdint>
#include <iosfwd>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ponzi/clustering.hpp"
#include "ponzi/features.hpp"

namespace ponzi::data {

enum class Label : std::uint8_t { nonponzi = 0, ponzi = 1 };

/// "P" / "nP".
std::string_view to_string(Label label);
Label parse_label(std::string_view s);  // throws DataError

struct Instance {
    std::string id;
    features::FeatureVector features;
    Label label = Label::nonponzi;

    friend bool operator==(const Instance&, const Instance&) = default;
};

struct ClassCounts {
    std::size_t ponzi = 0;
    std::size_t other = 0;

    std::size_t total() const noexcept { return ponzi + other; }
    friend bool operator==(const ClassCounts&, const ClassCounts&) = default;
};

struct Dataset {
    std::string schema{features::kSchemaVersion};
    std::vector<Instance> instances;

    ClassCounts counts() const;
    std::size_t size() const noexcept { return instances.size(); }
    /// Throws DataError on duplicate ids.
    void check_unique_ids() const;

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

using FeatureTable = std::vector<std::pair<std::string, features::FeatureVector>>;

struct Assembled {
    Dataset dataset;
    std::vector<std::string> warnings;
};

/// Instances keep the order of `table`; ids in `ponzi_ids` are labeled P and
/// everything else nP. Throws DataError on duplicate ids or a P label for an
/// id not in the table.
Assembled assemble(const FeatureTable& table, const std::set<std::string>& ponzi_ids);

/// Uniform sample of n indices from [0, population) minus `exclude`, without
/// replacement, returned ascending. Throws DataError when n exceeds what is
/// available.
std::vector<std::size_t> sample_background(std::size_t population, std::size_t n, std::uint64_t seed,
                                           const std::set<std::size_t>& exclude);
std::vector<std::size_t> sample_background(const cluster::ClusterSet& clusters, std::size_t n,
                                           std::uint64_t seed, const std::set<std::size_t>& exclude);

/// `schema=v1,id,label,<features>`; data rows leave the schema cell empty.
void write_csv(const Dataset& dataset, std::ostream& out);
Dataset read_csv(std::istream& in);

/// Unlabeled variant, `schema=v1,id,<features>`, produced by feature extraction.
void write_feature_table(const FeatureTable& table, std::ostream& out);
FeatureTable read_feature_table(std::istream& in);

}  // namespace ponzi::data
