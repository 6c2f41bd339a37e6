#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ponzi/learn.hpp"

namespace ponzi::rank {

struct Binning {
    std::vector<double> edges;          // ascending; value <= edges[i] falls in bin i or below
    std::vector<std::uint32_t> labels;  // bin per row

    std::size_t bins() const noexcept { return edges.size() + 1; }
};

/// Equal-frequency binning. Cut points sit at the ideal quantile positions,
/// moved forward past runs of tied values, with edges at midpoints between
/// adjacent distinct values. Tied columns yield fewer, non-empty bins; a
/// constant column yields one. Throws DataError for bins < 2.
Binning discretize(std::span<const double> column, std::size_t bins);

/// Shannon entropy in bits of a count table.
double entropy(std::span<const std::size_t> counts);
double entropy(std::span<const std::uint32_t> x);

/// H(Y) - H(Y|X) in bits, clamped at 0.
double info_gain(std::span<const std::uint32_t> x, std::span<const std::uint8_t> y);
/// IG / H(X); 0 when H(X) = 0.
double gain_ratio(std::span<const std::uint32_t> x, std::span<const std::uint8_t> y);
/// 2 IG / (H(X) + H(Y)); 0 when both entropies vanish.
double sym_uncertainty(std::span<const std::uint32_t> x, std::span<const std::uint8_t> y);
/// Training accuracy of the rule mapping each bin to its majority class (ties to P).
double one_r(std::span<const std::uint32_t> x, std::span<const std::uint8_t> y);

struct ReliefParams {
    std::size_t k = 10;
    std::size_t m = 0;  // sampled instances; 0 means all
    std::uint64_t seed = 1;
};

struct ReliefResult {
    std::vector<double> weights;
    std::vector<std::string> notes;
};

/// ReliefF on min-max normalized features with Manhattan distance. Neighbour
/// ties are broken by row index. Sampled instances are processed in parallel
/// and their contributions summed in sample order.
ReliefResult relieff(const learn::Matrix& m, const ReliefParams& params, unsigned threads = 0);

struct RankEntry {
    std::size_t feature = 0;
    std::string name;
    double score = 0;
};

struct Ranking {
    std::string method;
    std::vector<RankEntry> entries;  // score descending, ties by feature index
};

/// Orders `scores` (one per feature). Throws DataError on non-finite scores.
Ranking make_ranking(std::string method, std::span<const double> scores, std::span<const std::string> names);

inline constexpr std::string_view kMethods[] = {"info_gain", "gain_ratio", "sym_uncertainty", "one_r", "relieff"};

struct RankConfig {
    std::vector<std::string> methods{std::begin(kMethods), std::end(kMethods)};
    std::size_t bins = 10;
    ReliefParams relief;
    unsigned threads = 0;
};

struct RankResult {
    std::vector<Ranking> rankings;
    std::vector<std::string> notes;
};

RankResult rank_features(const learn::Matrix& m, std::span<const std::string> names, const RankConfig& config);
RankResult rank_features(const data::Dataset& dataset, const RankConfig& config);

struct ConsensusEntry {
    std::size_t feature = 0;
    std::string name;
    std::size_t count = 0;  // rankings placing the feature in their top_n
    double mean_rank = 0;   // 1-based, over all rankings
};

/// Orders features by top_n occurrences, then mean rank, then feature index.
/// Throws DataError when rankings is empty or the rankings cover different
/// feature sets.
std::vector<ConsensusEntry> consensus_rank(std::span<const Ranking> rankings, std::size_t top_n = 8);

/// CSV `method,feature,score,rank`; consensus rows use method "consensus"
/// and the occurrence count as score.
void write_rank_csv(std::span<const Ranking> rankings, std::span<const ConsensusEntry> consensus, std::ostream& out);

}  // namespace ponzi::rank
