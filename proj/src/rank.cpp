#include "ponzi/rank.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include <fmt/format.h>

#include "ponzi/csv.hpp"
#include "ponzi/error.hpp"
#include "ponzi/parallel.hpp"
#include "ponzi/random.hpp"

namespace ponzi::rank {

namespace {

double midpoint(double a, double b) {
    const double mid = a + (b - a) / 2;
    return (mid >= b || mid < a) ? a : mid;
}

}  // namespace

Binning discretize(std::span<const double> column, std::size_t bins) {
    if (bins < 2) throw DataError("discretization needs at least 2 bins");
    Binning out;
    const std::size_t n = column.size();
    std::vector<double> sorted(column.begin(), column.end());
    std::sort(sorted.begin(), sorted.end());

    std::size_t last_cut = 0;
    for (std::size_t b = 1; b < bins; ++b) {
        std::size_t pos = b * n / bins;
        if (pos <= last_cut) pos = last_cut + 1;
        if (pos >= n) break;
        // slide forward past values tied with the one just before the cut
        pos = static_cast<std::size_t>(std::upper_bound(sorted.begin() + static_cast<std::ptrdiff_t>(pos),
                                                        sorted.end(), sorted[pos - 1]) -
                                       sorted.begin());
        if (pos >= n) break;
        out.edges.push_back(midpoint(sorted[pos - 1], sorted[pos]));
        last_cut = pos;
    }

    out.labels.reserve(n);
    for (double v : column) {
        out.labels.push_back(
            static_cast<std::uint32_t>(std::lower_bound(out.edges.begin(), out.edges.end(), v) - out.edges.begin()));
    }
    return out;
}

double entropy(std::span<const std::size_t> counts) {
    const double total = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::size_t{0}));
    if (total <= 0) return 0;
    double h = 0;
    for (std::size_t c : counts) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / total;
        h -= p * std::log2(p);
    }
    return h;
}

namespace {

std::vector<std::size_t> value_counts(std::span<const std::uint32_t> x) {
    std::vector<std::size_t> counts;
    for (auto v : x) {
        if (v >= counts.size()) counts.resize(v + 1, 0);
        ++counts[v];
    }
    return counts;
}

struct Contingency {
    std::vector<std::size_t> x;        // per bin
    std::vector<std::size_t> ponzi;    // per bin
    std::size_t y[2] = {0, 0};
};

Contingency contingency(std::span<const std::uint32_t> x, std::span<const std::uint8_t> y) {
    if (x.size() != y.size()) throw DataError("feature and class columns differ in length");
    Contingency c;
    c.x = value_counts(x);
    c.ponzi.assign(c.x.size(), 0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const bool p = y[i] != 0;
        ++c.y[p ? 1 : 0];
        if (p) ++c.ponzi[x[i]];
    }
    return c;
}

double class_entropy(const Contingency& c) { return entropy(std::span<const std::size_t>(c.y, 2)); }

double info_gain(const Contingency& c) {
    const double n = static_cast<double>(c.y[0] + c.y[1]);
    if (n == 0) return 0;
    double conditional = 0;
    for (std::size_t b = 0; b < c.x.size(); ++b) {
        if (c.x[b] == 0) continue;
        const std::size_t cell[2] = {c.x[b] - c.ponzi[b], c.ponzi[b]};
        conditional += static_cast<double>(c.x[b]) / n * entropy(std::span<const std::size_t>(cell, 2));
    }
    return std::max(0.0, class_entropy(c) - conditional);
}

}  // namespace

double entropy(std::span<const std::uint32_t> x) {
    const auto counts = value_counts(x);
    return entropy(std::span<const std::size_t>(counts));
}

double info_gain(std::span<const std::uint32_t> x, std::span<const std::uint8_t> y) {
    return info_gain(contingency(x, y));
}

double gain_ratio(std::span<const std::uint32_t> x, std::span<const std::uint8_t> y) {
    const auto c = contingency(x, y);
    const double hx = entropy(std::span<const std::size_t>(c.x));
    if (hx <= 0) return 0;
    return std::min(1.0, info_gain(c) / hx);
}

double sym_uncertainty(std::span<const std::uint32_t> x, std::span<const std::uint8_t> y) {
    const auto c = contingency(x, y);
    const double denom = entropy(std::span<const std::size_t>(c.x)) + class_entropy(c);
    if (denom <= 0) return 0;
    return std::min(1.0, 2 * info_gain(c) / denom);
}

double one_r(std::span<const std::uint32_t> x, std::span<const std::uint8_t> y) {
    const auto c = contingency(x, y);
    if (x.empty()) return 0;
    std::size_t correct = 0;
    for (std::size_t b = 0; b < c.x.size(); ++b) correct += std::max(c.ponzi[b], c.x[b] - c.ponzi[b]);
    return static_cast<double>(correct) / static_cast<double>(x.size());
}

ReliefResult relieff(const learn::Matrix& m, const ReliefParams& params, unsigned threads) {
    if (params.k == 0) throw DataError("ReliefF needs k >= 1");
    if (params.m > m.rows) throw DataError(fmt::format("ReliefF sample size {} exceeds {} instances", params.m, m.rows));
    ReliefResult result;
    result.weights.assign(m.cols, 0.0);
    if (m.rows == 0 || m.cols == 0) return result;

    std::vector<double> norm(m.values.size(), 0.0);
    for (std::size_t f = 0; f < m.cols; ++f) {
        double lo = m.at(0, f), hi = lo;
        for (std::size_t r = 1; r < m.rows; ++r) {
            lo = std::min(lo, m.at(r, f));
            hi = std::max(hi, m.at(r, f));
        }
        if (hi <= lo) continue;
        for (std::size_t r = 0; r < m.rows; ++r) norm[r * m.cols + f] = (m.at(r, f) - lo) / (hi - lo);
    }

    std::size_t class_size[2] = {0, 0};
    for (auto l : m.labels) ++class_size[l ? 1 : 0];
    for (int cls : {1, 0}) {
        if (class_size[cls] > 0 && class_size[cls] < params.k + 1) {
            result.notes.push_back(fmt::format("class {} has {} instances; using all available neighbours",
                                               cls ? "P" : "nP", class_size[cls]));
        }
    }

    std::vector<std::size_t> sample;
    if (params.m == 0 || params.m == m.rows) {
        sample.resize(m.rows);
        std::iota(sample.begin(), sample.end(), std::size_t{0});
    } else {
        Rng rng(params.seed);
        sample = rng.sample_without_replacement(m.rows, params.m);
        std::sort(sample.begin(), sample.end());
    }

    const std::size_t cols = m.cols;
    std::vector<double> contrib(sample.size() * cols, 0.0);
    parallel_for(sample.size(), threads, [&](std::size_t s) {
        const std::size_t i = sample[s];
        const double* xi = norm.data() + i * cols;
        std::vector<std::pair<double, std::size_t>> hits, misses;
        for (std::size_t j = 0; j < m.rows; ++j) {
            if (j == i) continue;
            const double* xj = norm.data() + j * cols;
            double d = 0;
            for (std::size_t f = 0; f < cols; ++f) d += std::abs(xi[f] - xj[f]);
            ((m.labels[j] != 0) == (m.labels[i] != 0) ? hits : misses).emplace_back(d, j);
        }
        double* out = contrib.data() + s * cols;
        const auto accumulate = [&](std::vector<std::pair<double, std::size_t>>& pool, double sign) {
            const std::size_t take = std::min(params.k, pool.size());
            if (take == 0) return;
            std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take), pool.end());
            for (std::size_t t = 0; t < take; ++t) {
                const double* xj = norm.data() + pool[t].second * cols;
                for (std::size_t f = 0; f < cols; ++f) {
                    out[f] += sign * std::abs(xi[f] - xj[f]) / static_cast<double>(take);
                }
            }
        };
        accumulate(misses, 1.0);
        accumulate(hits, -1.0);
    });

    for (std::size_t s = 0; s < sample.size(); ++s) {
        for (std::size_t f = 0; f < cols; ++f) result.weights[f] += contrib[s * cols + f];
    }
    for (auto& w : result.weights) w /= static_cast<double>(sample.size());
    return result;
}

Ranking make_ranking(std::string method, std::span<const double> scores, std::span<const std::string> names) {
    if (scores.size() != names.size()) throw DataError("one score per feature name is required");
    Ranking r;
    r.method = std::move(method);
    for (std::size_t f = 0; f < scores.size(); ++f) {
        if (!std::isfinite(scores[f])) throw DataError(fmt::format("non-finite {} score for {}", r.method, names[f]));
        r.entries.push_back({f, names[f], scores[f]});
    }
    std::stable_sort(r.entries.begin(), r.entries.end(),
                     [](const RankEntry& a, const RankEntry& b) { return a.score > b.score; });
    return r;
}

RankResult rank_features(const learn::Matrix& m, std::span<const std::string> names, const RankConfig& config) {
    if (names.size() != m.cols) throw DataError("one name per feature column is required");
    for (const auto& method : config.methods) {
        if (std::find(std::begin(kMethods), std::end(kMethods), method) == std::end(kMethods)) {
            throw DataError(fmt::format("unknown ranking method '{}'", method));
        }
    }
    RankResult result;
    const bool wants_bins = std::any_of(config.methods.begin(), config.methods.end(),
                                        [](const std::string& s) { return s != "relieff"; });
    std::vector<std::vector<std::uint32_t>> binned(m.cols);
    if (wants_bins) {
        parallel_for(m.cols, config.threads, [&](std::size_t f) {
            std::vector<double> column(m.rows);
            for (std::size_t r = 0; r < m.rows; ++r) column[r] = m.at(r, f);
            binned[f] = discretize(column, config.bins).labels;
        });
    }

    for (const auto& method : config.methods) {
        std::vector<double> scores(m.cols, 0.0);
        if (method == "relieff") {
            auto relief = relieff(m, config.relief, config.threads);
            scores = std::move(relief.weights);
            for (auto& n : relief.notes) result.notes.push_back("relieff: " + n);
        } else {
            using Scorer = double (*)(std::span<const std::uint32_t>, std::span<const std::uint8_t>);
            const Scorer scorer = method == "info_gain"         ? static_cast<Scorer>(&info_gain)
                                  : method == "gain_ratio"      ? static_cast<Scorer>(&gain_ratio)
                                  : method == "sym_uncertainty" ? static_cast<Scorer>(&sym_uncertainty)
                                                                : static_cast<Scorer>(&one_r);
            parallel_for(m.cols, config.threads, [&](std::size_t f) { scores[f] = scorer(binned[f], m.labels); });
        }
        result.rankings.push_back(make_ranking(method, scores, names));
    }
    return result;
}

RankResult rank_features(const data::Dataset& dataset, const RankConfig& config) {
    std::vector<std::string> names;
    for (const auto& c : features::kColumns) names.emplace_back(c.name);
    return rank_features(learn::to_matrix(dataset), names, config);
}

std::vector<ConsensusEntry> consensus_rank(std::span<const Ranking> rankings, std::size_t top_n) {
    if (rankings.empty()) throw DataError("consensus needs at least one ranking");
    const std::size_t n = rankings.front().entries.size();
    std::vector<ConsensusEntry> out(n);
    std::vector<double> rank_sum(n, 0.0);
    std::vector<bool> named(n, false);
    for (const auto& r : rankings) {
        if (r.entries.size() != n) throw DataError("rankings cover different feature sets");
        std::vector<bool> seen(n, false);
        for (std::size_t pos = 0; pos < n; ++pos) {
            const auto& e = r.entries[pos];
            if (e.feature >= n || seen[e.feature]) throw DataError("rankings cover different feature sets");
            seen[e.feature] = true;
            if (!named[e.feature]) {
                out[e.feature].feature = e.feature;
                out[e.feature].name = e.name;
                named[e.feature] = true;
            }
            if (pos < top_n) ++out[e.feature].count;
            rank_sum[e.feature] += static_cast<double>(pos + 1);
        }
    }
    for (std::size_t f = 0; f < n; ++f) out[f].mean_rank = rank_sum[f] / static_cast<double>(rankings.size());
    std::sort(out.begin(), out.end(), [](const ConsensusEntry& a, const ConsensusEntry& b) {
        if (a.count != b.count) return a.count > b.count;
        if (a.mean_rank != b.mean_rank) return a.mean_rank < b.mean_rank;
        return a.feature < b.feature;
    });
    return out;
}

void write_rank_csv(std::span<const Ranking> rankings, std::span<const ConsensusEntry> consensus, std::ostream& out) {
    out << "method,feature,score,rank\n";
    for (const auto& r : rankings) {
        for (std::size_t pos = 0; pos < r.entries.size(); ++pos) {
            const auto& e = r.entries[pos];
            out << csv::escape(r.method) << ',' << csv::escape(e.name) << ',' << csv::format_real(e.score) << ','
                << pos + 1 << '\n';
        }
    }
    for (std::size_t pos = 0; pos < consensus.size(); ++pos) {
        out << "consensus," << csv::escape(consensus[pos].name) << ',' << consensus[pos].count << ',' << pos + 1
            << '\n';
    }
}

}  // namespace ponzi::rank
