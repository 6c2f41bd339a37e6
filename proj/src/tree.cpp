#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "ponzi/learn.hpp"
#include "ponzi/parallel.hpp"
#include "ponzi/random.hpp"

namespace ponzi::learn {

std::size_t default_features_per_split(std::size_t n_features) {
    if (n_features == 0) return 0;
    return static_cast<std::size_t>(std::bit_width(n_features) - 1) + 1;  // floor(log2 F) + 1
}

TreeModel::TreeModel(std::vector<TreeNode> nodes, std::size_t n_features)
    : nodes_(std::move(nodes)), n_features_(n_features) {
    if (nodes_.empty()) throw DataError("tree without nodes");
    for (const auto& n : nodes_) {
        if (n.is_leaf()) continue;
        if (static_cast<std::size_t>(n.feature) >= n_features_ || n.left >= nodes_.size() ||
            n.right >= nodes_.size() || !std::isfinite(n.threshold)) {
            throw DataError("malformed tree node");
        }
    }
}

double TreeModel::predict_proba(std::span<const double> x) const {
    std::uint32_t i = 0;
    while (!nodes_[i].is_leaf()) {
        const auto& n = nodes_[i];
        i = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    }
    const auto& leaf = nodes_[i];
    const double total = leaf.weight_ponzi + leaf.weight_other;
    return total > 0 ? leaf.weight_ponzi / total : 0.0;
}

std::size_t TreeModel::depth() const {
    std::vector<std::pair<std::uint32_t, std::size_t>> stack{{0, 0}};
    std::size_t deepest = 0;
    while (!stack.empty()) {
        auto [i, d] = stack.back();
        stack.pop_back();
        deepest = std::max(deepest, d);
        if (!nodes_[i].is_leaf()) {
            stack.emplace_back(nodes_[i].left, d + 1);
            stack.emplace_back(nodes_[i].right, d + 1);
        }
    }
    return deepest;
}

std::size_t TreeModel::leaf_count() const {
    return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

namespace {

struct Item {
    double value;
    double weight;
    std::uint8_t label;
};

struct Split {
    std::int32_t feature = -1;
    double threshold = 0;
    double score = -1;  // sum over children of (wP^2 + wN^2) / W; larger is purer
};

class TreeBuilder {
public:
    TreeBuilder(const Matrix& m, std::span<const double> weights, const TreeParams& params, std::uint64_t seed)
        : m_(m), weights_(weights), params_(params), rng_(seed) {
        k_ = params.features_per_split == 0 ? default_features_per_split(m.cols)
                                            : std::min(params.features_per_split, m.cols);
        order_.resize(m.cols);
    }

    TreeModel build(std::span<const std::size_t> rows) {
        index_.assign(rows.begin(), rows.end());
        struct Pending {
            std::uint32_t node;
            std::size_t begin, end, depth;
        };
        nodes_.push_back(make_node(0, index_.size()));
        std::vector<Pending> stack{{0, 0, index_.size(), 0}};
        while (!stack.empty()) {
            const Pending p = stack.back();
            stack.pop_back();
            const TreeNode& node = nodes_[p.node];
            const std::size_t count = p.end - p.begin;
            if (node.weight_ponzi <= 0 || node.weight_other <= 0) continue;  // pure
            if (count < 2 * params_.min_leaf) continue;
            if (params_.max_depth != 0 && p.depth >= params_.max_depth) continue;

            const Split split = find_split(p.begin, p.end);
            if (split.feature < 0) continue;

            auto mid = std::partition(index_.begin() + static_cast<std::ptrdiff_t>(p.begin),
                                      index_.begin() + static_cast<std::ptrdiff_t>(p.end), [&](std::size_t r) {
                                          return m_.at(r, static_cast<std::size_t>(split.feature)) <= split.threshold;
                                      });
            const std::size_t cut = static_cast<std::size_t>(mid - index_.begin());
            const auto left = static_cast<std::uint32_t>(nodes_.size());
            nodes_.push_back(make_node(p.begin, cut));
            const auto right = static_cast<std::uint32_t>(nodes_.size());
            nodes_.push_back(make_node(cut, p.end));
            nodes_[p.node].feature = split.feature;
            nodes_[p.node].threshold = split.threshold;
            nodes_[p.node].left = left;
            nodes_[p.node].right = right;
            stack.push_back({right, cut, p.end, p.depth + 1});
            stack.push_back({left, p.begin, cut, p.depth + 1});
        }
        return TreeModel(std::move(nodes_), m_.cols);
    }

private:
    double weight(std::size_t r) const { return weights_.empty() ? 1.0 : weights_[r]; }

    TreeNode make_node(std::size_t begin, std::size_t end) const {
        TreeNode n;
        for (std::size_t i = begin; i < end; ++i) {
            const std::size_t r = index_[i];
            (m_.labels[r] ? n.weight_ponzi : n.weight_other) += weight(r);
        }
        return n;
    }

    Split find_split(std::size_t begin, std::size_t end) {
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        rng_.shuffle(std::span<std::size_t>(order_));

        Split best;
        std::size_t scored = 0;
        for (std::size_t f : order_) {
            if (scored == k_) break;
            items_.clear();
            for (std::size_t i = begin; i < end; ++i) {
                const std::size_t r = index_[i];
                items_.push_back({m_.at(r, f), weight(r), m_.labels[r]});
            }
            std::sort(items_.begin(), items_.end(), [](const Item& a, const Item& b) { return a.value < b.value; });
            if (items_.front().value == items_.back().value) continue;  // constant here
            ++scored;

            double total_p = 0, total_n = 0;
            for (const auto& it : items_) (it.label ? total_p : total_n) += it.weight;

            double left_p = 0, left_n = 0;
            const std::size_t n = items_.size();
            for (std::size_t i = 0; i + 1 < n; ++i) {
                (items_[i].label ? left_p : left_n) += items_[i].weight;
                if (items_[i].value == items_[i + 1].value) continue;
                if (i + 1 < params_.min_leaf || n - i - 1 < params_.min_leaf) continue;
                const double wl = left_p + left_n;
                const double right_p = total_p - left_p;
                const double right_n = total_n - left_n;
                const double wr = right_p + right_n;
                if (wl <= 0 || wr <= 0) continue;
                const double score = (left_p * left_p + left_n * left_n) / wl + (right_p * right_p + right_n * right_n) / wr;
                if (score > best.score) {
                    best.score = score;
                    best.feature = static_cast<std::int32_t>(f);
                    best.threshold = midpoint(items_[i].value, items_[i + 1].value);
                }
            }
        }
        return best;
    }

    static double midpoint(double a, double b) {
        const double mid = a + (b - a) / 2;
        return (mid >= b || mid < a) ? a : mid;
    }

    const Matrix& m_;
    std::span<const double> weights_;
    TreeParams params_;
    Rng rng_;
    std::size_t k_ = 0;
    std::vector<std::size_t> order_;
    std::vector<std::size_t> index_;
    std::vector<Item> items_;
    std::vector<TreeNode> nodes_;
};

}  // namespace

TreeModel train_tree(const Matrix& m, std::span<const std::size_t> rows, std::span<const double> weights,
                     const TreeParams& params, std::uint64_t seed) {
    if (m.cols == 0) throw DataError("cannot train a tree without features");
    if (rows.empty()) throw DataError("cannot train a tree on zero rows");
    if (!weights.empty() && weights.size() != m.rows) throw DataError("weights must cover every matrix row");
    if (params.min_leaf == 0) throw DataError("min leaf size must be at least 1");
    return TreeBuilder(m, weights, params, seed).build(rows);
}

TreeModel train_tree(const Matrix& m, const TreeParams& params, std::uint64_t seed) {
    std::vector<std::size_t> rows(m.rows);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return train_tree(m, rows, {}, params, seed);
}

double ForestModel::predict_proba(std::span<const double> x) const {
    if (trees.empty()) return 0.0;
    double sum = 0;
    for (const auto& t : trees) sum += t.predict_proba(x);
    return sum / static_cast<double>(trees.size());
}

ForestModel train_forest(const Matrix& m, std::span<const std::size_t> rows, std::span<const double> weights,
                         const ForestParams& params, std::uint64_t seed, unsigned threads) {
    if (params.n_trees == 0) throw DataError("forest needs at least one tree");
    ForestModel forest;
    forest.params = params;
    forest.seed = seed;
    forest.n_features = m.cols;
    forest.trees.resize(params.n_trees);
    parallel_for(params.n_trees, threads, [&](std::size_t t) {
        const std::uint64_t tree_seed = derive_seed(seed, t);
        if (!params.bootstrap) {
            forest.trees[t] = train_tree(m, rows, weights, params.tree, tree_seed);
            return;
        }
        Rng draw(derive_seed(tree_seed, 0xb0075));
        std::vector<std::size_t> sample(rows.size());
        for (auto& s : sample) s = rows[draw.below(rows.size())];
        forest.trees[t] = train_tree(m, sample, weights, params.tree, tree_seed);
    });
    return forest;
}

ForestModel train_forest(const Matrix& m, const ForestParams& params, std::uint64_t seed, unsigned threads) {
    std::vector<std::size_t> rows(m.rows);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return train_forest(m, rows, {}, params, seed, threads);
}

}  // namespace ponzi::learn
