#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ponzi/dataset.hpp"

namespace ponzi::learn {

/// Dense row-major feature matrix with binary labels (1 = P).
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;
    std::vector<std::uint8_t> labels;

    std::span<const double> row(std::size_t i) const { return {values.data() + i * cols, cols}; }
    double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

Matrix to_matrix(const data::Dataset& dataset);

/// Misclassification costs; the diagonal is zero.
class CostMatrix {
public:
    CostMatrix() = default;
    /// Throws DataError unless both costs are positive and finite.
    CostMatrix(double false_negative, double false_positive);

    /// Parses "fn:fp", e.g. "20:1".
    static CostMatrix parse(std::string_view spec);

    double false_negative() const noexcept { return c_fn_; }
    double false_positive() const noexcept { return c_fp_; }
    /// Minimum expected cost decision boundary c_fp / (c_fp + c_fn).
    double threshold() const noexcept { return c_fp_ / (c_fp_ + c_fn_); }
    std::string to_string() const;

    friend bool operator==(const CostMatrix&, const CostMatrix&) = default;

private:
    double c_fn_ = 1.0;
    double c_fp_ = 1.0;
};

/// Predicts P iff p >= threshold (ties go to the rare class).
data::Label cost_sensitive_predict(double p_ponzi, const CostMatrix& cm);

/// How a cost matrix enters learning: by thresholding predicted
/// probabilities, or by weighting training instances (P by c_fn, nP by c_fp)
/// and then using the cost-blind 0.5 boundary.
enum class CostMode { threshold, reweight };

struct Undersampled {
    std::vector<std::size_t> rows;  // ascending
    std::vector<std::string> warnings;
};

/// Keeps every P row and floor(ratio * |P|) nP rows chosen uniformly without
/// replacement. Throws DataError for ratio < 1 or when no P row is present.
Undersampled undersample_rows(std::span<const std::uint8_t> labels, std::span<const std::size_t> rows, double ratio,
                              std::uint64_t seed);
data::Dataset undersample(const data::Dataset& dataset, double ratio, std::uint64_t seed,
                          std::vector<std::string>* warnings = nullptr);

struct TreeParams {
    std::size_t features_per_split = 0;  // 0: floor(log2 F) + 1
    std::size_t min_leaf = 1;
    std::size_t max_depth = 0;  // 0: unlimited

    friend bool operator==(const TreeParams&, const TreeParams&) = default;
};

std::size_t default_features_per_split(std::size_t n_features);

struct TreeNode {
    std::int32_t feature = -1;  // -1 marks a leaf
    double threshold = 0;       // x[feature] <= threshold goes left
    std::uint32_t left = 0;
    std::uint32_t right = 0;
    double weight_ponzi = 0;  // training weight reaching the node, per class
    double weight_other = 0;

    bool is_leaf() const noexcept { return feature < 0; }
    friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

class TreeModel {
public:
    TreeModel() = default;
    TreeModel(std::vector<TreeNode> nodes, std::size_t n_features);

    /// P-frequency of the leaf reached by x.
    double predict_proba(std::span<const double> x) const;
    const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
    std::size_t n_features() const noexcept { return n_features_; }
    std::size_t depth() const;
    std::size_t leaf_count() const;

    friend bool operator==(const TreeModel&, const TreeModel&) = default;

private:
    std::vector<TreeNode> nodes_;
    std::size_t n_features_ = 0;
};

/// CART-style tree: at each node, a random permutation of features is
/// scanned until `features_per_split` non-constant ones have been scored;
/// the split with the largest weighted Gini-impurity decrease wins (zero
/// decrease allowed, so XOR-like layouts still split). Thresholds are
/// midpoints between adjacent distinct values. `rows` may repeat entries
/// (bootstrap); `weights` is empty for unit weights or per-row of the matrix.
TreeModel train_tree(const Matrix& m, std::span<const std::size_t> rows, std::span<const double> weights,
                     const TreeParams& params, std::uint64_t seed);
TreeModel train_tree(const Matrix& m, const TreeParams& params, std::uint64_t seed);

struct ForestParams {
    std::size_t n_trees = 100;
    TreeParams tree;
    bool bootstrap = true;

    friend bool operator==(const ForestParams&, const ForestParams&) = default;
};

struct ForestModel {
    ForestParams params;
    std::uint64_t seed = 0;
    std::size_t n_features = 0;
    std::vector<TreeModel> trees;

    /// Mean of the trees' leaf P-frequencies.
    double predict_proba(std::span<const double> x) const;
    friend bool operator==(const ForestModel&, const ForestModel&) = default;
};

/// Tree t is grown with seed derive_seed(seed, t) on a same-size bootstrap
/// resample. The result is identical for every thread count.
ForestModel train_forest(const Matrix& m, std::span<const std::size_t> rows, std::span<const double> weights,
                         const ForestParams& params, std::uint64_t seed, unsigned threads = 0);
ForestModel train_forest(const Matrix& m, const ForestParams& params, std::uint64_t seed, unsigned threads = 0);

/// Gaussian class-conditional model with independent features.
struct BayesModel {
    double prior_ponzi = 0.5;
    std::vector<double> mean_ponzi, var_ponzi;
    std::vector<double> mean_other, var_other;

    double predict_proba(std::span<const double> x) const;
    friend bool operator==(const BayesModel&, const BayesModel&) = default;
};

inline constexpr double kVarianceFloor = 1e-9;

/// Throws DataError when a class is missing.
BayesModel train_bayes(const Matrix& m, std::span<const std::size_t> rows);
BayesModel train_bayes(const Matrix& m);

/// Always predicts the training majority class (score 1 for P, 0 for nP).
struct MajorityModel {
    double score = 0;
    friend bool operator==(const MajorityModel&, const MajorityModel&) = default;
};

MajorityModel train_majority(const Matrix& m, std::span<const std::size_t> rows);

enum class LearnerKind { forest, bayes, majority };

std::string_view to_string(LearnerKind kind);
LearnerKind parse_learner(std::string_view name);  // throws DataError

struct LearnerSpec {
    LearnerKind kind = LearnerKind::forest;
    ForestParams forest;
};

/// A trained classifier plus the schema and cost rule it was trained for.
class Model {
public:
    using Impl = std::variant<ForestModel, BayesModel, MajorityModel>;

    Model() = default;
    Model(Impl impl, std::size_t n_features, CostMatrix cost, CostMode mode);

    /// Throws DataError when x has the wrong arity.
    double predict_proba(std::span<const double> x) const;
    /// Applies the model's cost rule.
    data::Label predict(std::span<const double> x) const;

    const Impl& impl() const noexcept { return impl_; }
    std::size_t n_features() const noexcept { return n_features_; }
    const std::string& schema() const noexcept { return schema_; }
    const CostMatrix& cost() const noexcept { return cost_; }
    CostMode cost_mode() const noexcept { return mode_; }
    /// Boundary used by predict(): the cost threshold, or 0.5 when costs
    /// were folded into training weights.
    double decision_threshold() const noexcept;
    void set_cost(CostMatrix cost, CostMode mode);

    /// Versioned JSON text format.
    void save(std::ostream& out) const;
    /// Throws DataError on a malformed file or a feature schema mismatch.
    static Model load(std::istream& in);

    friend bool operator==(const Model&, const Model&) = default;

private:
    Impl impl_;
    std::size_t n_features_ = 0;
    std::string schema_{features::kSchemaVersion};
    CostMatrix cost_;
    CostMode mode_ = CostMode::threshold;
};

/// Trains `spec` on the given rows. In reweight mode P rows weigh c_fn and nP
/// rows c_fp: forests grow on weighted impurities, the Bayes prior is
/// reweighted, and the majority baseline compares weighted class totals.
Model train(const Matrix& m, std::span<const std::size_t> rows, const LearnerSpec& spec, const CostMatrix& cost,
            CostMode mode, std::uint64_t seed, unsigned threads = 0);

}  // namespace ponzi::learn
