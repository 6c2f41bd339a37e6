#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>

#include <fmt/format.h>
#include <json.hpp>

#include "ponzi/csv.hpp"
#include "ponzi/learn.hpp"
#include "ponzi/random.hpp"

namespace ponzi::learn {

using nlohmann::json;

Matrix to_matrix(const data::Dataset& dataset) {
    Matrix m;
    m.rows = dataset.size();
    m.cols = features::kFeatureCount;
    m.values.reserve(m.rows * m.cols);
    m.labels.reserve(m.rows);
    for (const auto& inst : dataset.instances) {
        const auto v = features::to_values(inst.features);
        m.values.insert(m.values.end(), v.begin(), v.end());
        m.labels.push_back(inst.label == data::Label::ponzi ? 1 : 0);
    }
    return m;
}

CostMatrix::CostMatrix(double false_negative, double false_positive) : c_fn_(false_negative), c_fp_(false_positive) {
    if (!(c_fn_ > 0) || !(c_fp_ > 0) || !std::isfinite(c_fn_) || !std::isfinite(c_fp_)) {
        throw DataError(fmt::format("cost matrix entries must be positive (got {}:{})", c_fn_, c_fp_));
    }
}

CostMatrix CostMatrix::parse(std::string_view spec) {
    const auto colon = spec.find(':');
    double fn = 0, fp = 0;
    if (colon == std::string_view::npos || !csv::parse_double(spec.substr(0, colon), fn) ||
        !csv::parse_double(spec.substr(colon + 1), fp)) {
        throw DataError(fmt::format("invalid cost '{}': expected <fn>:<fp>, e.g. 20:1", spec));
    }
    return CostMatrix(fn, fp);
}

std::string CostMatrix::to_string() const { return fmt::format("{}:{}", c_fn_, c_fp_); }

data::Label cost_sensitive_predict(double p_ponzi, const CostMatrix& cm) {
    return p_ponzi >= cm.threshold() ? data::Label::ponzi : data::Label::nonponzi;
}

Undersampled undersample_rows(std::span<const std::uint8_t> labels, std::span<const std::size_t> rows, double ratio,
                              std::uint64_t seed) {
    if (!(ratio >= 1)) throw DataError(fmt::format("undersampling ratio must be >= 1 (got {})", ratio));
    Undersampled out;
    std::vector<std::size_t> ponzi, other;
    for (std::size_t r : rows) (labels[r] ? ponzi : other).push_back(r);
    if (ponzi.empty()) throw DataError("cannot undersample: no P instances");

    const double target = std::floor(ratio * static_cast<double>(ponzi.size()));
    std::size_t keep = other.size();
    if (target > static_cast<double>(other.size())) {
        out.warnings.push_back(fmt::format("undersampling 1:{} needs {} nP instances but only {} exist; keeping all",
                                           ratio, target, other.size()));
    } else {
        keep = static_cast<std::size_t>(target);
    }
    Rng rng(seed);
    for (std::size_t i : rng.sample_without_replacement(other.size(), keep)) ponzi.push_back(other[i]);
    std::sort(ponzi.begin(), ponzi.end());
    out.rows = std::move(ponzi);
    return out;
}

data::Dataset undersample(const data::Dataset& dataset, double ratio, std::uint64_t seed,
                          std::vector<std::string>* warnings) {
    std::vector<std::uint8_t> labels;
    for (const auto& inst : dataset.instances) labels.push_back(inst.label == data::Label::ponzi);
    std::vector<std::size_t> rows(dataset.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    auto picked = undersample_rows(labels, rows, ratio, seed);
    if (warnings) warnings->insert(warnings->end(), picked.warnings.begin(), picked.warnings.end());
    data::Dataset out;
    out.schema = dataset.schema;
    for (std::size_t r : picked.rows) out.instances.push_back(dataset.instances[r]);
    return out;
}

BayesModel train_bayes(const Matrix& m, std::span<const std::size_t> rows) {
    const std::size_t F = m.cols;
    std::size_t n[2] = {0, 0};
    std::vector<long double> sum[2] = {std::vector<long double>(F), std::vector<long double>(F)};
    std::vector<long double> global_sum(F);
    for (std::size_t r : rows) {
        const int c = m.labels[r] ? 1 : 0;
        ++n[c];
        for (std::size_t f = 0; f < F; ++f) {
            sum[c][f] += m.at(r, f);
            global_sum[f] += m.at(r, f);
        }
    }
    if (n[0] == 0 || n[1] == 0) throw DataError("Bayes model needs instances of both classes");

    std::vector<long double> mean[2] = {std::vector<long double>(F), std::vector<long double>(F)};
    std::vector<long double> global_mean(F);
    for (std::size_t f = 0; f < F; ++f) {
        for (int c = 0; c < 2; ++c) mean[c][f] = sum[c][f] / n[c];
        global_mean[f] = global_sum[f] / rows.size();
    }
    std::vector<long double> ss[2] = {std::vector<long double>(F), std::vector<long double>(F)};
    std::vector<long double> global_ss(F);
    for (std::size_t r : rows) {
        const int c = m.labels[r] ? 1 : 0;
        for (std::size_t f = 0; f < F; ++f) {
            const long double d = m.at(r, f) - mean[c][f];
            const long double g = m.at(r, f) - global_mean[f];
            ss[c][f] += d * d;
            global_ss[f] += g * g;
        }
    }

    BayesModel model;
    model.prior_ponzi = static_cast<double>(n[1]) / static_cast<double>(n[0] + n[1]);
    for (std::size_t f = 0; f < F; ++f) {
        const double global_var = static_cast<double>(global_ss[f] / rows.size());
        const double floor = global_var > 0 ? kVarianceFloor * global_var : kVarianceFloor;
        model.mean_other.push_back(static_cast<double>(mean[0][f]));
        model.mean_ponzi.push_back(static_cast<double>(mean[1][f]));
        model.var_other.push_back(std::max(floor, static_cast<double>(ss[0][f] / n[0])));
        model.var_ponzi.push_back(std::max(floor, static_cast<double>(ss[1][f] / n[1])));
    }
    return model;
}

BayesModel train_bayes(const Matrix& m) {
    std::vector<std::size_t> rows(m.rows);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return train_bayes(m, rows);
}

double BayesModel::predict_proba(std::span<const double> x) const {
    // log-likelihood difference log p(x, P) - log p(x, nP)
    double diff = std::log(prior_ponzi) - std::log1p(-prior_ponzi);
    for (std::size_t f = 0; f < x.size(); ++f) {
        const double dp = x[f] - mean_ponzi[f];
        const double dn = x[f] - mean_other[f];
        diff += -0.5 * std::log(var_ponzi[f]) - dp * dp / (2 * var_ponzi[f]);
        diff -= -0.5 * std::log(var_other[f]) - dn * dn / (2 * var_other[f]);
    }
    if (std::isnan(diff)) return 0.5;
    const double p = diff >= 0 ? 1.0 / (1.0 + std::exp(-diff)) : std::exp(diff) / (1.0 + std::exp(diff));
    return std::clamp(p, 0.0, 1.0);
}

MajorityModel train_majority(const Matrix& m, std::span<const std::size_t> rows) {
    std::size_t ponzi = 0;
    for (std::size_t r : rows) ponzi += m.labels[r];
    return MajorityModel{2 * ponzi > rows.size() ? 1.0 : 0.0};
}

std::string_view to_string(LearnerKind kind) {
    switch (kind) {
        case LearnerKind::forest: return "forest";
        case LearnerKind::bayes: return "bayes";
        case LearnerKind::majority: return "majority";
    }
    return "forest";
}

LearnerKind parse_learner(std::string_view name) {
    if (name == "forest") return LearnerKind::forest;
    if (name == "bayes") return LearnerKind::bayes;
    if (name == "majority") return LearnerKind::majority;
    throw DataError(fmt::format("unknown learner '{}' (expected forest, bayes or majority)", name));
}

Model::Model(Impl impl, std::size_t n_features, CostMatrix cost, CostMode mode)
    : impl_(std::move(impl)), n_features_(n_features), cost_(cost), mode_(mode) {}

double Model::predict_proba(std::span<const double> x) const {
    if (x.size() != n_features_) {
        throw DataError(fmt::format("schema mismatch: model expects {} features, got {}", n_features_, x.size()));
    }
    return std::visit(
        [&](const auto& m) -> double {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, MajorityModel>) {
                return m.score;
            } else {
                return m.predict_proba(x);
            }
        },
        impl_);
}

double Model::decision_threshold() const noexcept { return mode_ == CostMode::reweight ? 0.5 : cost_.threshold(); }

data::Label Model::predict(std::span<const double> x) const {
    return predict_proba(x) >= decision_threshold() ? data::Label::ponzi : data::Label::nonponzi;
}

void Model::set_cost(CostMatrix cost, CostMode mode) {
    cost_ = cost;
    mode_ = mode;
}

Model train(const Matrix& m, std::span<const std::size_t> rows, const LearnerSpec& spec, const CostMatrix& cost,
            CostMode mode, std::uint64_t seed, unsigned threads) {
    std::size_t ponzi = 0;
    for (std::size_t r : rows) ponzi += m.labels[r];
    if (rows.empty()) throw DataError("cannot train on an empty training set");

    switch (spec.kind) {
        case LearnerKind::forest: {
            std::vector<double> weights;
            if (mode == CostMode::reweight) {
                weights.resize(m.rows);
                for (std::size_t r = 0; r < m.rows; ++r) {
                    weights[r] = m.labels[r] ? cost.false_negative() : cost.false_positive();
                }
            }
            return Model(train_forest(m, rows, weights, spec.forest, seed, threads), m.cols, cost, mode);
        }
        case LearnerKind::bayes: {
            BayesModel b = train_bayes(m, rows);
            if (mode == CostMode::reweight) {
                const double wp = cost.false_negative() * b.prior_ponzi;
                b.prior_ponzi = wp / (wp + cost.false_positive() * (1 - b.prior_ponzi));
            }
            return Model(std::move(b), m.cols, cost, mode);
        }
        case LearnerKind::majority: {
            double wp = static_cast<double>(ponzi);
            double wn = static_cast<double>(rows.size() - ponzi);
            if (mode == CostMode::reweight) {
                wp *= cost.false_negative();
                wn *= cost.false_positive();
            }
            return Model(MajorityModel{wp > wn ? 1.0 : 0.0}, m.cols, cost, mode);
        }
    }
    throw DataError("unknown learner");
}

namespace {

constexpr std::string_view kFormat = "ponzi-radar-model";
constexpr int kFormatVersion = 1;

json tree_to_json(const TreeModel& t) {
    json nodes = json::array();
    for (const auto& n : t.nodes()) {
        if (n.is_leaf()) {
            nodes.push_back(json::array({n.weight_ponzi, n.weight_other}));
        } else {
            nodes.push_back(json::array({n.feature, n.threshold, n.left, n.right, n.weight_ponzi, n.weight_other}));
        }
    }
    return nodes;
}

TreeModel tree_from_json(const json& j, std::size_t n_features) {
    std::vector<TreeNode> nodes;
    for (const auto& n : j) {
        TreeNode node;
        if (n.size() == 2) {
            node.weight_ponzi = n.at(0).get<double>();
            node.weight_other = n.at(1).get<double>();
        } else if (n.size() == 6) {
            node.feature = n.at(0).get<std::int32_t>();
            node.threshold = n.at(1).get<double>();
            node.left = n.at(2).get<std::uint32_t>();
            node.right = n.at(3).get<std::uint32_t>();
            node.weight_ponzi = n.at(4).get<double>();
            node.weight_other = n.at(5).get<double>();
        } else {
            throw DataError("malformed tree node in model file");
        }
        nodes.push_back(node);
    }
    return TreeModel(std::move(nodes), n_features);
}

json feature_names() {
    json names = json::array();
    for (const auto& c : features::kColumns) names.push_back(std::string(c.name));
    return names;
}

}  // namespace

void Model::save(std::ostream& out) const {
    nlohmann::ordered_json j;
    j["format"] = kFormat;
    j["version"] = kFormatVersion;
    j["schema"] = schema_;
    j["features"] = feature_names();
    j["cost"] = {{"fn", cost_.false_negative()}, {"fp", cost_.false_positive()}};
    j["cost_mode"] = mode_ == CostMode::reweight ? "reweight" : "threshold";
    std::visit(
        [&](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, ForestModel>) {
                j["learner"] = "forest";
                j["seed"] = m.seed;
                j["params"] = {{"n_trees", m.params.n_trees},
                               {"features_per_split", m.params.tree.features_per_split},
                               {"min_leaf", m.params.tree.min_leaf},
                               {"max_depth", m.params.tree.max_depth},
                               {"bootstrap", m.params.bootstrap}};
                json trees = json::array();
                for (const auto& t : m.trees) trees.push_back(tree_to_json(t));
                j["trees"] = std::move(trees);
            } else if constexpr (std::is_same_v<T, BayesModel>) {
                j["learner"] = "bayes";
                j["prior_ponzi"] = m.prior_ponzi;
                j["mean_ponzi"] = m.mean_ponzi;
                j["var_ponzi"] = m.var_ponzi;
                j["mean_other"] = m.mean_other;
                j["var_other"] = m.var_other;
            } else {
                j["learner"] = "majority";
                j["score"] = m.score;
            }
        },
        impl_);
    out << j.dump() << '\n';
}

Model Model::load(std::istream& in) {
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw DataError(std::string("model file is not valid JSON: ") + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != kFormat) throw DataError("not a model file");
        if (j.at("version").get<int>() != kFormatVersion) {
            throw DataError(fmt::format("unsupported model version {}", j.at("version").dump()));
        }
        const auto schema = j.at("schema").get<std::string>();
        if (schema != features::kSchemaVersion || j.at("features") != feature_names()) {
            throw DataError(fmt::format("schema mismatch: model was trained on feature schema '{}', expected '{}'",
                                        schema, features::kSchemaVersion));
        }
        const std::size_t F = features::kFeatureCount;
        const CostMatrix cost(j.at("cost").at("fn").get<double>(), j.at("cost").at("fp").get<double>());
        const auto mode_name = j.at("cost_mode").get<std::string>();
        if (mode_name != "reweight" && mode_name != "threshold") throw DataError("unknown cost mode " + mode_name);
        const CostMode mode = mode_name == "reweight" ? CostMode::reweight : CostMode::threshold;

        const auto learner = parse_learner(j.at("learner").get<std::string>());
        switch (learner) {
            case LearnerKind::forest: {
                ForestModel f;
                f.seed = j.at("seed").get<std::uint64_t>();
                const auto& p = j.at("params");
                f.params.n_trees = p.at("n_trees").get<std::size_t>();
                f.params.tree.features_per_split = p.at("features_per_split").get<std::size_t>();
                f.params.tree.min_leaf = p.at("min_leaf").get<std::size_t>();
                f.params.tree.max_depth = p.at("max_depth").get<std::size_t>();
                f.params.bootstrap = p.at("bootstrap").get<bool>();
                f.n_features = F;
                for (const auto& t : j.at("trees")) f.trees.push_back(tree_from_json(t, F));
                if (f.trees.size() != f.params.n_trees) throw DataError("tree count does not match parameters");
                return Model(std::move(f), F, cost, mode);
            }
            case LearnerKind::bayes: {
                BayesModel b;
                b.prior_ponzi = j.at("prior_ponzi").get<double>();
                b.mean_ponzi = j.at("mean_ponzi").get<std::vector<double>>();
                b.var_ponzi = j.at("var_ponzi").get<std::vector<double>>();
                b.mean_other = j.at("mean_other").get<std::vector<double>>();
                b.var_other = j.at("var_other").get<std::vector<double>>();
                if (b.mean_ponzi.size() != F || b.var_ponzi.size() != F || b.mean_other.size() != F ||
                    b.var_other.size() != F) {
                    throw DataError("Bayes parameters do not match the feature schema");
                }
                return Model(std::move(b), F, cost, mode);
            }
            case LearnerKind::majority:
                return Model(MajorityModel{j.at("score").get<double>()}, F, cost, mode);
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed model file: ") + e.what());
    }
    throw DataError("malformed model file");
}

}  // namespace ponzi::learn
