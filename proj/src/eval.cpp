#include "ponzi/eval.hpp"

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <numeric>
#include <ostream>

#include <fmt/format.h>

#include "ponzi/csv.hpp"
#include "ponzi/random.hpp"

namespace ponzi::eval {

void ConfusionMatrix::add(bool actual_ponzi, bool predicted_ponzi) {
    if (actual_ponzi) {
        ++(predicted_ponzi ? tp : fn);
    } else {
        ++(predicted_ponzi ? fp : tn);
    }
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& o) {
    tp += o.tp;
    fn += o.fn;
    fp += o.fp;
    tn += o.tn;
    return *this;
}

namespace {

std::optional<double> ratio(std::uint64_t num, std::uint64_t den) {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

MetricsReport metrics_from_confusion(const ConfusionMatrix& cm) {
    MetricsReport r;
    r.accuracy = ratio(cm.tp + cm.tn, cm.total());
    r.recall = ratio(cm.tp, cm.tp + cm.fn);
    r.specificity = ratio(cm.tn, cm.tn + cm.fp);
    r.precision = ratio(cm.tp, cm.tp + cm.fp);
    if (r.precision && r.recall && *r.precision + *r.recall > 0) {
        r.f_measure = 2 * *r.precision * *r.recall / (*r.precision + *r.recall);
    }
    if (r.recall && r.specificity) r.g_mean = std::sqrt(*r.recall * *r.specificity);
    return r;
}

double round_half_even(double x, int decimals) {
    const double scale = std::pow(10.0, decimals);
    const int saved = std::fegetround();
    std::fesetround(FE_TONEAREST);
    const double r = std::nearbyint(x * scale) / scale;
    std::fesetround(saved);
    return r;
}

std::string format_metric(const std::optional<double>& v) {
    if (!v) return "undefined";
    return fmt::format("{:.3f}", round_half_even(*v, 3));
}

std::vector<std::vector<std::size_t>> stratified_folds(std::span<const std::uint8_t> labels, std::size_t k,
                                                       std::uint64_t seed) {
    if (k < 2) throw DataError("cross-validation needs at least 2 folds");
    if (k > labels.size()) {
        throw DataError(fmt::format("cannot split {} instances into {} folds", labels.size(), k));
    }
    Rng rng(seed);
    std::vector<std::vector<std::size_t>> folds(k);
    std::size_t cursor = 0;
    for (const std::uint8_t cls : {std::uint8_t{1}, std::uint8_t{0}}) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if ((labels[i] != 0) == (cls != 0)) members.push_back(i);
        }
        rng.shuffle(std::span<std::size_t>(members));
        for (std::size_t i : members) {
            folds[cursor].push_back(i);
            cursor = (cursor + 1) % k;
        }
    }
    for (auto& f : folds) std::sort(f.begin(), f.end());
    return folds;
}

namespace {

void check_scores(std::span<const double> scores, std::span<const std::uint8_t> labels,
                  std::size_t& positives, std::size_t& negatives) {
    if (scores.size() != labels.size()) throw DataError("scores and labels differ in length");
    positives = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (std::isnan(scores[i])) throw DataError("NaN score");
        positives += labels[i] != 0;
    }
    negatives = labels.size() - positives;
    if (positives == 0 || negatives == 0) throw DataError("AUC needs at least one positive and one negative");
}

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    std::size_t pos = 0, neg = 0;
    check_scores(scores, labels, pos, neg);
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double rank_sum = 0;  // average ranks are multiples of 0.5, so sums stay exact
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2;
        for (std::size_t t = i; t < j; ++t) {
            if (labels[order[t]]) rank_sum += avg_rank;
        }
        i = j;
    }
    const double u = rank_sum - static_cast<double>(pos) * static_cast<double>(pos + 1) / 2;
    return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

namespace {

struct RocCounts {
    std::vector<std::pair<std::uint64_t, std::uint64_t>> points;  // (fp, tp)
    std::size_t positives = 0;
    std::size_t negatives = 0;
};

RocCounts roc_counts(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    RocCounts rc;
    check_scores(scores, labels, rc.positives, rc.negatives);
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::uint64_t tp = 0, fp = 0;
    rc.points.emplace_back(0, 0);
    for (std::size_t i = 0; i < order.size();) {
        const double s = scores[order[i]];
        for (; i < order.size() && scores[order[i]] == s; ++i) ++(labels[order[i]] ? tp : fp);
        rc.points.emplace_back(fp, tp);
    }
    return rc;
}

}  // namespace

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    const auto rc = roc_counts(scores, labels);
    std::vector<RocPoint> out;
    out.reserve(rc.points.size());
    for (const auto& [fp, tp] : rc.points) {
        out.push_back({static_cast<double>(fp) / static_cast<double>(rc.negatives),
                       static_cast<double>(tp) / static_cast<double>(rc.positives)});
    }
    return out;
}

double trapezoid_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    const auto rc = roc_counts(scores, labels);
    // twice the area in count units: sum of dfp * (tp_prev + tp_cur)
    long double twice_area = 0;
    for (std::size_t i = 1; i < rc.points.size(); ++i) {
        const auto dfp = rc.points[i].first - rc.points[i - 1].first;
        twice_area += static_cast<long double>(dfp) * static_cast<long double>(rc.points[i - 1].second + rc.points[i].second);
    }
    return static_cast<double>(twice_area / (2.0L * rc.positives * rc.negatives));
}

CvResult cross_validate(const learn::Matrix& m, const CvConfig& config) {
    CvResult result;
    const auto folds = stratified_folds(m.labels, config.k, derive_seed(config.seed, 0));
    result.scores.assign(m.rows, 0.0);
    result.fold_of.assign(m.rows, 0);

    std::vector<std::uint8_t> in_test(m.rows, 0);
    for (std::size_t f = 0; f < folds.size(); ++f) {
        const std::uint64_t fold_seed = derive_seed(config.seed, f + 1);
        std::fill(in_test.begin(), in_test.end(), 0);
        for (std::size_t r : folds[f]) in_test[r] = 1;
        std::vector<std::size_t> train_rows;
        train_rows.reserve(m.rows - folds[f].size());
        for (std::size_t r = 0; r < m.rows; ++r) {
            if (!in_test[r]) train_rows.push_back(r);
        }
        const bool has_ponzi =
            std::any_of(train_rows.begin(), train_rows.end(), [&](std::size_t r) { return m.labels[r] != 0; });
        if (!has_ponzi) throw DataError(fmt::format("training split of fold {} has no P instances", f));

        if (config.undersample_ratio > 0) {
            auto sampled = learn::undersample_rows(m.labels, train_rows, config.undersample_ratio,
                                                   derive_seed(fold_seed, 0x5a3d));
            for (auto& w : sampled.warnings) result.warnings.push_back(fmt::format("fold {}: {}", f, w));
            train_rows = std::move(sampled.rows);
        }

        const auto model =
            learn::train(m, train_rows, config.learner, config.cost, config.cost_mode, fold_seed, config.threads);
        ConfusionMatrix cm;
        for (std::size_t r : folds[f]) {
            const double p = model.predict_proba(m.row(r));
            result.scores[r] = p;
            result.fold_of[r] = f;
            cm.add(m.labels[r] != 0, p >= model.decision_threshold());
        }
        result.total += cm;
        result.folds.push_back(cm);
    }

    const bool both = std::any_of(m.labels.begin(), m.labels.end(), [](auto l) { return l != 0; }) &&
                      std::any_of(m.labels.begin(), m.labels.end(), [](auto l) { return l == 0; });
    if (both) result.auc = roc_auc(result.scores, m.labels);
    return result;
}

CvResult cross_validate(const data::Dataset& dataset, const CvConfig& config) {
    return cross_validate(learn::to_matrix(dataset), config);
}

Application apply_model(const learn::Model& model, const learn::CostMatrix& cost, const data::Dataset& dataset) {
    if (dataset.schema != model.schema()) {
        throw DataError(fmt::format("schema mismatch: model '{}', dataset '{}'", model.schema(), dataset.schema));
    }
    learn::Model decider = model;
    decider.set_cost(cost, model.cost_mode());

    Application app;
    std::vector<double> scores;
    std::vector<std::uint8_t> labels;
    for (const auto& inst : dataset.instances) {
        const auto x = features::to_values(inst.features);
        const double p = decider.predict_proba(x);
        const bool predicted = p >= decider.decision_threshold();
        const bool actual = inst.label == data::Label::ponzi;
        app.matrix.add(actual, predicted);
        app.predictions.push_back(
            {inst.id, inst.label, p, predicted ? data::Label::ponzi : data::Label::nonponzi});
        scores.push_back(p);
        labels.push_back(actual);
    }
    const auto counts = dataset.counts();
    if (counts.ponzi > 0 && counts.other > 0) app.auc = roc_auc(scores, labels);
    return app;
}

void write_predictions(const std::vector<Prediction>& predictions, std::ostream& out) {
    out << "id,label,score,predicted\n";
    for (const auto& p : predictions) {
        out << csv::escape(p.id) << ',' << data::to_string(p.actual) << ',' << csv::format_real(p.score) << ','
            << data::to_string(p.predicted) << '\n';
    }
}

namespace {

std::vector<std::string> report_cells(const ReportRow& row) {
    const auto& m = row.metrics;
    return {row.setting,
            std::to_string(row.matrix.tp),
            std::to_string(row.matrix.fn),
            std::to_string(row.matrix.fp),
            std::to_string(row.matrix.tn),
            format_metric(m.accuracy),
            format_metric(m.recall),
            format_metric(m.specificity),
            format_metric(m.precision),
            format_metric(m.f_measure),
            format_metric(m.g_mean),
            format_metric(m.auc)};
}

const std::vector<std::string> kReportHeader{"setting", "tp", "fn", "fp", "tn", "accuracy", "recall",
                                             "specificity", "precision", "f", "gmean", "auc"};

}  // namespace

void write_report_csv(std::span<const ReportRow> rows, std::ostream& out) {
    out << csv::join(kReportHeader) << '\n';
    for (const auto& row : rows) out << csv::join(report_cells(row)) << '\n';
}

std::string format_report_table(std::span<const ReportRow> rows) {
    std::vector<std::vector<std::string>> table{kReportHeader};
    for (const auto& row : rows) table.push_back(report_cells(row));
    std::vector<std::size_t> width(kReportHeader.size(), 0);
    for (const auto& r : table) {
        for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
    }
    std::string out;
    for (const auto& r : table) {
        for (std::size_t c = 0; c < r.size(); ++c) {
            if (c == 0) {
                out += fmt::format("{:<{}}", r[c], width[c]);
            } else {
                out += fmt::format("  {:>{}}", r[c], width[c]);
            }
        }
        out += '\n';
    }
    return out;
}

}  // namespace ponzi::eval
