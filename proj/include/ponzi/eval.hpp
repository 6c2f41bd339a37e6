#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ponzi/dataset.hpp"
#include "ponzi/learn.hpp"

namespace ponzi::eval {

/// Binary outcome counts with P as the positive class.
struct ConfusionMatrix {
    std::uint64_t tp = 0;
    std::uint64_t fn = 0;
    std::uint64_t fp = 0;
    std::uint64_t tn = 0;

    std::uint64_t total() const noexcept { return tp + fn + fp + tn; }
    void add(bool actual_ponzi, bool predicted_ponzi);
    ConfusionMatrix& operator+=(const ConfusionMatrix& o);
    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

/// Metrics; nullopt marks a 0/0 ratio.
struct MetricsReport {
    std::optional<double> accuracy;
    std::optional<double> recall;
    std::optional<double> specificity;
    std::optional<double> precision;
    std::optional<double> f_measure;
    std::optional<double> g_mean;
    std::optional<double> auc;
};

MetricsReport metrics_from_confusion(const ConfusionMatrix& cm);

/// Round to `decimals` places, ties to even.
double round_half_even(double x, int decimals);
/// Three decimals, half-even; "undefined" for nullopt.
std::string format_metric(const std::optional<double>& v);

/// K disjoint folds covering [0, labels.size()). Each class is shuffled and
/// dealt round-robin, continuing the fold cursor across classes, so per-class
/// fold counts differ by at most one. Folds are returned sorted. Throws
/// DataError for K < 2 or K > n.
std::vector<std::vector<std::size_t>> stratified_folds(std::span<const std::uint8_t> labels, std::size_t k,
                                                       std::uint64_t seed);

/// Mann-Whitney form: (#pos>neg + 0.5 #ties) / (|pos| |neg|), via average
/// ranks in O(n log n). Throws DataError unless both classes are present.
double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct RocPoint {
    double fpr = 0;
    double tpr = 0;
};

/// ROC vertices from (0,0) to (1,1), one per distinct score threshold.
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const std::uint8_t> labels);
/// Trapezoidal area under roc_curve, accumulated in integer counts.
double trapezoid_auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct CvConfig {
    learn::LearnerSpec learner;
    double undersample_ratio = 0;  // 0 disables undersampling
    learn::CostMatrix cost;
    learn::CostMode cost_mode = learn::CostMode::threshold;
    std::size_t k = 10;
    std::uint64_t seed = 1;
    unsigned threads = 0;
};

struct CvResult {
    ConfusionMatrix total;
    std::vector<ConfusionMatrix> folds;
    std::vector<double> scores;      // pooled, indexed by row
    std::vector<std::size_t> fold_of;  // test fold of every row
    std::optional<double> auc;
    std::vector<std::string> warnings;
};

/// Trains on K-1 folds (undersampled when configured), scores the held-out
/// fold, applies the cost rule and sums the fold matrices. Fold f uses seed
/// derive_seed(seed, f + 1); fold assignment uses derive_seed(seed, 0).
CvResult cross_validate(const learn::Matrix& m, const CvConfig& config);
CvResult cross_validate(const data::Dataset& dataset, const CvConfig& config);

struct Prediction {
    std::string id;
    data::Label actual = data::Label::nonponzi;
    double score = 0;
    data::Label predicted = data::Label::nonponzi;
};

struct Application {
    ConfusionMatrix matrix;
    std::vector<Prediction> predictions;
    std::optional<double> auc;
};

/// Scores every instance with a frozen model and decides with `cost` (the
/// 0.5 boundary if the model folded costs into training). Throws DataError
/// on a schema mismatch.
Application apply_model(const learn::Model& model, const learn::CostMatrix& cost, const data::Dataset& dataset);

/// CSV `id,label,score,predicted`.
void write_predictions(const std::vector<Prediction>& predictions, std::ostream& out);

struct ReportRow {
    std::string setting;
    ConfusionMatrix matrix;
    MetricsReport metrics;
};

/// Machine CSV: `setting,tp,fn,fp,tn,accuracy,recall,specificity,precision,f,gmean,auc`.
void write_report_csv(std::span<const ReportRow> rows, std::ostream& out);
/// Aligned human-readable table.
std::string format_report_table(std::span<const ReportRow> rows);

}  // namespace ponzi::eval
