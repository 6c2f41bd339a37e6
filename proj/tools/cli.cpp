#include "cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <set>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "ponzi/chain.hpp"
#include "ponzi/clustering.hpp"
#include "ponzi/csv.hpp"
#include "ponzi/dataset.hpp"
#include "ponzi/eval.hpp"
#include "ponzi/features.hpp"
#include "ponzi/learn.hpp"
#include "ponzi/random.hpp"
#include "ponzi/rank.hpp"
#include "ponzi/synth.hpp"

namespace ponzi::cli {

namespace {

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Io {
    std::istream& in;
    std::ostream& out;
    std::shared_ptr<spdlog::logger> log;
};

/// Opens an input path, or hands back stdin for "-".
class Input {
public:
    Input(const std::string& path, std::istream& stdin_stream) {
        if (path == "-") {
            stream_ = &stdin_stream;
            return;
        }
        file_.open(path, std::ios::binary);
        if (!file_) throw UsageError(fmt::format("cannot open input '{}'", path));
        stream_ = &file_;
    }
    std::istream& get() { return *stream_; }

private:
    std::ifstream file_;
    std::istream* stream_ = nullptr;
};

/// Writes to a file when a path is given, otherwise to the fallback stream.
class Output {
public:
    Output(const std::string& path, std::ostream& fallback) {
        if (path.empty() || path == "-") {
            stream_ = &fallback;
            return;
        }
        file_.open(path, std::ios::binary | std::ios::trunc);
        if (!file_) throw UsageError(fmt::format("cannot write '{}'", path));
        stream_ = &file_;
    }
    std::ostream& get() { return *stream_; }
    void finish() {
        stream_->flush();
        if (!*stream_) throw DataError("write failed");
    }

private:
    std::ofstream file_;
    std::ostream* stream_ = nullptr;
};

const CLI::Validator kInputPath(
    [](std::string& path) -> std::string {
        if (path == "-" || (std::filesystem::exists(path) && !std::filesystem::is_directory(path))) return {};
        return "input file not found: " + path;
    },
    "FILE|-");

spdlog::level::level_enum log_level() {
    const char* env = std::getenv("PONZI_RADAR_LOG");
    if (env == nullptr || *env == '\0') return spdlog::level::warn;
    return spdlog::level::from_str(env);
}

learn::CostMatrix parse_cost(const std::string& spec) {
    try {
        return learn::CostMatrix::parse(spec);
    } catch (const DataError& e) {
        throw UsageError(fmt::format("--cost: {}", e.what()));
    }
}

learn::CostMode parse_mode(const std::string& s) {
    return s == "reweight" ? learn::CostMode::reweight : learn::CostMode::threshold;
}

std::string fmt_ratio(double r) { return csv::format_real(r); }

// ---- stage options -------------------------------------------------------

struct Common {
    std::uint64_t seed = 1;
    unsigned threads = 0;
};

struct LearnOptions {
    std::string learner = "forest";
    std::size_t trees = 100;
    std::string cost = "1:1";
    std::string mode = "threshold";
    double ratio = 0;

    learn::LearnerSpec spec() const {
        learn::LearnerSpec s;
        s.kind = learn::parse_learner(learner);
        s.forest.n_trees = trees;
        return s;
    }

    std::string setting() const {
        std::string s = fmt::format("learner={}", learner);
        if (learner == "forest") s += fmt::format(";trees={}", trees);
        s += fmt::format(";cost={};mode={};ratio={}", parse_cost(cost).to_string(), mode, fmt_ratio(ratio));
        return s;
    }
};

void add_learn_options(CLI::App* app, LearnOptions& o) {
    app->add_option("--learner", o.learner, "Classifier")
        ->check(CLI::IsMember({"forest", "bayes", "majority"}))
        ->capture_default_str();
    app->add_option("--trees", o.trees, "Forest size")->check(CLI::Range(1, 100000))->capture_default_str();
    app->add_option("--cost", o.cost, "Cost matrix as c_fn:c_fp")->capture_default_str();
    app->add_option("--cost-mode", o.mode, "How costs enter learning")
        ->check(CLI::IsMember({"threshold", "reweight"}))
        ->capture_default_str();
    app->add_option("--ratio", o.ratio, "Undersampling nP:P ratio for training data, 0 disables")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
}

void add_common(CLI::App* app, Common& c, bool seed, bool threads) {
    if (seed) app->add_option("--seed", c.seed, "Random seed")->capture_default_str();
    if (threads) app->add_option("--threads", c.threads, "Worker threads, 0 = all cores")->capture_default_str();
}

void check_ratio(double ratio) {
    if (ratio != 0 && ratio < 1) throw UsageError("--ratio must be 0 (off) or at least 1");
}

// ---- subcommands ---------------------------------------------------------

int cmd_validate(Io& io, const std::string& path) {
    Input input(path, io.in);
    const auto log = chain::parse_tx_log(input.get());
    const auto report = chain::validate_tx_log(log);
    io.out << chain::describe(report);
    chain::Satoshi fees = 0;
    for (const auto& [txid, fee] : report.fees) fees += fee;
    io.out << fmt::format("transactions: {}\naddresses: {}\ntotal fees: {}\nstatus: {}\n", log.size(),
                          log.addresses().size(), fees, report.ok() ? "ok" : "invalid");
    return report.ok() ? kExitOk : kExitData;
}

int cmd_cluster(Io& io, const std::string& path, const std::string& out_path) {
    Input input(path, io.in);
    const auto log = chain::parse_tx_log(input.get());
    const auto clusters = cluster::build_clusters(log);
    io.log->info("{} addresses in {} clusters", clusters.address_count(), clusters.cluster_count());
    Output out(out_path, io.out);
    cluster::write_cluster_dump(clusters, out.get());
    out.finish();
    return kExitOk;
}

int cmd_features(Io& io, const std::string& path, const std::string& clusters_path, const std::string& out_path,
                 const Common& c) {
    Input input(path, io.in);
    const auto log = chain::parse_tx_log(input.get());
    cluster::ClusterSet clusters;
    if (clusters_path.empty()) {
        clusters = cluster::build_clusters(log);
    } else {
        Input dump(clusters_path, io.in);
        clusters = cluster::read_cluster_dump(dump.get());
    }
    const auto vectors = features::extract_all(log, clusters, c.threads);
    data::FeatureTable table;
    table.reserve(vectors.size());
    for (std::size_t i = 0; i < vectors.size(); ++i) table.emplace_back(clusters.representative(i), vectors[i]);
    io.log->info("extracted features for {} clusters", table.size());
    Output out(out_path, io.out);
    data::write_feature_table(table, out.get());
    out.finish();
    return kExitOk;
}

struct DatasetOptions {
    std::string features;
    std::string labels;
    std::string clusters;
    std::size_t background = 0;
    std::string out;
};

int cmd_dataset(Io& io, const DatasetOptions& o, const Common& c) {
    Input features_in(o.features, io.in);
    auto table = data::read_feature_table(features_in.get());

    std::optional<cluster::ClusterSet> clusters;
    if (!o.clusters.empty()) {
        Input dump(o.clusters, io.in);
        clusters = cluster::read_cluster_dump(dump.get());
    }

    Input labels_in(o.labels, io.in);
    const auto labels = synth::read_labels(labels_in.get());
    std::map<std::string, data::Label> resolved;
    std::size_t unresolved = 0;
    for (const auto& row : labels) {
        std::string id = row.address;
        if (clusters) {
            const auto idx = clusters->find(row.address);
            if (!idx) {
                io.log->warn("label address {} is not in the cluster dump", row.address);
                ++unresolved;
                continue;
            }
            id = clusters->representative(*idx);
        }
        auto [it, inserted] = resolved.emplace(id, row.label);
        if (!inserted) {
            if (it->second != row.label) throw DataError(fmt::format("cluster {} is labeled both P and nP", id));
            io.log->warn("several label rows resolve to cluster {}", id);
        }
    }
    if (unresolved > 0) io.log->warn("{} label rows unresolved", unresolved);

    std::set<std::string> ponzi_ids;
    for (const auto& [id, label] : resolved) {
        if (label == data::Label::ponzi) ponzi_ids.insert(id);
    }

    if (o.background > 0) {
        std::vector<std::size_t> others;
        for (std::size_t i = 0; i < table.size(); ++i) {
            if (!ponzi_ids.contains(table[i].first)) others.push_back(i);
        }
        const auto pick = data::sample_background(others.size(), o.background, c.seed, {});
        std::vector<bool> keep(table.size(), false);
        for (std::size_t i = 0; i < table.size(); ++i) keep[i] = ponzi_ids.contains(table[i].first);
        for (auto p : pick) keep[others[p]] = true;
        data::FeatureTable kept;
        for (std::size_t i = 0; i < table.size(); ++i) {
            if (keep[i]) kept.push_back(std::move(table[i]));
        }
        table = std::move(kept);
    }

    auto assembled = data::assemble(table, ponzi_ids);
    for (const auto& w : assembled.warnings) io.log->warn("{}", w);
    const auto counts = assembled.dataset.counts();
    Output out(o.out, io.out);
    data::write_csv(assembled.dataset, out.get());
    out.finish();
    const std::string summary = fmt::format("instances: {} P, {} nP", counts.ponzi, counts.other);
    if (o.out.empty() || o.out == "-") {
        io.log->info("{}", summary);
    } else {
        io.out << summary << '\n';
    }
    return kExitOk;
}

data::Dataset load_dataset(Io& io, const std::string& path) {
    Input input(path, io.in);
    return data::read_csv(input.get());
}

int cmd_train(Io& io, const std::string& path, const LearnOptions& lo, const Common& c, const std::string& out_path) {
    check_ratio(lo.ratio);
    const auto cost = parse_cost(lo.cost);
    const auto dataset = load_dataset(io, path);
    const auto m = learn::to_matrix(dataset);
    std::vector<std::size_t> rows(m.rows);
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    if (lo.ratio > 0) {
        auto sampled = learn::undersample_rows(m.labels, rows, lo.ratio, derive_seed(c.seed, 0x5a3d));
        for (const auto& w : sampled.warnings) io.log->warn("{}", w);
        rows = std::move(sampled.rows);
    }
    const auto model = learn::train(m, rows, lo.spec(), cost, parse_mode(lo.mode), c.seed, c.threads);
    Output out(out_path, io.out);
    model.save(out.get());
    out.finish();
    io.log->info("trained {} on {} rows", lo.learner, rows.size());
    return kExitOk;
}

void emit_report(Io& io, const std::vector<eval::ReportRow>& rows, const std::string& out_path) {
    if (out_path.empty() || out_path == "-") {
        eval::write_report_csv(rows, io.out);
        return;
    }
    Output out(out_path, io.out);
    eval::write_report_csv(rows, out.get());
    out.finish();
    io.out << eval::format_report_table(rows);
}

struct CvOptions {
    std::string dataset;
    std::size_t k = 10;
    bool folds = false;
    std::string predictions;
    std::string out;
};

int cmd_cv(Io& io, const CvOptions& o, const LearnOptions& lo, const Common& c) {
    check_ratio(lo.ratio);
    eval::CvConfig config;
    config.learner = lo.spec();
    config.cost = parse_cost(lo.cost);
    config.cost_mode = parse_mode(lo.mode);
    config.undersample_ratio = lo.ratio;
    config.k = o.k;
    config.seed = c.seed;
    config.threads = c.threads;

    const auto dataset = load_dataset(io, o.dataset);
    const auto result = eval::cross_validate(dataset, config);
    for (const auto& w : result.warnings) io.log->warn("{}", w);

    const std::string setting =
        fmt::format("cv;{};k={};seed={};schema={}", lo.setting(), o.k, c.seed, dataset.schema);
    std::vector<eval::ReportRow> rows;
    auto total = eval::metrics_from_confusion(result.total);
    total.auc = result.auc;
    rows.push_back({setting, result.total, total});
    if (o.folds) {
        for (std::size_t f = 0; f < result.folds.size(); ++f) {
            rows.push_back({fmt::format("{};fold={}", setting, f), result.folds[f],
                            eval::metrics_from_confusion(result.folds[f])});
        }
    }
    if (!o.predictions.empty()) {
        std::vector<eval::Prediction> preds;
        const double boundary =
            config.cost_mode == learn::CostMode::reweight ? 0.5 : config.cost.threshold();
        for (std::size_t i = 0; i < dataset.size(); ++i) {
            const auto& inst = dataset.instances[i];
            const double s = result.scores[i];
            preds.push_back({inst.id, inst.label, s, s >= boundary ? data::Label::ponzi : data::Label::nonponzi});
        }
        Output p(o.predictions, io.out);
        eval::write_predictions(preds, p.get());
        p.finish();
    }
    emit_report(io, rows, o.out);
    return kExitOk;
}

struct ApplyOptions {
    std::string model;
    std::string dataset;
    std::string cost;
    std::string predictions;
    std::string out;
};

int cmd_apply(Io& io, const ApplyOptions& o) {
    Input model_in(o.model, io.in);
    const auto model = learn::Model::load(model_in.get());
    const auto cost = o.cost.empty() ? model.cost() : parse_cost(o.cost);
    const auto dataset = load_dataset(io, o.dataset);
    const auto app = eval::apply_model(model, cost, dataset);

    auto metrics = eval::metrics_from_confusion(app.matrix);
    metrics.auc = app.auc;
    const std::string setting = fmt::format("apply;learner={};cost={};mode={};schema={}",
                                            learn::to_string(learn::LearnerKind(model.impl().index())),
                                            cost.to_string(),
                                            model.cost_mode() == learn::CostMode::reweight ? "reweight" : "threshold",
                                            dataset.schema);
    if (!o.predictions.empty()) {
        Output p(o.predictions, io.out);
        eval::write_predictions(app.predictions, p.get());
        p.finish();
    }
    emit_report(io, {{setting, app.matrix, metrics}}, o.out);
    return kExitOk;
}

struct RankOptions {
    std::string dataset;
    std::size_t bins = 10;
    std::size_t top = 8;
    std::vector<std::string> methods;
    std::size_t relief_k = 10;
    std::size_t relief_m = 0;
    std::string out;
};

int cmd_rank(Io& io, const RankOptions& o, const Common& c) {
    rank::RankConfig config;
    if (!o.methods.empty()) config.methods = o.methods;
    config.bins = o.bins;
    config.relief = {o.relief_k, o.relief_m, c.seed};
    config.threads = c.threads;
    const auto dataset = load_dataset(io, o.dataset);
    const auto result = rank::rank_features(dataset, config);
    for (const auto& n : result.notes) io.log->warn("{}", n);
    const auto consensus = rank::consensus_rank(result.rankings, o.top);
    Output out(o.out, io.out);
    rank::write_rank_csv(result.rankings, consensus, out.get());
    out.finish();
    if (!o.out.empty() && o.out != "-") {
        io.out << fmt::format("consensus top {} (seed={}, schema={}):\n", o.top, c.seed, dataset.schema);
        for (std::size_t i = 0; i < consensus.size() && i < o.top; ++i) {
            io.out << fmt::format("{:>2}. {} ({}/{})\n", i + 1, consensus[i].name, consensus[i].count,
                                  result.rankings.size());
        }
    }
    return kExitOk;
}

struct SynthOptions {
    std::size_t ponzi = 30;
    std::size_t background = 6000;
    bool hard = false;
    std::string out;
    std::string labels;
};

int cmd_synth(Io& io, const SynthOptions& o, std::uint64_t seed) {
    synth::SynthParams params;
    if (o.hard) params = synth::hard_mode(params);
    params.n_ponzi = o.ponzi;
    params.n_background = o.background;
    params.seed = seed;
    const auto result = synth::generate(params);
    Output out(o.out, io.out);
    chain::write_tx_log(result.log, out.get());
    out.finish();
    if (!o.labels.empty()) {
        Output labels(o.labels, io.out);
        synth::write_labels(result.labels, labels.get());
        labels.finish();
    }
    io.log->info("generated {} transactions, {} schemes, {} background users", result.log.size(), o.ponzi,
                 o.background);
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
    auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
    auto logger = std::make_shared<spdlog::logger>("ponzi-radar", sink);
    logger->set_pattern("%l: %v");
    logger->set_level(log_level());
    Io io{in, out, logger};

    CLI::App app{"Ponzi scheme detection over a Bitcoin-style transaction log", "ponzi-radar"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "ponzi-radar 1.0 (feature schema " + std::string(features::kSchemaVersion) + ")");

    Common common;
    std::function<int()> action;

    std::string path;
    std::string out_path;
    std::string clusters_path;

    auto* validate = app.add_subcommand("validate", "Check a transaction log for dangling references, double spends and negative fees");
    validate->add_option("log", path, "Transaction log (JSON lines), - for stdin")->required()->check(kInputPath);
    validate->callback([&] { action = [&] { return cmd_validate(io, path); }; });

    auto* cluster_cmd = app.add_subcommand("cluster", "Group addresses with the multi-input heuristic");
    cluster_cmd->add_option("log", path, "Transaction log, - for stdin")->required()->check(kInputPath);
    cluster_cmd->add_option("--out,-o", out_path, "Cluster dump CSV (default stdout)");
    cluster_cmd->callback([&] { action = [&] { return cmd_cluster(io, path, out_path); }; });

    auto* features_cmd = app.add_subcommand("features", "Extract per-cluster features");
    features_cmd->add_option("log", path, "Transaction log, - for stdin")->required()->check(kInputPath);
    features_cmd->add_option("--clusters", clusters_path, "Cluster dump; clustered on the fly when absent")
        ->check(kInputPath);
    features_cmd->add_option("--out,-o", out_path, "Feature table CSV (default stdout)");
    add_common(features_cmd, common, false, true);
    features_cmd->callback([&] { action = [&] { return cmd_features(io, path, clusters_path, out_path, common); }; });

    DatasetOptions dataset_opts;
    auto* dataset_cmd = app.add_subcommand("dataset", "Label clusters and assemble a dataset");
    dataset_cmd->add_option("features", dataset_opts.features, "Feature table CSV, - for stdin")
        ->required()
        ->check(kInputPath);
    dataset_cmd->add_option("--labels", dataset_opts.labels, "CSV cluster_seed_address,label")
        ->required()
        ->check(kInputPath);
    dataset_cmd->add_option("--clusters", dataset_opts.clusters, "Cluster dump used to resolve label addresses")
        ->check(kInputPath);
    dataset_cmd->add_option("--background", dataset_opts.background, "Sample this many nP clusters (0 = all)");
    dataset_cmd->add_option("--out,-o", dataset_opts.out, "Dataset CSV (default stdout)");
    add_common(dataset_cmd, common, true, false);
    dataset_cmd->callback([&] { action = [&] { return cmd_dataset(io, dataset_opts, common); }; });

    LearnOptions learn_opts;
    auto* train_cmd = app.add_subcommand("train", "Train a classifier on a dataset");
    train_cmd->add_option("dataset", path, "Dataset CSV, - for stdin")->required()->check(kInputPath);
    add_learn_options(train_cmd, learn_opts);
    add_common(train_cmd, common, true, true);
    train_cmd->add_option("--out,-o", out_path, "Model file (default stdout)");
    train_cmd->callback([&] { action = [&] { return cmd_train(io, path, learn_opts, common, out_path); }; });

    CvOptions cv_opts;
    auto* cv_cmd = app.add_subcommand("cv", "Stratified K-fold cross-validation");
    cv_cmd->add_option("dataset", cv_opts.dataset, "Dataset CSV, - for stdin")->required()->check(kInputPath);
    add_learn_options(cv_cmd, learn_opts);
    add_common(cv_cmd, common, true, true);
    cv_cmd->add_option("--k", cv_opts.k, "Folds")->check(CLI::Range(2, 1000000))->capture_default_str();
    cv_cmd->add_flag("--folds", cv_opts.folds, "Also report every fold");
    cv_cmd->add_option("--predictions", cv_opts.predictions, "Write pooled out-of-fold scores to this CSV");
    cv_cmd->add_option("--out,-o", cv_opts.out, "Report CSV; stdout gets the table instead");
    cv_cmd->callback([&] { action = [&] { return cmd_cv(io, cv_opts, learn_opts, common); }; });

    ApplyOptions apply_opts;
    auto* apply_cmd = app.add_subcommand("apply", "Score a dataset with a frozen model");
    apply_cmd->add_option("model", apply_opts.model, "Model file")->required()->check(kInputPath);
    apply_cmd->add_option("dataset", apply_opts.dataset, "Dataset CSV, - for stdin")->required()->check(kInputPath);
    apply_cmd->add_option("--cost", apply_opts.cost, "Override the model's cost matrix (c_fn:c_fp)");
    apply_cmd->add_option("--predictions", apply_opts.predictions, "Per-instance predictions CSV");
    apply_cmd->add_option("--out,-o", apply_opts.out, "Report CSV; stdout gets the table instead");
    apply_cmd->callback([&] { action = [&] { return cmd_apply(io, apply_opts); }; });

    RankOptions rank_opts;
    auto* rank_cmd = app.add_subcommand("rank", "Rank features and compute the consensus");
    rank_cmd->add_option("dataset", rank_opts.dataset, "Dataset CSV, - for stdin")->required()->check(kInputPath);
    rank_cmd->add_option("--bins", rank_opts.bins, "Equal-frequency bins")->check(CLI::Range(2, 100000))->capture_default_str();
    rank_cmd->add_option("--top", rank_opts.top, "Consensus window")->check(CLI::Range(1, 100000))->capture_default_str();
    rank_cmd->add_option("--methods", rank_opts.methods, "Subset of rankers")
        ->check(CLI::IsMember({"info_gain", "gain_ratio", "sym_uncertainty", "one_r", "relieff"}))
        ->delimiter(',');
    rank_cmd->add_option("--relief-k", rank_opts.relief_k, "ReliefF neighbours")->check(CLI::Range(1, 100000))->capture_default_str();
    rank_cmd->add_option("--relief-m", rank_opts.relief_m, "ReliefF sampled instances (0 = all)")->capture_default_str();
    add_common(rank_cmd, common, true, true);
    rank_cmd->add_option("--out,-o", rank_opts.out, "Ranking CSV; stdout gets the consensus instead");
    rank_cmd->callback([&] { action = [&] { return cmd_rank(io, rank_opts, common); }; });

    SynthOptions synth_opts;
    auto* synth_cmd = app.add_subcommand("synth", "Generate a labeled synthetic transaction log");
    std::uint64_t synth_seed = 42;
    synth_cmd->add_option("--seed", synth_seed, "Random seed")->capture_default_str();
    synth_cmd->add_option("--ponzi", synth_opts.ponzi, "Schemes")->capture_default_str();
    synth_cmd->add_option("--background", synth_opts.background, "Background users")->capture_default_str();
    synth_cmd->add_flag("--hard", synth_opts.hard, "Overlapping class distributions");
    synth_cmd->add_option("--out,-o", synth_opts.out, "Transaction log (default stdout)");
    synth_cmd->add_option("--labels", synth_opts.labels, "Write labels CSV here");
    synth_cmd->callback([&] { action = [&] { return cmd_synth(io, synth_opts, synth_seed); }; });

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        const int code = action();
        logger->flush();
        return code;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const DataError& e) {
        err << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitData;
    }
}

}  // namespace ponzi::cli
