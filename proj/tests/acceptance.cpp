// Acceptance checks: one PASS/FAIL line per criterion, non-zero exit on any failure.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <unistd.h>

#include "cli.hpp"
#include "ponzi/clustering.hpp"
#include "ponzi/csv.hpp"
#include "ponzi/eval.hpp"
#include "ponzi/features.hpp"
#include "ponzi/rank.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace ponzi;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

Outcome fail(std::string detail) { return {false, std::move(detail)}; }

// ---- 1 ----------------------------------------------------------------------

Outcome published_metrics() {
    struct Row {
        const char* name;
        eval::ConfusionMatrix cm;
        double acc, recall, spec, f, precision, gmean;
    };
    const Row rows[] = {
        {"CM5", {25, 7, 13, 6387}, .997, .781, .998, .714, .658, .883},
        {"CM10", {29, 3, 26, 6374}, .995, .906, .995, .667, .527, .949},
        {"CM20", {31, 1, 77, 6323}, .988, .969, .987, .443, .287, .978},
        {"CM40", {31, 1, 132, 6268}, .979, .969, .979, .318, .190, .973},
    };
    double worst = 0;
    for (const auto& r : rows) {
        const auto m = eval::metrics_from_confusion(r.cm);
        const std::pair<std::optional<double>, double> cells[] = {{m.accuracy, r.acc}, {m.recall, r.recall},
                                                                  {m.specificity, r.spec}, {m.f_measure, r.f},
                                                                  {m.precision, r.precision}, {m.g_mean, r.gmean}};
        for (const auto& [got, want] : cells) {
            if (!got) return fail(fmt::format("{}: undefined metric", r.name));
            worst = std::max(worst, std::abs(*got - want));
        }
    }
    return {worst <= 0.0015, fmt::format("24 cells, max deviation {:.5f}", worst)};
}

// ---- 2 ----------------------------------------------------------------------

Outcome majority_baseline() {
    learn::Matrix m;
    m.rows = 6432;
    m.cols = 1;
    for (std::size_t i = 0; i < m.rows; ++i) {
        m.values.push_back(static_cast<double>(i % 17));
        m.labels.push_back(i < 32);
    }
    eval::CvConfig c;
    c.learner.kind = learn::LearnerKind::majority;
    const auto r = eval::cross_validate(m, c);
    const auto met = eval::metrics_from_confusion(r.total);
    const bool ok = r.total == eval::ConfusionMatrix{0, 32, 0, 6400} && eval::format_metric(met.accuracy) == "0.995" &&
                    met.recall == 0.0;
    return {ok, fmt::format("accuracy {}, recall {}", eval::format_metric(met.accuracy), eval::format_metric(met.recall))};
}

// ---- 3 ----------------------------------------------------------------------

Outcome clustering_oracle() {
    Rng rng(3);
    std::size_t matched = 0;
    for (int i = 0; i < 500; ++i) {
        const std::size_t n_tx = 1 + rng.below(1000);
        const std::size_t n_addr = 1 + rng.below(400);
        const chain::TxLog log(testing::random_transactions(rng, n_tx, n_addr));
        const auto cs = cluster::build_clusters(log);
        std::set<std::set<std::string>> got;
        for (std::size_t c = 0; c < cs.cluster_count(); ++c) {
            const auto members = cs.members(c);
            got.emplace(members.begin(), members.end());
        }
        matched += got == testing::bfs_components(log);
    }
    return {matched == 500, fmt::format("{}/500 logs match", matched)};
}

// ---- 4 ----------------------------------------------------------------------

Outcome gini_oracle() {
    Rng rng(4);
    double worst = 0;
    for (int i = 0; i < 1000; ++i) {
        std::vector<double> x(1 + rng.below(200));
        const int kind = i % 3;
        for (auto& v : x) {
            v = kind == 0 ? rng.uniform() * 1e8 : kind == 1 ? static_cast<double>(rng.below(5)) : rng.lognormal(0, 3);
        }
        worst = std::max(worst, std::abs(*features::gini(x) - testing::pairwise_gini(x)));
    }
    return {worst <= 1e-9, fmt::format("max deviation {:.3g}", worst)};
}

// ---- 5 ----------------------------------------------------------------------

Outcome cost_monotonicity() {
    Rng rng(5);
    std::vector<double> scores(10'000);
    for (auto& s : scores) s = rng.below(4) == 0 ? static_cast<double>(rng.below(21)) / 20.0 : rng.uniform();
    std::vector<bool> previous(scores.size(), false);
    std::size_t previous_count = 0;
    std::string counts;
    for (double fn : {1.0, 5.0, 10.0, 20.0, 40.0}) {
        const learn::CostMatrix cm(fn, 1.0);
        if (cm.threshold() != 1.0 / (1.0 + fn)) return fail(fmt::format("threshold for c_fn={} is {}", fn, cm.threshold()));
        std::size_t count = 0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            const bool p = learn::cost_sensitive_predict(scores[i], cm) == data::Label::ponzi;
            if (previous[i] && !p) return fail(fmt::format("instance {} left the P set at c_fn={}", i, fn));
            previous[i] = p;
            count += p;
        }
        if (count < previous_count) return fail("P set shrank");
        previous_count = count;
        counts += fmt::format("{}{}", counts.empty() ? "" : " <= ", count);
    }
    return {true, "predicted P: " + counts};
}

// ---- 6 ----------------------------------------------------------------------

Outcome stratification() {
    Rng rng(6);
    std::size_t checked = 0;
    for (int d = 0; d < 200; ++d) {
        const std::size_t n = 10 + rng.below(2000);
        std::vector<std::uint8_t> y(n);
        const double p = rng.uniform(0.005, 0.5);
        for (auto& v : y) v = rng.bernoulli(p);
        y[rng.below(n)] = 1;
        for (std::size_t k : {2u, 5u, 10u}) {
            const auto folds = eval::stratified_folds(y, k, static_cast<std::uint64_t>(d));
            if (folds.size() != k) return fail("wrong fold count");
            std::vector<int> seen(n, 0);
            std::size_t pmin = n, pmax = 0, nmin = n, nmax = 0;
            for (const auto& f : folds) {
                std::size_t pos = 0;
                for (auto i : f) {
                    if (i >= n || seen[i]++) return fail(fmt::format("dataset {} K={}: not a partition", d, k));
                    pos += y[i];
                }
                pmin = std::min(pmin, pos);
                pmax = std::max(pmax, pos);
                nmin = std::min(nmin, f.size() - pos);
                nmax = std::max(nmax, f.size() - pos);
            }
            for (int s : seen) {
                if (s != 1) return fail(fmt::format("dataset {} K={}: index missing", d, k));
            }
            if (pmax - pmin > 1 || nmax - nmin > 1) return fail(fmt::format("dataset {} K={}: unbalanced", d, k));
            ++checked;
        }
    }
    return {true, fmt::format("{} fold sets", checked)};
}

// ---- 7 ----------------------------------------------------------------------

Outcome auc_cross_check() {
    Rng rng(7);
    double worst = 0;
    for (int i = 0; i < 1000; ++i) {
        const std::size_t n = 2 + rng.below(500);
        std::vector<double> s(n);
        std::vector<std::uint8_t> y(n);
        const std::uint64_t levels = i % 2 ? 3 + rng.below(10) : 0;
        for (std::size_t j = 0; j < n; ++j) {
            s[j] = levels ? static_cast<double>(rng.below(levels)) / static_cast<double>(levels) : rng.uniform();
            y[j] = rng.bernoulli(0.3);
        }
        y[0] = 1;
        y[1] = 0;
        worst = std::max(worst, std::abs(eval::roc_auc(s, y) - eval::trapezoid_auc(s, y)));
    }
    return {worst <= 1e-12, fmt::format("max deviation {:.3g}", worst)};
}

// ---- 8, 9 -------------------------------------------------------------------

class Workdir {
public:
    Workdir() : dir_(fs::temp_directory_path() / fmt::format("ponzi-acceptance-{}", ::getpid())) {
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    ~Workdir() { fs::remove_all(dir_); }
    std::string operator/(const std::string& name) const { return (dir_ / name).string(); }

private:
    fs::path dir_;
};

std::string slurp(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

// synth -> cluster -> features -> dataset -> cv; returns the report CSV or throws.
std::string pipeline(const Workdir& dir, const std::string& tag, const std::string& threads) {
    const auto step = [](std::vector<std::string> args) {
        std::istringstream in;
        std::ostringstream out, err;
        const int code = cli::run(args, in, out, err);
        if (code != 0) throw std::runtime_error(fmt::format("{} exited {}: {}", args[0], code, err.str()));
    };
    const auto f = [&](const std::string& name) { return dir / (tag + "." + name); };
    step({"synth", "--seed", "42", "-o", f("log.jsonl"), "--labels", f("labels.csv")});
    step({"cluster", f("log.jsonl"), "-o", f("clusters.csv")});
    step({"features", f("log.jsonl"), "--clusters", f("clusters.csv"), "--threads", threads, "-o", f("features.csv")});
    step({"dataset", f("features.csv"), "--labels", f("labels.csv"), "--clusters", f("clusters.csv"), "-o",
          f("dataset.csv")});
    step({"cv", f("dataset.csv"), "--learner", "forest", "--trees", "100", "--cost", "20:1", "--k", "10", "--seed",
          "1", "--threads", threads, "-o", f("report.csv")});
    return slurp(f("report.csv"));
}

Outcome end_to_end(const Workdir& dir, std::string& report) {
    report = pipeline(dir, "a", "0");
    std::istringstream in(report);
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    const auto cells = csv::split(row, 2);
    if (cells.size() != 12) return fail("unexpected report shape: " + row);
    const double tp = std::stod(cells[1]), fn = std::stod(cells[2]), fp = std::stod(cells[3]);
    const double recall = tp / (tp + fn);
    if (cells[11] == "undefined") return fail("AUC undefined");
    const double auc = std::stod(cells[11]);
    return {recall >= 0.90 && auc >= 0.95 && tp + fn == 30,
            fmt::format("tp {} fn {} fp {} tn {}, recall {:.3f}, AUC {}", tp, fn, fp, cells[4], recall, cells[11])};
}

Outcome determinism(const Workdir& dir, const std::string& first) {
    const auto one = pipeline(dir, "t1", "1");
    const auto eight = pipeline(dir, "t8", "8");
    const bool same = one == eight && one == first && !one.empty();
    const bool inputs_same = slurp(dir / "t1.dataset.csv") == slurp(dir / "t8.dataset.csv");
    return {same && inputs_same, same ? "reports byte-identical (threads 1, 8, default)" : "reports differ"};
}

// ---- 10 ---------------------------------------------------------------------

Outcome ranker_sanity() {
    const std::vector<std::string> names{"noise", "copy"};
    std::size_t relief_wins = 0;
    std::string problem;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(derive_seed(10, seed));
        learn::Matrix m;
        m.rows = 300;
        m.cols = 2;
        std::size_t pos = 0;
        for (std::size_t i = 0; i < m.rows; ++i) {
            const bool p = rng.bernoulli(0.25);
            pos += p;
            m.values.push_back(rng.uniform());
            m.values.push_back(p ? 1.0 : 0.0);
            m.labels.push_back(p);
        }
        rank::RankConfig cfg;
        cfg.relief.seed = seed;
        cfg.relief.m = 100;
        cfg.threads = 1;
        const auto result = rank::rank_features(m, names, cfg);
        for (const auto& r : result.rankings) {
            const bool first = r.entries[0].name == "copy" && r.entries[0].score > r.entries[1].score;
            if (r.method == "relieff") {
                relief_wins += first;
            } else if (!first && problem.empty()) {
                problem = fmt::format("seed {}: {} does not rank copy first", seed, r.method);
            }
            if (r.method == "info_gain") {
                const std::vector<std::size_t> counts{pos, m.rows - pos};
                const double h = rank::entropy(counts);
                if (std::abs(r.entries[0].score - h) > 1e-9 && problem.empty()) {
                    problem = fmt::format("seed {}: IG(copy) {} != H(class) {}", seed, r.entries[0].score, h);
                }
            }
        }
    }
    if (!problem.empty()) return fail(problem);
    return {relief_wins >= 95, fmt::format("entropy rankers and OneR rank copy first; ReliefF {}/100 seeds", relief_wins)};
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        double budget_s;
        std::function<Outcome()> check;
    };
    Workdir dir;
    std::string report;
    const std::vector<Criterion> criteria{
        {1, "metric-formula reproduction", 1, published_metrics},
        {2, "majority baseline", 1, majority_baseline},
        {3, "clustering oracle equivalence", 10, clustering_oracle},
        {4, "gini oracle equivalence", 5, gini_oracle},
        {5, "cost-threshold monotonicity", 1, cost_monotonicity},
        {6, "stratification contract", 5, stratification},
        {7, "AUC cross-check", 5, auc_cross_check},
        {8, "end-to-end synthetic detection", 120, [&] { return end_to_end(dir, report); }},
        {9, "determinism across thread counts", 240, [&] { return determinism(dir, report); }},
        {10, "ranker sanity", 10, ranker_sanity},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.check();
        } catch (const std::exception& e) {
            o = fail(std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (o.pass && secs > c.budget_s) {
            o.pass = false;
            o.detail += fmt::format("; over the {}s budget", c.budget_s);
        }
        failures += !o.pass;
        std::cout << fmt::format("criterion {:>2}: {} {} ({}; {:.2f}s)\n", c.id, o.pass ? "PASS" : "FAIL", c.name,
                                 o.detail, secs)
                  << std::flush;
    }
    std::cout << fmt::format("{} of {} criteria passed\n", criteria.size() - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
