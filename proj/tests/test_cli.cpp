#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <unistd.h>

#include "cli.hpp"
#include "ponzi/random.hpp"

namespace fs = std::filesystem;
using ponzi::cli::kExitData;
using ponzi::cli::kExitOk;
using ponzi::cli::kExitUsage;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run(std::vector<std::string> args, const std::string& stdin_text = "") {
    std::istringstream in(stdin_text);
    std::ostringstream out, err;
    const int code = ponzi::cli::run(args, in, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / fmt::format("ponzi-cli-{}-{}", info->name(), ponzi::mix64(::getpid()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    void write(const std::string& name, const std::string& text) const {
        std::ofstream out(dir_ / name, std::ios::binary);
        out << text;
    }

    // small synthetic pipeline up to a dataset file
    void build_dataset(std::size_t ponzi = 12, std::size_t background = 300) {
        ASSERT_EQ(run({"synth", "--seed", "5", "--ponzi", std::to_string(ponzi), "--background",
                       std::to_string(background), "-o", path("log.jsonl"), "--labels", path("labels.csv")})
                      .code,
                  kExitOk);
        ASSERT_EQ(run({"cluster", path("log.jsonl"), "-o", path("clusters.csv")}).code, kExitOk);
        ASSERT_EQ(run({"features", path("log.jsonl"), "--clusters", path("clusters.csv"), "-o", path("features.csv")})
                      .code,
                  kExitOk);
        const auto r = run({"dataset", path("features.csv"), "--labels", path("labels.csv"), "--clusters",
                            path("clusters.csv"), "-o", path("dataset.csv")});
        ASSERT_EQ(r.code, kExitOk) << r.err;
        EXPECT_EQ(r.out, fmt::format("instances: {} P, {} nP\n", ponzi, background));
    }

    fs::path dir_;
};

}  // namespace

TEST_F(CliTest, UsageErrors) {
    EXPECT_EQ(run({}).code, kExitUsage);
    EXPECT_EQ(run({"bogus"}).code, kExitUsage);
    write("x.csv", "");
    EXPECT_EQ(run({"cv", path("x.csv"), "--no-such-flag"}).code, kExitUsage);
    const auto missing = run({"cv", path("absent.csv")});
    EXPECT_EQ(missing.code, kExitUsage);
    EXPECT_NE(missing.err.find("absent.csv"), std::string::npos);
    EXPECT_EQ(run({"cv", path("x.csv"), "--k", "1"}).code, kExitUsage);
    EXPECT_EQ(run({"cv", path("x.csv"), "--learner", "ripper"}).code, kExitUsage);
    EXPECT_EQ(run({"cv", path("x.csv"), "--ratio", "0.5"}).code, kExitUsage);
    EXPECT_EQ(run({"--help"}).code, kExitOk);
}

TEST_F(CliTest, ValidateReportsDoubleSpend) {
    const std::string cb = std::string(63, '0') + "1";
    const std::string t2 = std::string(63, '0') + "2";
    const std::string t3 = std::string(63, '0') + "3";
    const std::string log =
        fmt::format("{{\"txid\":\"{}\",\"time\":1,\"coinbase\":true,\"in\":[],\"out\":[{{\"addr\":\"a\",\"val\":10}}]}}\n"
                    "{{\"txid\":\"{}\",\"time\":2,\"coinbase\":false,\"in\":[{{\"tx\":\"{}\",\"idx\":0}}],\"out\":[{{\"addr\":\"b\",\"val\":9}}]}}\n"
                    "{{\"txid\":\"{}\",\"time\":3,\"coinbase\":false,\"in\":[{{\"tx\":\"{}\",\"idx\":0}}],\"out\":[{{\"addr\":\"c\",\"val\":9}}]}}\n",
                    cb, t2, cb, t3, cb);
    write("log.jsonl", log);
    const auto r = run({"validate", path("log.jsonl")});
    EXPECT_EQ(r.code, kExitData);
    EXPECT_NE(r.out.find("double spend"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("status: invalid"), std::string::npos);

    const auto piped = run({"validate", "-"}, log);
    EXPECT_EQ(piped.code, kExitData);
    EXPECT_EQ(piped.out, r.out);
}

TEST_F(CliTest, SyntaxErrorIsDataError) {
    write("log.jsonl", "{\"txid\": oops}\n");
    const auto r = run({"cluster", path("log.jsonl")});
    EXPECT_EQ(r.code, kExitData);
    EXPECT_NE(r.err.find("line 1"), std::string::npos) << r.err;
}

TEST_F(CliTest, PipelineCountsMatchGenerator) {
    build_dataset();
    const auto v = run({"validate", path("log.jsonl")});
    EXPECT_EQ(v.code, kExitOk);
    EXPECT_NE(v.out.find("status: ok"), std::string::npos);
}

TEST_F(CliTest, StdinHandoffMatchesFiles) {
    build_dataset(6, 120);
    const auto synth = run({"synth", "--seed", "5", "--ponzi", "6", "--background", "120"});
    ASSERT_EQ(synth.code, kExitOk);
    EXPECT_EQ(synth.out, slurp(path("log.jsonl")));
    const auto clusters = run({"cluster", "-"}, synth.out);
    ASSERT_EQ(clusters.code, kExitOk);
    const auto features = run({"features", "-"}, synth.out);
    ASSERT_EQ(features.code, kExitOk);
    const auto direct = run({"features", path("log.jsonl"), "--clusters", path("clusters.csv")});
    EXPECT_EQ(features.out, direct.out);
    const auto dataset = run({"dataset", "-", "--labels", path("labels.csv")}, features.out);
    ASSERT_EQ(dataset.code, kExitOk) << dataset.err;
    EXPECT_EQ(dataset.out, slurp(path("dataset.csv")));
}

TEST_F(CliTest, CvEmitsOneAggregatedRow) {
    build_dataset();
    const auto r = run({"cv", "--learner", "forest", "--trees", "20", "--cost", "20:1", "--k", "10", "--seed", "1",
                        path("dataset.csv")});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    std::istringstream lines(r.out);
    std::string header, row, extra;
    std::getline(lines, header);
    std::getline(lines, row);
    EXPECT_FALSE(std::getline(lines, extra));
    EXPECT_EQ(header, "setting,tp,fn,fp,tn,accuracy,recall,specificity,precision,f,gmean,auc");
    EXPECT_EQ(row.rfind("cv;learner=forest;trees=20;cost=20:1;mode=threshold;ratio=0;k=10;seed=1;schema=v1,", 0), 0u)
        << row;

    const auto with_folds = run({"cv", "--trees", "5", "--k", "4", "--folds", path("dataset.csv")});
    ASSERT_EQ(with_folds.code, kExitOk);
    EXPECT_EQ(std::count(with_folds.out.begin(), with_folds.out.end(), '\n'), 6);
}

TEST_F(CliTest, CvIsThreadIndependent) {
    build_dataset();
    const std::vector<std::string> base{"cv", "--trees", "30", "--cost", "20:1", "--ratio", "5", "--seed", "9"};
    auto a = base, b = base;
    a.insert(a.end(), {"--threads", "1", "-o", path("a.csv"), path("dataset.csv")});
    b.insert(b.end(), {"--threads", "8", "-o", path("b.csv"), path("dataset.csv")});
    ASSERT_EQ(run(a).code, kExitOk);
    ASSERT_EQ(run(b).code, kExitOk);
    EXPECT_EQ(slurp(path("a.csv")), slurp(path("b.csv")));
    EXPECT_FALSE(slurp(path("a.csv")).empty());
}

TEST_F(CliTest, TrainApplyRoundTrip) {
    build_dataset();
    ASSERT_EQ(run({"train", path("dataset.csv"), "--trees", "15", "--cost", "10:1", "-o", path("model.json")}).code,
              kExitOk);
    const auto r = run({"apply", path("model.json"), path("dataset.csv"), "--predictions", path("pred.csv"), "-o",
                        path("report.csv")});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    const auto report = slurp(path("report.csv"));
    EXPECT_NE(report.find("apply;learner=forest;cost=10:1;mode=threshold;schema=v1,12,0,0,300,"), std::string::npos)
        << report;
    const auto preds = slurp(path("pred.csv"));
    EXPECT_EQ(std::count(preds.begin(), preds.end(), '\n'), 313);
    EXPECT_NE(r.out.find("recall"), std::string::npos);
}

TEST_F(CliTest, SchemaMismatchIsDataError) {
    build_dataset();
    ASSERT_EQ(run({"train", path("dataset.csv"), "--learner", "bayes", "-o", path("model.json")}).code, kExitOk);
    auto text = slurp(path("dataset.csv"));
    text.replace(0, 9, "schema=v0");
    write("old.csv", text);
    const auto r = run({"apply", path("model.json"), path("old.csv")});
    EXPECT_EQ(r.code, kExitData);
    EXPECT_NE(r.err.find("schema mismatch"), std::string::npos) << r.err;

    auto model = slurp(path("model.json"));
    model.replace(model.find("\"v1\""), 4, "\"v0\"");
    write("old.json", model);
    const auto m = run({"apply", path("old.json"), path("dataset.csv")});
    EXPECT_EQ(m.code, kExitData);
    EXPECT_NE(m.err.find("schema mismatch"), std::string::npos) << m.err;
}

TEST_F(CliTest, RankWritesCsvAndConsensus) {
    build_dataset();
    const auto r = run({"rank", path("dataset.csv"), "--methods", "info_gain,one_r", "--top", "3", "-o",
                        path("rank.csv")});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    const auto csv = slurp(path("rank.csv"));
    EXPECT_EQ(csv.rfind("method,feature,score,rank\ninfo_gain,", 0), 0u);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 3 * 20);
    EXPECT_NE(r.out.find(" 1. "), std::string::npos);
    EXPECT_EQ(run({"rank", path("dataset.csv"), "--methods", "ripper"}).code, kExitUsage);
}
