#include <gtest/gtest.h>

#include <sstream>

#include "ponzi/clustering.hpp"
#include "support.hpp"

using namespace ponzi;
using namespace ponzi::cluster;
using ponzi::testing::LogBuilder;

namespace {

std::set<std::set<std::string>> partition(const ClusterSet& cs) {
    std::set<std::set<std::string>> out;
    for (std::size_t c = 0; c < cs.cluster_count(); ++c) {
        const auto m = cs.members(c);
        out.emplace(m.begin(), m.end());
    }
    return out;
}

}  // namespace

TEST(DisjointSets, FindIsIdempotent) {
    DisjointSets ds(6);
    ds.unite(0, 1);
    ds.unite(2, 3);
    ds.unite(1, 3);
    for (std::uint32_t i = 0; i < 6; ++i) EXPECT_EQ(ds.find(ds.find(i)), ds.find(i));
    EXPECT_EQ(ds.find(0), ds.find(2));
    EXPECT_NE(ds.find(0), ds.find(4));
    EXPECT_EQ(ds.set_size(0), 4u);
}

TEST(BuildClusters, SingleInputOnlyGivesSingletons) {
    LogBuilder b;
    const auto t = b.coinbase(1, {{"A", 10}, {"B", 10}});
    b.spend(2, {{t, 0}}, {{"C", 10}});
    b.spend(3, {{t, 1}}, {{"D", 5}, {"E", 5}});
    const auto cs = build_clusters(b.build());
    EXPECT_EQ(cs.cluster_count(), 5u);
    EXPECT_EQ(cs.address_count(), 5u);
}

TEST(BuildClusters, FigureOneMergesB1AndB2) {
    const auto f = ponzi::testing::figure1();
    const auto cs = build_clusters(f.log);
    EXPECT_EQ(cs.cluster_of("B1"), cs.cluster_of("B2"));
    EXPECT_NE(cs.cluster_of("A"), cs.cluster_of("B1"));
    EXPECT_EQ(cs.cluster_count(), 3u);  // {A}, {B1,B2}, {C}
}

TEST(BuildClusters, IndicesFollowSmallestMember) {
    LogBuilder b;
    const auto t = b.coinbase(1, {{"zeta", 10}, {"beta", 10}, {"alpha", 10}, {"mid", 10}});
    b.spend(2, {{t, 0}, {t, 1}}, {{"out", 20}});
    const auto cs = build_clusters(b.build());
    ASSERT_EQ(cs.cluster_count(), 4u);
    EXPECT_EQ(cs.representative(0), "alpha");
    EXPECT_EQ(cs.representative(1), "beta");
    EXPECT_EQ(cs.members(1).size(), 2u);
    EXPECT_EQ(cs.representative(2), "mid");
    EXPECT_EQ(cs.representative(3), "out");
}

TEST(BuildClusters, MatchesBfsComponentsOnRandomLogs) {
    ponzi::Rng rng(2024);
    for (int round = 0; round < 60; ++round) {
        const std::size_t n_tx = 1 + rng.below(1000);
        const std::size_t n_addr = 1 + rng.below(300);
        const chain::TxLog log(ponzi::testing::random_transactions(rng, n_tx, n_addr));
        ASSERT_EQ(partition(build_clusters(log)), ponzi::testing::bfs_components(log)) << "round " << round;
    }
}

TEST(BuildClusters, OrderIndependent) {
    ponzi::Rng rng(99);
    auto txs = ponzi::testing::random_transactions(rng, 500, 80);
    const auto expected = build_clusters(chain::TxLog(txs));
    // same transactions under permuted timestamps: union order changes, partition must not
    ponzi::Rng shuffle(5);
    std::vector<std::int64_t> times;
    for (const auto& tx : txs) times.push_back(tx.time);
    shuffle.shuffle(std::span<std::int64_t>(times));
    for (std::size_t i = 0; i < txs.size(); ++i) txs[i].time = times[i];
    EXPECT_EQ(build_clusters(chain::TxLog(txs)), expected);
}

TEST(BuildClusters, AddingTransactionsNeverSplits) {
    ponzi::Rng rng(17);
    const auto txs = ponzi::testing::random_transactions(rng, 600, 100);
    std::vector<chain::Transaction> prefix(txs.begin(), txs.begin() + 300);
    const auto before = build_clusters(chain::TxLog(prefix));
    const auto after = build_clusters(chain::TxLog(txs));
    for (std::size_t c = 0; c < before.cluster_count(); ++c) {
        const auto m = before.members(c);
        const auto target = after.cluster_of(m.front());
        for (const auto& a : m) EXPECT_EQ(after.cluster_of(a), target);
    }
}

TEST(ClusterOf, TransitiveChain) {
    LogBuilder b;
    const auto t = b.coinbase(1, {{"a", 10}, {"b", 10}, {"b", 10}, {"c", 10}, {"s", 1}});
    b.spend(2, {{t, 0}, {t, 1}}, {{"x", 20}});
    b.spend(3, {{t, 2}, {t, 3}}, {{"y", 20}});
    const auto cs = build_clusters(b.build());
    EXPECT_EQ(cs.cluster_of("a"), cs.cluster_of("c"));
    EXPECT_EQ(cs.members(cs.cluster_of("s")).size(), 1u);
    EXPECT_EQ(cs.representative(cs.cluster_of("s")), "s");
    EXPECT_THROW(cs.cluster_of("nobody"), UnknownAddressError);
    EXPECT_FALSE(cs.find("nobody").has_value());
}

TEST(ExpandSeeds, SingletonAndLargeCluster) {
    LogBuilder b;
    std::vector<chain::TxOutput> outs{{"deposit", 1}};
    for (int i = 0; i < 490; ++i) outs.push_back({fmt::format("other{:03}", i), 1});
    outs.push_back({"lonely", 1});
    const auto t = b.coinbase(1, outs);
    std::vector<chain::OutPoint> ins;
    for (std::uint32_t i = 0; i < 491; ++i) ins.push_back({t, i});
    b.spend(2, ins, {{"sink", 491}});
    const auto cs = build_clusters(b.build());

    const auto exp = expand_seeds(cs, {{"Lonely", "lonely"}, {"LaxoTrade", "deposit"}});
    ASSERT_EQ(exp.clusters.at("Lonely").size(), 1u);
    EXPECT_EQ(cs.members(*exp.clusters.at("Lonely").begin()).size(), 1u);
    ASSERT_EQ(exp.clusters.at("LaxoTrade").size(), 1u);
    EXPECT_EQ(cs.members(*exp.clusters.at("LaxoTrade").begin()).size(), 491u);
    EXPECT_TRUE(exp.collisions.empty());
    EXPECT_TRUE(exp.unresolved.empty());
}

TEST(ExpandSeeds, CollisionAndUnresolved) {
    LogBuilder b;
    const auto t = b.coinbase(1, {{"p1", 5}, {"p2", 5}});
    b.spend(2, {{t, 0}, {t, 1}}, {{"q", 10}});
    const auto cs = build_clusters(b.build());
    const auto exp = expand_seeds(cs, {{"SchemeA", "p1"}, {"SchemeB", "p2"}, {"Ghost", "missing"}});
    EXPECT_EQ(exp.clusters.at("SchemeA"), exp.clusters.at("SchemeB"));
    ASSERT_EQ(exp.collisions.size(), 1u);
    EXPECT_EQ(exp.collisions.begin()->second, (std::vector<std::string>{"SchemeA", "SchemeB"}));
    ASSERT_EQ(exp.unresolved.size(), 1u);
    EXPECT_EQ(exp.unresolved[0].address, "missing");
}

TEST(SeedFile, Parses) {
    std::istringstream in("label,address\nSchemeA,p1\n\"Scheme, B\",p2\n");
    const auto seeds = parse_seed_file(in);
    ASSERT_EQ(seeds.size(), 2u);
    EXPECT_EQ(seeds[1].label, "Scheme, B");
    std::istringstream bad("label,address\nonlyone\n");
    EXPECT_THROW(parse_seed_file(bad), ParseError);
}

TEST(ClusterDump, RoundTrip) {
    ponzi::Rng rng(1);
    const auto cs = build_clusters(chain::TxLog(ponzi::testing::random_transactions(rng, 300, 60)));
    std::stringstream buf;
    write_cluster_dump(cs, buf);
    const auto text = buf.str();
    EXPECT_EQ(text.rfind("cluster_id,address\n", 0), 0u);
    const auto back = read_cluster_dump(buf);
    EXPECT_EQ(back, cs);
    std::ostringstream again;
    write_cluster_dump(back, again);
    EXPECT_EQ(again.str(), text);
}

TEST(ClusterDump, RejectsAddressInTwoClusters) {
    std::istringstream in("cluster_id,address\n0,a\n1,a\n");
    EXPECT_THROW(read_cluster_dump(in), DataError);
}
