#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <queue>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "ponzi/chain.hpp"
#include "ponzi/random.hpp"

namespace ponzi::testing {

inline std::string hex_id(std::uint64_t n) { return fmt::format("{:064x}", n); }

constexpr chain::Satoshi btc(double v) { return static_cast<chain::Satoshi>(v * 100'000'000.0 + 0.5); }

/// Builds transaction vectors by hand; txids are hex_id(1), hex_id(2), ...
class LogBuilder {
public:
    std::string coinbase(std::int64_t time, std::vector<chain::TxOutput> outputs) {
        chain::Transaction tx;
        tx.txid = hex_id(++next_);
        tx.time = time;
        tx.coinbase = true;
        tx.outputs = std::move(outputs);
        txs_.push_back(tx);
        return tx.txid;
    }

    std::string spend(std::int64_t time, std::vector<chain::OutPoint> inputs, std::vector<chain::TxOutput> outputs) {
        chain::Transaction tx;
        tx.txid = hex_id(++next_);
        tx.time = time;
        for (auto& p : inputs) {
            chain::TxInput in;
            in.prev = std::move(p);
            tx.inputs.push_back(std::move(in));
        }
        tx.outputs = std::move(outputs);
        txs_.push_back(tx);
        return tx.txid;
    }

    const std::vector<chain::Transaction>& transactions() const { return txs_; }
    chain::TxLog build() const { return chain::TxLog(txs_); }

private:
    std::uint64_t next_ = 0;
    std::vector<chain::Transaction> txs_;
};

/// The three-transaction example: T pays 1 BTC to A and 2 BTC to B1; T_A
/// spends (T,0) into 0.9 to B2 and 0.1 to A; T_B spends (T,1) and (T_A,0)
/// into 2.5 to C.
struct Figure1 {
    std::string t, ta, tb;
    chain::TxLog log;
};

inline Figure1 figure1() {
    LogBuilder b;
    Figure1 f;
    f.t = b.coinbase(1000, {{"A", btc(1)}, {"B1", btc(2)}});
    f.ta = b.spend(2000, {{f.t, 0}}, {{"B2", btc(0.9)}, {"A", btc(0.1)}});
    f.tb = b.spend(3000, {{f.t, 1}, {f.ta, 0}}, {{"C", btc(2.5)}});
    f.log = b.build();
    return f;
}

/// Random valid log: coinbases mint into a pool of addresses and spends
/// redeem 1..max_inputs unspent outputs into 1..3 outputs.
inline std::vector<chain::Transaction> random_transactions(Rng& rng, std::size_t n_tx, std::size_t n_addr,
                                                           std::size_t max_inputs = 4) {
    std::vector<chain::Transaction> txs;
    struct Unspent {
        chain::OutPoint point;
        chain::Satoshi value;
    };
    std::vector<Unspent> pool;
    const auto addr = [&] { return fmt::format("a{:04}", rng.below(n_addr)); };
    for (std::size_t i = 0; i < n_tx; ++i) {
        chain::Transaction tx;
        tx.txid = hex_id(mix64(i + 1));
        tx.time = 1'500'000'000 + static_cast<std::int64_t>(i) * 60;
        if (pool.empty() || rng.below(4) == 0) {
            tx.coinbase = true;
            tx.outputs.push_back({addr(), 1'000'000 + static_cast<chain::Satoshi>(rng.below(1'000'000))});
        } else {
            const std::size_t k = 1 + rng.below(std::min(max_inputs, pool.size()));
            chain::Satoshi total = 0;
            for (std::size_t j = 0; j < k; ++j) {
                const std::size_t pick = rng.below(pool.size());
                chain::TxInput in;
                in.prev = pool[pick].point;
                total += pool[pick].value;
                tx.inputs.push_back(std::move(in));
                pool[pick] = pool.back();
                pool.pop_back();
            }
            const std::size_t outs = 1 + rng.below(3);
            const chain::Satoshi fee = std::min<chain::Satoshi>(total, static_cast<chain::Satoshi>(rng.below(100)));
            chain::Satoshi left = total - fee;
            for (std::size_t o = 0; o < outs; ++o) {
                const chain::Satoshi v = o + 1 == outs ? left : left / 2;
                tx.outputs.push_back({addr(), v});
                left -= v;
            }
        }
        for (std::uint32_t o = 0; o < tx.outputs.size(); ++o) pool.push_back({{tx.txid, o}, tx.outputs[o].value});
        txs.push_back(std::move(tx));
    }
    return txs;
}

/// Connected components of the co-spend graph by breadth-first search: an
/// edge joins every pair of resolved input addresses of one transaction.
inline std::set<std::set<std::string>> bfs_components(const chain::TxLog& log) {
    std::map<std::string, std::set<std::string>> adj;
    for (const auto& a : log.addresses()) adj[a];
    for (const auto& tx : log.transactions()) {
        std::vector<std::string> in;
        for (const auto& i : tx.inputs) {
            if (i.resolved) in.push_back(i.address);
        }
        for (const auto& a : in) {
            adj[a];
            for (const auto& b : in) {
                if (a != b) adj[a].insert(b);
            }
        }
    }
    std::set<std::string> seen;
    std::set<std::set<std::string>> out;
    for (const auto& [start, _] : adj) {
        if (seen.contains(start)) continue;
        std::set<std::string> comp;
        std::queue<std::string> q;
        q.push(start);
        seen.insert(start);
        while (!q.empty()) {
            auto a = q.front();
            q.pop();
            comp.insert(a);
            for (const auto& b : adj[a]) {
                if (seen.insert(b).second) q.push(b);
            }
        }
        out.insert(std::move(comp));
    }
    return out;
}

/// O(n^2) Gini: sum over ordered pairs of |x_i - x_j| / (2 n sum x).
inline double pairwise_gini(std::span<const double> x) {
    long double diff = 0, sum = 0;
    for (double a : x) {
        sum += a;
        for (double b : x) diff += std::fabs(static_cast<long double>(a) - b);
    }
    if (sum == 0) return 0;
    return static_cast<double>(diff / (2.0L * x.size() * sum));
}

/// O(n^2) AUC: (#pos > neg + 0.5 #ties) / (|pos| |neg|).
inline double pairwise_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    double wins = 0;
    std::size_t pos = 0, neg = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i]) {
            ++pos;
        } else {
            ++neg;
        }
        if (!labels[i]) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j]) continue;
            if (scores[i] > scores[j]) {
                wins += 1;
            } else if (scores[i] == scores[j]) {
                wins += 0.5;
            }
        }
    }
    return wins / (static_cast<double>(pos) * static_cast<double>(neg));
}

}  // namespace ponzi::testing
