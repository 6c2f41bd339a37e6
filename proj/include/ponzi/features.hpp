#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ponzi/chain.hpp"
#include "ponzi/clustering.hpp"

namespace ponzi::features {

using chain::Satoshi;

/// Gini coefficient on [0, 1]: sum |x_i - x_j| over ordered pairs divided by
/// 2 n sum(x). All-equal input (including all zeros) gives 0; empty input
/// has no defined value. Throws std::invalid_argument on negative values.
std::optional<double> gini(std::span<const double> values);

/// One transaction's flow into or out of a cluster, aggregated over all of
/// that transaction's outputs (incoming) or redeemed outputs (outgoing).
struct LedgerEvent {
    std::int64_t time = 0;
    std::string txid;
    Satoshi amount = 0;
    /// Senders (incoming) or recipients (outgoing) outside the cluster; sorted, unique.
    std::vector<std::string> counterparts;
};

struct LedgerDay {
    std::int64_t day = 0;        // days since epoch, UTC
    std::uint32_t transactions = 0;  // distinct transactions with an event that day
    Satoshi balance = 0;         // cumulative in - out at end of day
};

struct ClusterLedger {
    std::vector<LedgerEvent> incoming;  // sorted by (time, txid)
    std::vector<LedgerEvent> outgoing;  // sorted by (time, txid)
    std::vector<LedgerDay> days;        // active days only, ascending

    /// Sorts the events and derives the per-day table.
    static ClusterLedger from_events(std::vector<LedgerEvent> incoming, std::vector<LedgerEvent> outgoing);

    bool empty() const noexcept { return incoming.empty() && outgoing.empty(); }
};

/// Ledger of a set of addresses treated as one super-address. A non-coinbase
/// transaction whose inputs and outputs all belong to the set is internal and
/// contributes nothing; a transaction can be both incoming and outgoing.
ClusterLedger build_ledger(const chain::TxLog& log, std::span<const std::string> sorted_members);
ClusterLedger build_ledger(const chain::TxLog& log, const cluster::ClusterSet& clusters, std::size_t cluster);

/// Counterparts that paid the cluster and were later (strictly) paid by it.
std::int64_t paid_back_count(const ClusterLedger& ledger);

/// Per-cluster behavioral features. Amounts are satoshi, delays seconds,
/// lifetimes days. Undefined statistics are 0, never NaN.
struct FeatureVector {
    std::int64_t n_addr = 0;
    std::int64_t lifetime_days = 0;
    std::int64_t activity_days = 0;
    std::int64_t max_daily_tx = 0;
    double gini_in = 0;
    double gini_out = 0;
    Satoshi sum_in = 0;
    Satoshi sum_out = 0;
    std::int64_t count_in = 0;
    std::int64_t count_out = 0;
    double in_share = 0;
    double avg_in = 0;
    double std_in = 0;
    double avg_out = 0;
    double std_out = 0;
    std::int64_t paid_back_addrs = 0;
    std::int64_t delay_min = 0;
    std::int64_t delay_max = 0;
    double delay_avg = 0;
    Satoshi max_daily_balance_delta = 0;

    friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

FeatureVector extract_features(const ClusterLedger& ledger, std::int64_t n_addr);

/// Features of every cluster, indexed by cluster. Output does not depend on
/// the thread count.
std::vector<FeatureVector> extract_all(const chain::TxLog& log, const cluster::ClusterSet& clusters,
                                       unsigned threads = 0);

// Column schema. The version string is written into every CSV header.
inline constexpr std::string_view kSchemaVersion = "v1";
inline constexpr std::size_t kFeatureCount = 20;

enum class ColumnKind { integer, real };

struct Column {
    std::string_view name;
    ColumnKind kind;
};

inline constexpr std::array<Column, kFeatureCount> kColumns{{
    {"n_addr", ColumnKind::integer},
    {"lifetime_days", ColumnKind::integer},
    {"activity_days", ColumnKind::integer},
    {"max_daily_tx", ColumnKind::integer},
    {"gini_in", ColumnKind::real},
    {"gini_out", ColumnKind::real},
    {"sum_in", ColumnKind::integer},
    {"sum_out", ColumnKind::integer},
    {"count_in", ColumnKind::integer},
    {"count_out", ColumnKind::integer},
    {"in_share", ColumnKind::real},
    {"avg_in", ColumnKind::real},
    {"std_in", ColumnKind::real},
    {"avg_out", ColumnKind::real},
    {"std_out", ColumnKind::real},
    {"paid_back_addrs", ColumnKind::integer},
    {"delay_min", ColumnKind::integer},
    {"delay_max", ColumnKind::integer},
    {"delay_avg", ColumnKind::real},
    {"max_daily_balance_delta", ColumnKind::integer},
}};

std::array<double, kFeatureCount> to_values(const FeatureVector& f);

/// Exact storage of an integer column; nullptr for real columns.
std::int64_t* integer_field(FeatureVector& f, std::size_t column);
const std::int64_t* integer_field(const FeatureVector& f, std::size_t column);
/// Inverse of to_values; integer columns must hold integral values.
FeatureVector from_values(std::span<const double> values);

/// Index of a column by name, or nullopt.
std::optional<std::size_t> column_index(std::string_view name);

}  // namespace ponzi::features
