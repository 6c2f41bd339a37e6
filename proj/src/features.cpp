#include "ponzi/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <unordered_map>

#include "ponzi/parallel.hpp"

namespace ponzi::features {

std::optional<double> gini(std::span<const double> values) {
    if (values.empty()) return std::nullopt;
    std::vector<double> x(values.begin(), values.end());
    for (double v : x) {
        if (!(v >= 0)) throw std::invalid_argument("gini: values must be non-negative");
    }
    std::sort(x.begin(), x.end());
    const double n = static_cast<double>(x.size());
    long double total = 0;
    long double weighted = 0;
    // sum_{i,j} |x_i - x_j| = 2 sum_i (2i - n - 1) x_(i) over the sorted values, i 1-based
    for (std::size_t i = 0; i < x.size(); ++i) {
        total += x[i];
        weighted += (2.0L * static_cast<long double>(i + 1) - n - 1.0L) * x[i];
    }
    if (total <= 0) return 0.0;
    const double g = static_cast<double>(weighted / (static_cast<long double>(n) * total));
    return std::clamp(g, 0.0, 1.0);
}

ClusterLedger ClusterLedger::from_events(std::vector<LedgerEvent> incoming, std::vector<LedgerEvent> outgoing) {
    const auto by_time = [](const LedgerEvent& a, const LedgerEvent& b) {
        return a.time != b.time ? a.time < b.time : a.txid < b.txid;
    };
    std::sort(incoming.begin(), incoming.end(), by_time);
    std::sort(outgoing.begin(), outgoing.end(), by_time);

    struct DayAccum {
        std::vector<std::string_view> txids;
        Satoshi net = 0;
    };
    std::map<std::int64_t, DayAccum> per_day;
    for (const auto& e : incoming) {
        auto& d = per_day[chain::day_number(e.time)];
        d.txids.push_back(e.txid);
        d.net += e.amount;
    }
    for (const auto& e : outgoing) {
        auto& d = per_day[chain::day_number(e.time)];
        d.txids.push_back(e.txid);
        d.net -= e.amount;
    }

    ClusterLedger ledger;
    Satoshi balance = 0;
    for (auto& [day, acc] : per_day) {
        std::sort(acc.txids.begin(), acc.txids.end());
        const auto distinct = std::unique(acc.txids.begin(), acc.txids.end()) - acc.txids.begin();
        balance += acc.net;
        ledger.days.push_back({day, static_cast<std::uint32_t>(distinct), balance});
    }
    ledger.incoming = std::move(incoming);
    ledger.outgoing = std::move(outgoing);
    return ledger;
}

ClusterLedger build_ledger(const chain::TxLog& log, std::span<const std::string> sorted_members) {
    const auto member = [&](const std::string& a) {
        return std::binary_search(sorted_members.begin(), sorted_members.end(), a);
    };

    std::vector<std::size_t> touching;
    for (const auto& a : sorted_members) {
        for (const auto& e : log.entries(a)) touching.push_back(e.tx);
    }
    std::sort(touching.begin(), touching.end());
    touching.erase(std::unique(touching.begin(), touching.end()), touching.end());

    std::vector<LedgerEvent> incoming;
    std::vector<LedgerEvent> outgoing;
    for (std::size_t pos : touching) {
        const auto& tx = log.transactions()[pos];
        Satoshi received = 0;
        Satoshi spent = 0;
        bool any_out_to_cluster = false;
        bool any_in_from_cluster = false;
        bool all_inputs_inside = true;
        bool all_outputs_inside = true;
        std::vector<std::string> senders;
        std::vector<std::string> recipients;

        for (const auto& in : tx.inputs) {
            if (in.resolved && member(in.address)) {
                any_in_from_cluster = true;
                spent += in.value;
            } else {
                all_inputs_inside = false;
                if (in.resolved) senders.push_back(in.address);
            }
        }
        for (const auto& out : tx.outputs) {
            if (member(out.address)) {
                any_out_to_cluster = true;
                received += out.value;
            } else {
                all_outputs_inside = false;
                recipients.push_back(out.address);
            }
        }
        if (!tx.coinbase && all_inputs_inside && all_outputs_inside) continue;

        const auto unique_sorted = [](std::vector<std::string>& v) {
            std::sort(v.begin(), v.end());
            v.erase(std::unique(v.begin(), v.end()), v.end());
        };
        if (any_out_to_cluster) {
            unique_sorted(senders);
            incoming.push_back({tx.time, tx.txid, received, std::move(senders)});
        }
        if (any_in_from_cluster) {
            unique_sorted(recipients);
            outgoing.push_back({tx.time, tx.txid, spent, std::move(recipients)});
        }
    }
    return ClusterLedger::from_events(std::move(incoming), std::move(outgoing));
}

ClusterLedger build_ledger(const chain::TxLog& log, const cluster::ClusterSet& clusters, std::size_t cluster) {
    return build_ledger(log, clusters.members(cluster));
}

std::int64_t paid_back_count(const ClusterLedger& ledger) {
    std::unordered_map<std::string_view, std::int64_t> first_payment;
    for (const auto& e : ledger.incoming) {
        for (const auto& a : e.counterparts) first_payment.emplace(a, e.time);  // events are time-ordered
    }
    std::vector<std::string_view> repaid;
    for (const auto& e : ledger.outgoing) {
        for (const auto& a : e.counterparts) {
            auto it = first_payment.find(a);
            if (it != first_payment.end() && it->second < e.time) repaid.push_back(a);
        }
    }
    std::sort(repaid.begin(), repaid.end());
    return std::unique(repaid.begin(), repaid.end()) - repaid.begin();
}

namespace {

struct Moments {
    double mean = 0;
    double sd = 0;
};

// population standard deviation
Moments moments(const std::vector<double>& v) {
    if (v.empty()) return {};
    long double sum = 0;
    for (double x : v) sum += x;
    const long double mean = sum / static_cast<long double>(v.size());
    long double ss = 0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return {static_cast<double>(mean), static_cast<double>(std::sqrt(ss / static_cast<long double>(v.size())))};
}

std::vector<double> amounts(const std::vector<LedgerEvent>& events) {
    std::vector<double> out;
    out.reserve(events.size());
    for (const auto& e : events) out.push_back(static_cast<double>(e.amount));
    return out;
}

}  // namespace

FeatureVector extract_features(const ClusterLedger& ledger, std::int64_t n_addr) {
    FeatureVector f;
    f.n_addr = n_addr;
    f.count_in = static_cast<std::int64_t>(ledger.incoming.size());
    f.count_out = static_cast<std::int64_t>(ledger.outgoing.size());

    if (!ledger.days.empty()) {
        const std::int64_t last_day = ledger.days.back().day;
        if (!ledger.incoming.empty()) {
            f.lifetime_days = std::max<std::int64_t>(0, last_day - chain::day_number(ledger.incoming.front().time));
        }
        f.activity_days = static_cast<std::int64_t>(ledger.days.size());
        for (std::size_t i = 0; i < ledger.days.size(); ++i) {
            f.max_daily_tx = std::max<std::int64_t>(f.max_daily_tx, ledger.days[i].transactions);
            if (i > 0) {
                const Satoshi delta = ledger.days[i].balance - ledger.days[i - 1].balance;
                f.max_daily_balance_delta = std::max(f.max_daily_balance_delta, delta < 0 ? -delta : delta);
            }
        }
    }

    const auto in_values = amounts(ledger.incoming);
    const auto out_values = amounts(ledger.outgoing);
    f.gini_in = gini(in_values).value_or(0.0);
    f.gini_out = gini(out_values).value_or(0.0);
    for (const auto& e : ledger.incoming) f.sum_in += e.amount;
    for (const auto& e : ledger.outgoing) f.sum_out += e.amount;
    if (f.count_in + f.count_out > 0) {
        f.in_share = static_cast<double>(f.count_in) / static_cast<double>(f.count_in + f.count_out);
    }
    const auto mi = moments(in_values);
    const auto mo = moments(out_values);
    f.avg_in = mi.mean;
    f.std_in = mi.sd;
    f.avg_out = mo.mean;
    f.std_out = mo.sd;

    f.paid_back_addrs = paid_back_count(ledger);

    // each outgoing event pairs with the latest earlier-or-simultaneous
    // incoming event of a different transaction
    std::int64_t pairs = 0;
    long double delay_sum = 0;
    f.delay_min = std::numeric_limits<std::int64_t>::max();
    for (const auto& out : ledger.outgoing) {
        auto it = std::upper_bound(ledger.incoming.begin(), ledger.incoming.end(), out.time,
                                   [](std::int64_t t, const LedgerEvent& e) { return t < e.time; });
        while (it != ledger.incoming.begin() && std::prev(it)->txid == out.txid) --it;
        if (it == ledger.incoming.begin()) continue;
        const std::int64_t delay = out.time - std::prev(it)->time;
        f.delay_min = std::min(f.delay_min, delay);
        f.delay_max = std::max(f.delay_max, delay);
        delay_sum += delay;
        ++pairs;
    }
    if (pairs == 0) {
        f.delay_min = 0;
    } else {
        f.delay_avg = static_cast<double>(delay_sum / pairs);
    }
    return f;
}

std::vector<FeatureVector> extract_all(const chain::TxLog& log, const cluster::ClusterSet& clusters,
                                       unsigned threads) {
    std::vector<FeatureVector> out(clusters.cluster_count());
    parallel_for(out.size(), threads, [&](std::size_t c) {
        const auto members = clusters.members(c);
        out[c] = extract_features(build_ledger(log, members), static_cast<std::int64_t>(members.size()));
    });
    return out;
}

std::array<double, kFeatureCount> to_values(const FeatureVector& f) {
    const auto d = [](auto v) { return static_cast<double>(v); };
    return {d(f.n_addr),    d(f.lifetime_days), d(f.activity_days),   d(f.max_daily_tx),
            f.gini_in,      f.gini_out,         d(f.sum_in),          d(f.sum_out),
            d(f.count_in),  d(f.count_out),     f.in_share,           f.avg_in,
            f.std_in,       f.avg_out,          f.std_out,            d(f.paid_back_addrs),
            d(f.delay_min), d(f.delay_max),     f.delay_avg,          d(f.max_daily_balance_delta)};
}

std::int64_t* integer_field(FeatureVector& f, std::size_t column) {
    switch (column) {
        case 0: return &f.n_addr;
        case 1: return &f.lifetime_days;
        case 2: return &f.activity_days;
        case 3: return &f.max_daily_tx;
        case 6: return &f.sum_in;
        case 7: return &f.sum_out;
        case 8: return &f.count_in;
        case 9: return &f.count_out;
        case 15: return &f.paid_back_addrs;
        case 16: return &f.delay_min;
        case 17: return &f.delay_max;
        case 19: return &f.max_daily_balance_delta;
        default: return nullptr;
    }
}

const std::int64_t* integer_field(const FeatureVector& f, std::size_t column) {
    return integer_field(const_cast<FeatureVector&>(f), column);
}

FeatureVector from_values(std::span<const double> v) {
    if (v.size() != kFeatureCount) throw std::invalid_argument("feature vector has wrong arity");
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
        if (!std::isfinite(v[i])) throw std::invalid_argument("non-finite feature value");
        if (kColumns[i].kind == ColumnKind::integer && v[i] != std::trunc(v[i])) {
            throw std::invalid_argument("integer feature " + std::string(kColumns[i].name) + " is not integral");
        }
    }
    const auto i64 = [](double x) { return static_cast<std::int64_t>(x); };
    FeatureVector f;
    f.n_addr = i64(v[0]);
    f.lifetime_days = i64(v[1]);
    f.activity_days = i64(v[2]);
    f.max_daily_tx = i64(v[3]);
    f.gini_in = v[4];
    f.gini_out = v[5];
    f.sum_in = i64(v[6]);
    f.sum_out = i64(v[7]);
    f.count_in = i64(v[8]);
    f.count_out = i64(v[9]);
    f.in_share = v[10];
    f.avg_in = v[11];
    f.std_in = v[12];
    f.avg_out = v[13];
    f.std_out = v[14];
    f.paid_back_addrs = i64(v[15]);
    f.delay_min = i64(v[16]);
    f.delay_max = i64(v[17]);
    f.delay_avg = v[18];
    f.max_daily_balance_delta = i64(v[19]);
    return f;
}

std::optional<std::size_t> column_index(std::string_view name) {
    for (std::size_t i = 0; i < kColumns.size(); ++i) {
        if (kColumns[i].name == name) return i;
    }
    return std::nullopt;
}

}  // namespace ponzi::features
