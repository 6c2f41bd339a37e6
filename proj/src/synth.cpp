#include "ponzi/synth.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <istream>
#include <ostream>
#include <queue>
#include <string>
#include <unordered_map>
#include <unordered_set>

#include <fmt/format.h>

#include "ponzi/csv.hpp"
#include "ponzi/error.hpp"
#include "ponzi/random.hpp"

namespace ponzi::synth {

using chain::OutPoint;
using chain::Satoshi;
using chain::Transaction;
using chain::TxInput;
using chain::TxOutput;

void SynthParams::validate() const {
    const auto require = [](bool ok, const char* what) {
        if (!ok) throw DataError(fmt::format("invalid synth parameter: {}", what));
    };
    require(horizon_days >= 60, "horizon must be at least 60 days");
    require(deposit_count.sigma >= 0 && std::isfinite(deposit_count.mu), "deposit count distribution");
    require(deposit_btc.sigma >= 0 && std::isfinite(deposit_btc.mu), "deposit value distribution");
    require(background_funding_btc.sigma >= 0 && std::isfinite(background_funding_btc.mu), "funding distribution");
    require(payout_multiplier > 0 && std::isfinite(payout_multiplier), "payout multiplier must be positive");
    require(payout_delay_days >= 0 && std::isfinite(payout_delay_days), "payout delay must be non-negative");
    require(implosion_fraction >= 0 && implosion_fraction <= 1, "implosion fraction must lie in [0, 1]");
    require(scheme_days_min >= 1 && scheme_days_max >= scheme_days_min, "scheme duration range");
    require(scheme_days_max + 30 < static_cast<double>(horizon_days), "schemes must fit in the horizon");
    require(max_scheme_addresses >= 1 && max_background_addresses >= 1, "address counts must be positive");
    require(background_payments >= 0 && std::isfinite(background_payments), "background payment rate");
    require(service_fraction >= 0 && service_fraction <= 1, "service fraction must lie in [0, 1]");
    require(n_ponzi == 0 || n_background > 0, "schemes need background investors");
}

SynthParams hard_mode(SynthParams p) {
    p.hard = true;
    p.deposit_count = {3.2, 0.6};
    p.payout_multiplier = 1.05;
    p.payout_delay_days = 15;
    p.implosion_fraction = 0.5;
    p.background_payments = 10;
    return p;
}

namespace {

constexpr std::int64_t kDay = 86'400;
constexpr Satoshi kFee = 1'000;
constexpr Satoshi kDust = 10'000;
constexpr Satoshi kSchemeFunding = 100'000;
constexpr std::int64_t kPayoutBatchDays = 3;
constexpr std::string_view kBase58 = "123456789ABCDEFGHJKLMNPQRSTUVWXYZabcdefghijkmnopqrstuvwxyz";

struct Utxo {
    OutPoint point;
    std::string address;
    Satoshi value = 0;
};

struct Entity {
    std::vector<std::string> addresses;
    std::deque<Utxo> utxos;
    Satoshi balance = 0;
    bool service = false;
};

struct Due {
    std::int64_t due = 0;
    std::string address;
    Satoshi amount = 0;
};

struct Scheme {
    std::size_t entity = 0;
    std::size_t deposits = 0;
    std::size_t repaid_deposits = 0;  // deposits with index below this get a payout
    std::vector<Due> due;             // kept sorted by due time
};

enum class Kind { bootstrap, payment, deposit, payout, service_repay };

struct Action {
    std::int64_t time = 0;
    std::uint64_t seq = 0;
    Kind kind = Kind::payment;
    std::size_t a = 0;  // acting entity or scheme
    std::size_t b = 0;  // counterparty entity or deposit index
    Satoshi value = 0;
    std::string address;

    bool operator>(const Action& o) const { return time != o.time ? time > o.time : seq > o.seq; }
};

Satoshi to_satoshi(double btc) {
    return static_cast<Satoshi>(std::llround(btc * static_cast<double>(chain::kSatoshiPerBtc)));
}

class Generator {
public:
    explicit Generator(const SynthParams& p) : p_(p), rng_(p.seed), salt_(derive_seed(p.seed, 0xadd5)) {}

    SynthResult run() {
        create_entities();
        schedule();
        while (!queue_.empty()) {
            const Action a = queue_.top();
            queue_.pop();
            execute(a);
        }

        SynthResult result;
        for (std::size_t s = 0; s < schemes_.size(); ++s) {
            const auto& addrs = entities_[schemes_[s].entity].addresses;
            result.scheme_addresses.push_back(addrs);
            result.labels.push_back({*std::min_element(addrs.begin(), addrs.end()), data::Label::ponzi});
        }
        for (std::size_t e = 0; e < p_.n_background; ++e) result.background_addresses.push_back(entities_[e].addresses);
        result.log = chain::TxLog(std::move(txs_));
        return result;
    }

private:
    std::string word_string(std::size_t words, auto&& render) {
        std::string out;
        for (std::size_t w = 0; w < words; ++w) render(out, mix64(salt_ + counter_ * 4 + w));
        ++counter_;
        return out;
    }

    std::string new_address() {
        for (;;) {
            std::string a = word_string(4, [](std::string& out, std::uint64_t x) {
                const std::size_t chars = out.empty() ? 8 : 9;
                if (out.empty()) out += '1';
                for (std::size_t i = 0; i < chars; ++i) {
                    out += kBase58[x % kBase58.size()];
                    x /= kBase58.size();
                }
            });
            if (used_addresses_.insert(a).second) return a;
        }
    }

    std::string new_txid() {
        return word_string(4, [](std::string& out, std::uint64_t x) { out += fmt::format("{:016x}", x); });
    }

    void create_entities() {
        for (std::size_t e = 0; e < p_.n_background; ++e) {
            Entity ent;
            const std::size_t n = 1 + rng_.below(p_.max_background_addresses);
            for (std::size_t i = 0; i < n; ++i) ent.addresses.push_back(new_address());
            ent.service = p_.hard && rng_.bernoulli(p_.service_fraction);
            if (ent.service) services_.push_back(e);
            entities_.push_back(std::move(ent));
        }
        for (std::size_t s = 0; s < p_.n_ponzi; ++s) {
            Entity ent;
            const std::size_t n = 1 + rng_.below(p_.max_scheme_addresses);
            for (std::size_t i = 0; i < n; ++i) ent.addresses.push_back(new_address());
            schemes_.push_back({entities_.size(), 0, 0, {}});
            entities_.push_back(std::move(ent));
        }
        deposits_seen_.assign(schemes_.size(), 0);
    }

    void push(Action a) {
        a.seq = seq_++;
        queue_.push(std::move(a));
    }

    std::int64_t day_start(double day) const { return p_.start_time + static_cast<std::int64_t>(day * kDay); }

    void schedule() {
        const double horizon = static_cast<double>(p_.horizon_days);
        for (std::size_t e = 0; e < entities_.size(); ++e) {
            push({day_start(rng_.uniform(0, 5)), 0, Kind::bootstrap, e, 0, 0, {}});
        }

        const double gap = p_.background_payments > 0 ? (horizon - 7) / p_.background_payments : 0;
        for (std::size_t e = 0; e < p_.n_background && gap > 0; ++e) {
            for (double t = 7 + rng_.exponential(gap); t < horizon; t += rng_.exponential(gap)) {
                push({day_start(t), 0, Kind::payment, e, 0, 0, {}});
            }
        }

        for (std::size_t s = 0; s < schemes_.size(); ++s) {
            auto& scheme = schemes_[s];
            const double start = rng_.uniform(10, horizon - p_.scheme_days_max - 30);
            const double length = rng_.uniform(p_.scheme_days_min, p_.scheme_days_max);
            const double drawn = std::round(rng_.lognormal(p_.deposit_count.mu, p_.deposit_count.sigma));
            scheme.deposits = static_cast<std::size_t>(std::clamp(drawn, 5.0, 2000.0));
            scheme.repaid_deposits = static_cast<std::size_t>(
                std::floor(static_cast<double>(scheme.deposits) * (1.0 - p_.implosion_fraction)));

            std::vector<double> times(scheme.deposits);
            for (auto& t : times) t = start + rng_.uniform(0, length);
            std::sort(times.begin(), times.end());
            for (std::size_t d = 0; d < times.size(); ++d) {
                const std::size_t investor = rng_.below(p_.n_background);
                const Satoshi value = std::max(kDust * 10, to_satoshi(rng_.lognormal(p_.deposit_btc.mu, p_.deposit_btc.sigma)));
                push({day_start(times[d]), 0, Kind::deposit, s, investor, value, {}});
            }
            const double offset = rng_.uniform(0, kPayoutBatchDays);
            for (double t = start + offset; t < horizon; t += kPayoutBatchDays) {
                push({day_start(t), 0, Kind::payout, s, 0, 0, {}});
            }
        }
    }

    std::int64_t stamp(std::int64_t planned) {
        last_time_ = std::max(planned, last_time_ + 1);
        return last_time_;
    }

    const std::string& pick_address(const Entity& e) { return e.addresses[rng_.below(e.addresses.size())]; }

    void credit(std::size_t entity, const std::string& txid, std::uint32_t index, const TxOutput& out) {
        auto& e = entities_[entity];
        e.utxos.push_back({{txid, index}, out.address, out.value});
        e.balance += out.value;
    }

    /// Spends the oldest outputs of `payer` to cover `need`; returns the inputs
    /// and the amount gathered. Caller checks the balance first.
    std::pair<std::vector<TxInput>, Satoshi> gather(std::size_t payer, Satoshi need) {
        auto& e = entities_[payer];
        std::vector<TxInput> inputs;
        Satoshi got = 0;
        while (got < need) {
            Utxo u = std::move(e.utxos.front());
            e.utxos.pop_front();
            got += u.value;
            TxInput in;
            in.prev = std::move(u.point);
            inputs.push_back(std::move(in));
        }
        e.balance -= got;
        return {std::move(inputs), got};
    }

    struct Payee {
        std::size_t entity;
        std::string address;
        Satoshi amount;
    };

    /// Builds a payment from `payer` with change back to the payer; returns
    /// the first input address for counterpart bookkeeping.
    std::string pay(std::size_t payer, const std::vector<Payee>& payees, std::int64_t planned) {
        Satoshi total = kFee;
        for (const auto& p : payees) total += p.amount;
        const std::string first_address = entities_[payer].utxos.front().address;
        auto [inputs, got] = gather(payer, total);

        Transaction tx;
        tx.txid = new_txid();
        tx.time = stamp(planned);
        tx.inputs = std::move(inputs);
        for (const auto& p : payees) tx.outputs.push_back({p.address, p.amount});
        if (got > total) tx.outputs.push_back({pick_address(entities_[payer]), got - total});
        std::size_t i = 0;
        for (const auto& p : payees) credit(p.entity, tx.txid, static_cast<std::uint32_t>(i), tx.outputs[i]), ++i;
        if (got > total) credit(payer, tx.txid, static_cast<std::uint32_t>(i), tx.outputs[i]);
        txs_.push_back(std::move(tx));
        return first_address;
    }

    void bootstrap(std::size_t entity, std::int64_t planned) {
        auto& e = entities_[entity];
        const bool scheme = entity >= p_.n_background;
        std::vector<TxOutput> minted;
        std::vector<OutPoint> points;
        for (const auto& addr : e.addresses) {
            const Satoshi value = scheme ? kSchemeFunding
                                         : std::max(kDust * 10, to_satoshi(rng_.lognormal(p_.background_funding_btc.mu,
                                                                                          p_.background_funding_btc.sigma)));
            Transaction tx;
            tx.txid = new_txid();
            tx.time = stamp(planned);
            tx.coinbase = true;
            tx.outputs.push_back({addr, value});
            minted.push_back(tx.outputs.back());
            points.push_back({tx.txid, 0});
            txs_.push_back(std::move(tx));
        }
        if (e.addresses.size() == 1) {
            credit(entity, points[0].txid, 0, minted[0]);
            return;
        }
        // consolidate: every address co-spends once, outputs return to the same addresses
        Transaction tx;
        tx.txid = new_txid();
        tx.time = stamp(planned + 600);
        for (const auto& pt : points) {
            TxInput in;
            in.prev = pt;
            tx.inputs.push_back(std::move(in));
        }
        tx.outputs = minted;
        for (std::size_t i = 0; i < minted.size(); ++i) credit(entity, tx.txid, static_cast<std::uint32_t>(i), minted[i]);
        txs_.push_back(std::move(tx));
    }

    void payment(std::size_t payer, std::int64_t planned) {
        auto& e = entities_[payer];
        if (e.balance < kDust * 4 || p_.n_background < 2) return;
        std::size_t payee = payer;
        if (!services_.empty() && rng_.bernoulli(0.3)) payee = services_[rng_.below(services_.size())];
        while (payee == payer) payee = rng_.below(p_.n_background);
        const Satoshi amount =
            std::max(kDust, static_cast<Satoshi>(static_cast<double>(e.balance - kFee) * rng_.uniform(0.05, 0.5)));
        const std::string payee_address = pick_address(entities_[payee]);
        const std::string from = pay(payer, {{payee, payee_address, amount}}, planned);
        if (entities_[payee].service) {
            const double delay = rng_.exponential(5.0);
            const auto back = static_cast<Satoshi>(static_cast<double>(amount) * rng_.uniform(0.5, 1.0));
            push({planned + static_cast<std::int64_t>(delay * kDay), 0, Kind::service_repay, payee, payer, back, from});
        }
    }

    void deposit(std::size_t s, std::size_t investor, Satoshi value, std::int64_t planned) {
        auto& scheme = schemes_[s];
        if (entities_[investor].balance < value + kFee) return;
        const auto& target = pick_address(entities_[scheme.entity]);
        const std::string from = pay(investor, {{scheme.entity, target, value}}, planned);
        const std::size_t d = deposits_seen_[s]++;
        if (d >= scheme.repaid_deposits) return;
        const double delay = rng_.exponential(p_.payout_delay_days);
        Due due{last_time_ + static_cast<std::int64_t>(delay * kDay), from,
                static_cast<Satoshi>(std::llround(static_cast<double>(value) * p_.payout_multiplier))};
        auto pos = std::upper_bound(scheme.due.begin(), scheme.due.end(), due.due,
                                    [](std::int64_t t, const Due& x) { return t < x.due; });
        scheme.due.insert(pos, std::move(due));
    }

    void payout(std::size_t s, std::int64_t planned) {
        auto& scheme = schemes_[s];
        const auto& e = entities_[scheme.entity];
        std::vector<Payee> batch;
        Satoshi total = kFee;
        std::size_t taken = 0;
        for (; taken < scheme.due.size() && scheme.due[taken].due <= planned; ++taken) {
            const auto& d = scheme.due[taken];
            if (total + d.amount > e.balance) break;
            total += d.amount;
            batch.push_back({owner_of(d.address), d.address, d.amount});
        }
        if (batch.empty()) return;
        scheme.due.erase(scheme.due.begin(), scheme.due.begin() + static_cast<std::ptrdiff_t>(taken));
        pay(scheme.entity, batch, planned);
    }

    void service_repay(std::size_t service, std::size_t customer, Satoshi value, const std::string& address,
                       std::int64_t planned) {
        if (value < kDust || entities_[service].balance < value + kFee) return;
        pay(service, {{customer, address, value}}, planned);
    }

    std::size_t owner_of(const std::string& address) {
        if (owners_.empty()) {
            for (std::size_t e = 0; e < entities_.size(); ++e) {
                for (const auto& a : entities_[e].addresses) owners_.emplace(a, e);
            }
        }
        return owners_.at(address);
    }

    void execute(const Action& a) {
        switch (a.kind) {
            case Kind::bootstrap: bootstrap(a.a, a.time); break;
            case Kind::payment: payment(a.a, a.time); break;
            case Kind::deposit: deposit(a.a, a.b, a.value, a.time); break;
            case Kind::payout: payout(a.a, a.time); break;
            case Kind::service_repay: service_repay(a.a, a.b, a.value, a.address, a.time); break;
        }
    }

    const SynthParams& p_;
    Rng rng_;
    std::uint64_t salt_;
    std::uint64_t counter_ = 0;
    std::uint64_t seq_ = 0;
    std::int64_t last_time_ = 0;
    std::vector<Entity> entities_;
    std::vector<Scheme> schemes_;
    std::vector<std::size_t> services_;
    std::vector<std::size_t> deposits_seen_;
    std::unordered_set<std::string> used_addresses_;
    std::unordered_map<std::string, std::size_t> owners_;
    std::priority_queue<Action, std::vector<Action>, std::greater<>> queue_;
    std::vector<Transaction> txs_;
};

}  // namespace

SynthResult generate(const SynthParams& params) {
    params.validate();
    return Generator(params).run();
}

void write_labels(const std::vector<LabelRow>& labels, std::ostream& out) {
    out << "cluster_seed_address,label\n";
    for (const auto& l : labels) out << csv::escape(l.address) << ',' << data::to_string(l.label) << '\n';
}

std::vector<LabelRow> read_labels(std::istream& in) {
    std::vector<LabelRow> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = csv::split(line, line_no);
        if (line_no == 1) {
            if (fields != std::vector<std::string>{"cluster_seed_address", "label"}) {
                throw ParseError(line_no, 1, "expected header cluster_seed_address,label");
            }
            continue;
        }
        if (fields.size() != 2 || fields[0].empty()) throw ParseError(line_no, 1, "expected address,label");
        try {
            rows.push_back({fields[0], data::parse_label(fields[1])});
        } catch (const DataError& e) {
            throw ParseError(line_no, 2, e.what());
        }
    }
    if (line_no == 0) throw ParseError(1, 1, "missing header cluster_seed_address,label");
    return rows;
}

}  // namespace ponzi::synth
