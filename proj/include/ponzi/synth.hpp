#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ponzi/chain.hpp"
#include "ponzi/dataset.hpp"

namespace ponzi::synth {

struct LogNormal {
    double mu = 0;
    double sigma = 1;
};

struct SynthParams {
    std::size_t n_ponzi = 30;
    std::size_t n_background = 6000;
    std::uint64_t seed = 42;
    /// Overlapping class distributions: longer, thinner schemes and
    /// background services that repay their customers.
    bool hard = false;

    std::int64_t start_time = 1483228800;  // 2017-01-01T00:00:00Z
    std::int64_t horizon_days = 365;

    LogNormal deposit_count{4.3, 0.5};   // deposits per scheme
    LogNormal deposit_btc{-3.0, 1.0};    // BTC per deposit
    double payout_multiplier = 1.2;      // payout / deposit
    double payout_delay_days = 3.0;      // mean of an exponential delay
    double implosion_fraction = 0.3;     // last depositors never repaid
    double scheme_days_min = 30;
    double scheme_days_max = 120;
    std::size_t max_scheme_addresses = 4;

    double background_payments = 6.0;  // mean outgoing payments per user over the horizon
    LogNormal background_funding_btc{0.0, 1.0};  // per bootstrap address
    std::size_t max_background_addresses = 4;
    double service_fraction = 0.03;  // hard mode only

    /// Throws DataError when a field is out of range.
    void validate() const;
};

/// Applies the hard-mode distribution changes to defaults-style parameters.
SynthParams hard_mode(SynthParams params);

struct LabelRow {
    std::string address;  // smallest address of the generated entity
    data::Label label = data::Label::ponzi;
};

struct SynthResult {
    chain::TxLog log;
    std::vector<LabelRow> labels;  // one row per scheme, in generation order
    std::vector<std::vector<std::string>> scheme_addresses;
    std::vector<std::vector<std::string>> background_addresses;
};

/// Every generated entity bootstraps its addresses with coinbase outputs and
/// one consolidating transaction, so each entity is exactly one cluster. The
/// output validates and depends only on the parameters.
SynthResult generate(const SynthParams& params);

/// CSV `cluster_seed_address,label`.
void write_labels(const std::vector<LabelRow>& labels, std::ostream& out);
std::vector<LabelRow> read_labels(std::istream& in);

}  // namespace ponzi::synth
