#pragma once

#include <chrono>
#include <compare>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ponzi/error.hpp"

namespace ponzi::chain {

using Satoshi = std::int64_t;
inline constexpr Satoshi kSatoshiPerBtc = 100'000'000;

struct OutPoint {
    std::string txid;
    std::uint32_t index = 0;

    friend auto operator<=>(const OutPoint&, const OutPoint&) = default;
};

struct OutPointHash {
    std::size_t operator()(const OutPoint& p) const noexcept {
        return std::hash<std::string>{}(p.txid) * 31 + p.index;
    }
};

/// An input names the output it redeems. Address and value are filled in when
/// the log is indexed; `resolved` stays false for dangling references.
struct TxInput {
    OutPoint prev;
    std::string address;
    Satoshi value = 0;
    bool resolved = false;
};

struct TxOutput {
    std::string address;
    Satoshi value = 0;
};

struct Transaction {
    std::string txid;  // 64 lowercase hex digits
    std::int64_t time = 0;
    bool coinbase = false;
    std::vector<TxInput> inputs;
    std::vector<TxOutput> outputs;

    Satoshi output_total() const;
};

enum class Direction { incoming, outgoing };

/// One appearance of an address in a transaction: each output paying the
/// address is an incoming entry, each input redeeming one of its outputs an
/// outgoing entry.
struct AddressEntry {
    std::size_t tx = 0;  // position in TxLog::transactions()
    Direction direction = Direction::incoming;
    Satoshi value = 0;
    std::int64_t time = 0;
};

struct OutputState {
    std::string address;
    Satoshi value = 0;
    std::optional<std::size_t> spent_by;  // first spender in log order
};

/// Immutable, indexed transaction log. Transactions are ordered by
/// (time, txid); all indexes refer to positions in that order.
class TxLog {
public:
    TxLog() = default;

    /// Sorts and indexes. Throws DataError on a duplicate txid.
    explicit TxLog(std::vector<Transaction> transactions);

    const std::vector<Transaction>& transactions() const noexcept { return txs_; }
    std::size_t size() const noexcept { return txs_.size(); }
    bool empty() const noexcept { return txs_.empty(); }

    std::optional<std::size_t> find(std::string_view txid) const;
    const OutputState* output(const OutPoint& point) const;

    /// Entries for `address` in log order; empty span for unknown addresses.
    std::span<const AddressEntry> entries(const std::string& address) const;
    const std::unordered_map<std::string, std::vector<AddressEntry>>& address_index() const noexcept {
        return addr_index_;
    }

    /// Every address that occurs in an output, sorted.
    std::vector<std::string> addresses() const;

private:
    std::vector<Transaction> txs_;
    std::unordered_map<std::string, std::size_t> by_txid_;
    std::unordered_map<OutPoint, OutputState, OutPointHash> outputs_;
    std::unordered_map<std::string, std::vector<AddressEntry>> addr_index_;
};

/// Parses the line-delimited JSON transaction format. Blank lines are
/// skipped. Throws ParseError with the offending line (and column for JSON
/// syntax errors).
TxLog parse_tx_log(std::istream& in);
TxLog parse_tx_log_string(std::string_view text);

/// Canonical form: one compact JSON object per line, keys in fixed order,
/// transactions in log order.
void write_tx_log(const TxLog& log, std::ostream& out);
std::string to_canonical_string(const TxLog& log);

struct DanglingInput {
    std::string txid;
    std::size_t input = 0;
    OutPoint prev;
};

/// An input redeeming an output of a transaction that is not strictly earlier
/// in log order.
struct PrematureSpend {
    std::string txid;
    std::size_t input = 0;
    OutPoint prev;
};

struct DoubleSpend {
    OutPoint prev;
    std::vector<std::string> spenders;  // in log order
};

struct NegativeFee {
    std::string txid;
    Satoshi fee = 0;
};

struct ValidationReport {
    std::vector<DanglingInput> dangling;
    std::vector<PrematureSpend> premature;
    std::vector<DoubleSpend> double_spends;
    std::vector<NegativeFee> negative_fees;
    /// Fee of every non-coinbase transaction whose inputs all resolve.
    std::map<std::string, Satoshi> fees;

    bool ok() const noexcept {
        return dangling.empty() && premature.empty() && double_spends.empty() && negative_fees.empty();
    }
};

ValidationReport validate_tx_log(const TxLog& log);

/// Human-readable listing of every problem, one per line.
std::string describe(const ValidationReport& report);

using Date = std::chrono::sys_days;

Date utc_date(std::int64_t unix_seconds);
std::int64_t day_number(std::int64_t unix_seconds);
std::string format_date(Date d);

/// USD amount in integer cents.
struct UsdCents {
    std::int64_t cents = 0;

    std::string to_string() const;
    friend auto operator<=>(const UsdCents&, const UsdCents&) = default;
};

class MissingRateError : public DataError {
public:
    explicit MissingRateError(Date d) : DataError("no USD rate for " + format_date(d)) {}
};

/// USD-per-BTC daily averages. Rates are exact decimals with at most 8
/// fractional digits, stored scaled by 1e8.
class RateTable {
public:
    static constexpr std::int64_t kScale = 100'000'000;

    /// Throws DataError for non-positive rates and duplicate dates.
    void add(Date date, std::int64_t scaled_rate);
    std::optional<std::int64_t> scaled_rate(Date date) const;
    std::size_t size() const noexcept { return rates_.size(); }

private:
    std::map<Date, std::int64_t> rates_;
};

/// CSV with header `date,usd_per_btc`, ISO-8601 dates.
RateTable parse_rate_table(std::istream& in);

/// value / 1e8 x rate(date), rounded half-even to cents. Throws
/// MissingRateError when the table has no entry for `date`.
UsdCents to_usd(Satoshi value, Date date, const RateTable& rates);

}  // namespace ponzi::chain
