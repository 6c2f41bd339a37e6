#include "ponzi/chain.hpp"

#include <algorithm>
#include <istream>
#include <limits>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <json.hpp>

#include "ponzi/csv.hpp"

namespace ponzi::chain {

using nlohmann::json;

Satoshi Transaction::output_total() const {
    Satoshi total = 0;
    for (const auto& o : outputs) total += o.value;
    return total;
}

TxLog::TxLog(std::vector<Transaction> transactions) : txs_(std::move(transactions)) {
    std::sort(txs_.begin(), txs_.end(), [](const Transaction& a, const Transaction& b) {
        return a.time != b.time ? a.time < b.time : a.txid < b.txid;
    });

    by_txid_.reserve(txs_.size());
    for (std::size_t i = 0; i < txs_.size(); ++i) {
        if (!by_txid_.emplace(txs_[i].txid, i).second) {
            throw DataError("duplicate txid " + txs_[i].txid);
        }
    }

    for (std::size_t i = 0; i < txs_.size(); ++i) {
        const auto& tx = txs_[i];
        for (std::uint32_t k = 0; k < tx.outputs.size(); ++k) {
            outputs_.emplace(OutPoint{tx.txid, k}, OutputState{tx.outputs[k].address, tx.outputs[k].value, {}});
        }
    }

    for (std::size_t i = 0; i < txs_.size(); ++i) {
        auto& tx = txs_[i];
        for (auto& in : tx.inputs) {
            auto it = outputs_.find(in.prev);
            if (it == outputs_.end()) continue;
            in.address = it->second.address;
            in.value = it->second.value;
            in.resolved = true;
            if (!it->second.spent_by) it->second.spent_by = i;
            addr_index_[in.address].push_back({i, Direction::outgoing, in.value, tx.time});
        }
        for (const auto& out : tx.outputs) {
            addr_index_[out.address].push_back({i, Direction::incoming, out.value, tx.time});
        }
    }
}

std::optional<std::size_t> TxLog::find(std::string_view txid) const {
    auto it = by_txid_.find(std::string(txid));
    if (it == by_txid_.end()) return std::nullopt;
    return it->second;
}

const OutputState* TxLog::output(const OutPoint& point) const {
    auto it = outputs_.find(point);
    return it == outputs_.end() ? nullptr : &it->second;
}

std::span<const AddressEntry> TxLog::entries(const std::string& address) const {
    auto it = addr_index_.find(address);
    if (it == addr_index_.end()) return {};
    return it->second;
}

std::vector<std::string> TxLog::addresses() const {
    std::vector<std::string> out;
    out.reserve(addr_index_.size());
    for (const auto& [addr, _] : addr_index_) out.push_back(addr);
    std::sort(out.begin(), out.end());
    return out;
}

namespace {

bool is_hex64(const std::string& s) {
    return s.size() == 64 && std::all_of(s.begin(), s.end(), [](char c) {
               return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f') || (c >= 'A' && c <= 'F');
           });
}

std::string lower(std::string s) {
    for (auto& c : s) {
        if (c >= 'A' && c <= 'F') c = static_cast<char>(c - 'A' + 'a');
    }
    return s;
}

const json& field(const json& obj, const char* key, std::size_t line) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ParseError(line, 0, fmt::format("missing field \"{}\"", key));
    return *it;
}

std::string parse_txid(const json& v, std::size_t line, const char* what) {
    if (!v.is_string() || !is_hex64(v.get<std::string>())) {
        throw ParseError(line, 0, fmt::format("{} must be a 64-digit hex string", what));
    }
    return lower(v.get<std::string>());
}

Satoshi parse_value(const json& v, std::size_t line) {
    if (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0) {
        throw ParseError(line, 0, "negative value");
    }
    if (v.is_number_float() && v.get<double>() < 0) throw ParseError(line, 0, "negative value");
    if (!v.is_number_unsigned()) throw ParseError(line, 0, "value must be an integer number of satoshi");
    const auto raw = v.get<std::uint64_t>();
    if (raw > static_cast<std::uint64_t>(std::numeric_limits<Satoshi>::max())) {
        throw ParseError(line, 0, "value exceeds 64-bit satoshi range");
    }
    return static_cast<Satoshi>(raw);
}

Transaction parse_record(const json& j, std::size_t line) {
    if (!j.is_object()) throw ParseError(line, 1, "record must be a JSON object");
    Transaction tx;
    tx.txid = parse_txid(field(j, "txid", line), line, "txid");

    const json& t = field(j, "time", line);
    if (!t.is_number_integer()) throw ParseError(line, 0, "timestamp not parseable: expected integer unix seconds");
    if (t.is_number_unsigned() && t.get<std::uint64_t>() > static_cast<std::uint64_t>(INT64_MAX)) {
        throw ParseError(line, 0, "timestamp not parseable: out of range");
    }
    tx.time = t.get<std::int64_t>();

    const json& cb = field(j, "coinbase", line);
    if (!cb.is_boolean()) throw ParseError(line, 0, "coinbase must be a boolean");
    tx.coinbase = cb.get<bool>();

    const json& ins = field(j, "in", line);
    if (!ins.is_array()) throw ParseError(line, 0, "\"in\" must be an array");
    for (const auto& in : ins) {
        if (!in.is_object()) throw ParseError(line, 0, "input must be an object");
        TxInput input;
        input.prev.txid = parse_txid(field(in, "tx", line), line, "input tx");
        const json& idx = field(in, "idx", line);
        if (!idx.is_number_unsigned() || idx.get<std::uint64_t>() > UINT32_MAX) {
            throw ParseError(line, 0, "input idx must be an unsigned 32-bit integer");
        }
        input.prev.index = static_cast<std::uint32_t>(idx.get<std::uint64_t>());
        tx.inputs.push_back(std::move(input));
    }

    const json& outs = field(j, "out", line);
    if (!outs.is_array()) throw ParseError(line, 0, "\"out\" must be an array");
    Satoshi total = 0;
    for (const auto& out : outs) {
        if (!out.is_object()) throw ParseError(line, 0, "output must be an object");
        const json& addr = field(out, "addr", line);
        if (!addr.is_string() || addr.get<std::string>().empty()) {
            throw ParseError(line, 0, "output addr must be a non-empty string");
        }
        TxOutput o{addr.get<std::string>(), parse_value(field(out, "val", line), line)};
        if (total > std::numeric_limits<Satoshi>::max() - o.value) {
            throw ParseError(line, 0, "sum of output values overflows 64-bit satoshi");
        }
        total += o.value;
        tx.outputs.push_back(std::move(o));
    }

    if (tx.coinbase && !tx.inputs.empty()) throw ParseError(line, 0, "coinbase transaction with inputs");
    if (!tx.coinbase && tx.inputs.empty()) throw ParseError(line, 0, "non-coinbase transaction without inputs");
    return tx;
}

// 1-based column of a byte offset reported by the JSON parser.
std::size_t column_of(const json::parse_error& e, std::size_t line_length) {
    return std::max<std::size_t>(1, std::min<std::size_t>(e.byte, line_length + 1));
}

}  // namespace

TxLog parse_tx_log(std::istream& in) {
    std::vector<Transaction> txs;
    std::unordered_map<std::string, std::size_t> first_line;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(line_no, column_of(e, line.size()), "syntax error");
        }
        Transaction tx = parse_record(j, line_no);
        auto [it, inserted] = first_line.emplace(tx.txid, line_no);
        if (!inserted) {
            throw ParseError(line_no, 0, fmt::format("duplicate txid {} (first seen on line {})", tx.txid, it->second));
        }
        txs.push_back(std::move(tx));
    }
    return TxLog(std::move(txs));
}

TxLog parse_tx_log_string(std::string_view text) {
    std::istringstream in{std::string(text)};
    return parse_tx_log(in);
}

void write_tx_log(const TxLog& log, std::ostream& out) {
    for (const auto& tx : log.transactions()) {
        nlohmann::ordered_json j;
        j["txid"] = tx.txid;
        j["time"] = tx.time;
        j["coinbase"] = tx.coinbase;
        j["in"] = nlohmann::ordered_json::array();
        for (const auto& in : tx.inputs) {
            nlohmann::ordered_json ref;
            ref["tx"] = in.prev.txid;
            ref["idx"] = in.prev.index;
            j["in"].push_back(std::move(ref));
        }
        j["out"] = nlohmann::ordered_json::array();
        for (const auto& o : tx.outputs) {
            nlohmann::ordered_json item;
            item["addr"] = o.address;
            item["val"] = o.value;
            j["out"].push_back(std::move(item));
        }
        out << j.dump() << '\n';
    }
}

std::string to_canonical_string(const TxLog& log) {
    std::ostringstream out;
    write_tx_log(log, out);
    return out.str();
}

ValidationReport validate_tx_log(const TxLog& log) {
    ValidationReport report;
    const auto& txs = log.transactions();
    std::map<OutPoint, std::vector<std::size_t>> spenders;

    for (std::size_t i = 0; i < txs.size(); ++i) {
        const auto& tx = txs[i];
        bool all_resolved = true;
        Satoshi input_total = 0;
        for (std::size_t k = 0; k < tx.inputs.size(); ++k) {
            const auto& in = tx.inputs[k];
            if (!in.resolved) {
                report.dangling.push_back({tx.txid, k, in.prev});
                all_resolved = false;
                continue;
            }
            const auto parent = log.find(in.prev.txid);
            if (parent && *parent >= i) report.premature.push_back({tx.txid, k, in.prev});
            spenders[in.prev].push_back(i);
            input_total += in.value;
        }
        if (tx.coinbase || !all_resolved) continue;
        const Satoshi fee = input_total - tx.output_total();
        report.fees.emplace(tx.txid, fee);
        if (fee < 0) report.negative_fees.push_back({tx.txid, fee});
    }

    for (auto& [point, who] : spenders) {
        if (who.size() < 2) continue;
        DoubleSpend ds{point, {}};
        for (std::size_t i : who) ds.spenders.push_back(txs[i].txid);
        report.double_spends.push_back(std::move(ds));
    }
    return report;
}

std::string describe(const ValidationReport& report) {
    std::string out;
    for (const auto& d : report.dangling) {
        out += fmt::format("dangling input: {} input {} references unknown output {}:{}\n", d.txid, d.input,
                           d.prev.txid, d.prev.index);
    }
    for (const auto& p : report.premature) {
        out += fmt::format("premature spend: {} input {} redeems {}:{} which is not earlier in the log\n", p.txid,
                           p.input, p.prev.txid, p.prev.index);
    }
    for (const auto& d : report.double_spends) {
        out += fmt::format("double spend of {}:{} by {}\n", d.prev.txid, d.prev.index, fmt::join(d.spenders, ", "));
    }
    for (const auto& n : report.negative_fees) {
        out += fmt::format("negative fee: {} fee {} satoshi\n", n.txid, n.fee);
    }
    return out;
}

std::int64_t day_number(std::int64_t unix_seconds) {
    // floor division so pre-1970 timestamps land on the right day
    std::int64_t d = unix_seconds / 86400;
    if (unix_seconds % 86400 < 0) --d;
    return d;
}

Date utc_date(std::int64_t unix_seconds) { return Date{std::chrono::days{day_number(unix_seconds)}}; }

std::string format_date(Date d) {
    const std::chrono::year_month_day ymd{d};
    return fmt::format("{:04d}-{:02d}-{:02d}", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                       static_cast<unsigned>(ymd.day()));
}

std::string UsdCents::to_string() const {
    const std::int64_t mag = cents < 0 ? -cents : cents;
    return fmt::format("{}{}.{:02d}", cents < 0 ? "-" : "", mag / 100, mag % 100);
}

void RateTable::add(Date date, std::int64_t scaled_rate) {
    if (scaled_rate <= 0) throw DataError("rate for " + format_date(date) + " must be positive");
    if (!rates_.emplace(date, scaled_rate).second) throw DataError("duplicate rate date " + format_date(date));
}

std::optional<std::int64_t> RateTable::scaled_rate(Date date) const {
    auto it = rates_.find(date);
    if (it == rates_.end()) return std::nullopt;
    return it->second;
}

namespace {

std::optional<Date> parse_iso_date(std::string_view s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
    std::int64_t y = 0, m = 0, d = 0;
    if (!csv::parse_int(s.substr(0, 4), y) || !csv::parse_int(s.substr(5, 2), m) ||
        !csv::parse_int(s.substr(8, 2), d)) {
        return std::nullopt;
    }
    const std::chrono::year_month_day ymd{std::chrono::year{static_cast<int>(y)},
                                          std::chrono::month{static_cast<unsigned>(m)},
                                          std::chrono::day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) return std::nullopt;
    return Date{ymd};
}

// Exact decimal with up to 8 fractional digits, scaled by 1e8.
std::optional<std::int64_t> parse_scaled_decimal(std::string_view s) {
    const auto dot = s.find('.');
    const std::string_view whole = s.substr(0, dot);
    const std::string_view frac = dot == std::string_view::npos ? std::string_view{} : s.substr(dot + 1);
    if (whole.empty() || frac.size() > 8) return std::nullopt;
    std::uint64_t w = 0, f = 0;
    if (!csv::parse_uint(whole, w)) return std::nullopt;
    if (!frac.empty() && !csv::parse_uint(frac, f)) return std::nullopt;
    for (std::size_t i = frac.size(); i < 8; ++i) f *= 10;
    if (w > static_cast<std::uint64_t>(INT64_MAX / RateTable::kScale) - 1) return std::nullopt;
    return static_cast<std::int64_t>(w) * RateTable::kScale + static_cast<std::int64_t>(f);
}

}  // namespace

RateTable parse_rate_table(std::istream& in) {
    RateTable table;
    std::string line;
    std::size_t line_no = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++line_no;
        const auto cells = csv::split(line, line_no);
        if (cells.size() == 1 && cells[0].empty()) continue;
        if (!header) {
            if (cells != std::vector<std::string>{"date", "usd_per_btc"}) {
                throw ParseError(line_no, 0, "expected header date,usd_per_btc");
            }
            header = true;
            continue;
        }
        if (cells.size() != 2) throw ParseError(line_no, 0, "expected 2 cells");
        const auto date = parse_iso_date(cells[0]);
        if (!date) throw ParseError(line_no, 1, "invalid ISO-8601 date '" + cells[0] + "'");
        const auto rate = parse_scaled_decimal(cells[1]);
        if (!rate) throw ParseError(line_no, 0, "invalid rate '" + cells[1] + "'");
        try {
            table.add(*date, *rate);
        } catch (const DataError& e) {
            throw ParseError(line_no, 0, e.what());
        }
    }
    if (!header) throw ParseError(line_no, 0, "missing header date,usd_per_btc");
    return table;
}

UsdCents to_usd(Satoshi value, Date date, const RateTable& rates) {
    const auto rate = rates.scaled_rate(date);
    if (!rate) throw MissingRateError(date);
    // cents = value * rate / (1e8 sat/BTC * 1e8 rate scale / 100 cents)
    constexpr __int128 kDenominator = static_cast<__int128>(100'000'000) * 1'000'000;
    const __int128 product = static_cast<__int128>(value) * *rate;
    const bool negative = product < 0;
    const __int128 mag = negative ? -product : product;
    __int128 q = mag / kDenominator;
    const __int128 r = mag % kDenominator;
    if (2 * r > kDenominator || (2 * r == kDenominator && (q & 1))) ++q;
    return UsdCents{static_cast<std::int64_t>(negative ? -q : q)};
}

}  // namespace ponzi::chain
