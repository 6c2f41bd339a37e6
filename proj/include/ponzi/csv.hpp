#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace ponzi::csv {

/// Splits one CSV record (RFC 4180 quoting, no embedded newlines).
/// Throws ParseError on an unterminated quote.
std::vector<std::string> split(std::string_view line, std::size_t line_no = 0);

/// Quotes a field when it contains a comma, quote or leading/trailing space.
std::string escape(std::string_view field);

std::string join(const std::vector<std::string>& fields);

/// Strict numeric field parsers; the whole field must be consumed.
bool parse_int(std::string_view s, std::int64_t& out);
bool parse_uint(std::string_view s, std::uint64_t& out);
bool parse_double(std::string_view s, double& out);

/// 17 significant digits: every double reads back bit-exactly.
std::string format_real(double v);

}  // namespace ponzi::csv
