#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ponzi {

/// Raised for malformed or inconsistent input data (bad files, schema
/// mismatches, impossible requests). The CLI maps it to exit status 2.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A syntax problem at a known position of a text input. Line and column are
/// 1-based; column 0 means "whole line".
class ParseError : public DataError {
public:
    ParseError(std::size_t line, std::size_t column, const std::string& what)
        : DataError("line " + std::to_string(line) +
                    (column ? ", column " + std::to_string(column) : std::string{}) + ": " + what),
          line_(line),
          column_(column) {}

    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }

private:
    std::size_t line_;
    std::size_t column_;
};

}  // namespace ponzi
