#pragma once

#include <stdexcept>
#include <string>

namespace qbvine {

// Raised on malformed or degenerate input data (bad CSV cells, constant
// columns, dimension mismatches). Maps to CLI exit code 3.
class DataError : public std::runtime_error {
public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Raised when an iterative numeric routine fails to converge or a
// transformation leaves its valid domain. Maps to CLI exit code 4.
class NumericError : public std::runtime_error {
public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace qbvine
