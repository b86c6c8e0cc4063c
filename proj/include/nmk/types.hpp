#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace nmk {

using Scalar = double;
using Index = Eigen::Index;

template <typename S>
using MatT = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using VecT = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using MatX = MatT<Scalar>;
using VecX = VecT<Scalar>;

using Bytes = std::vector<std::uint8_t>;
// One watermark bit per element, each 0 or 1.
using BitVec = std::vector<std::uint8_t>;

// Thrown when inputs violate a documented contract (bad sizes, bad enum values,
// unknown config keys). The CLI maps this to the usage exit code.
struct ValidationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Thrown on missing, truncated, or malformed files. CLI exit code 3.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown on malformed structured text (config files, reports). CLI exit code 3.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown when a computation leaves the representable/finite regime. CLI exit code 4.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::string hex_string(const Bytes& data) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(data.size() * 2);
  for (std::uint8_t b : data) {
    out.push_back(digits[b >> 4]);
    out.push_back(digits[b & 0xf]);
  }
  return out;
}

}  // namespace nmk
