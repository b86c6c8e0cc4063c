#pragma once

#include "nmk/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace nmk {

// Minimal arbitrary-precision unsigned integer: just enough for exact binomial
// tail sums up to n = 4096. Little-endian 64-bit limbs, no trailing zero limbs.
class BigUint {
 public:
  BigUint() = default;
  explicit BigUint(std::uint64_t v) {
    if (v) w_.push_back(v);
  }

  static BigUint pow2(std::size_t bits);

  bool is_zero() const { return w_.empty(); }
  // Position of the highest set bit plus one; 0 for zero.
  std::size_t bit_length() const;

  BigUint& operator+=(const BigUint& other);
  // In-place multiply / divide by a machine word. divide returns the remainder.
  BigUint& mul_word(std::uint64_t m);
  std::uint64_t div_word(std::uint64_t d);

  // -1, 0, 1 for <, =, >.
  int compare(const BigUint& other) const;
  friend bool operator==(const BigUint& a, const BigUint& b) { return a.w_ == b.w_; }

  // log2 of the value; requires non-zero. Accurate to ~1 ulp of double.
  double log2() const;

  std::string to_decimal() const;
  std::string to_hex() const;

 private:
  void trim();
  std::vector<std::uint64_t> w_;
};

// Σ_{i=0}^{upto} C(n, i), exactly. upto is clamped to n; negative upto gives 0.
BigUint binomial_prefix_sum(Index n, Index upto);

// ⌈rho·n⌉ without floating-point ceiling error: rho is decomposed into an exact
// mantissa/exponent pair first. rho ≤ 0 gives 0, rho ≥ 1 gives n.
Index ceil_fraction_times(double rho, Index n);

// Same, for an exact decimal string such as "0.8828125" (at most 30 fractional
// digits). Throws ValidationError on malformed input or out-of-range values.
Index ceil_fraction_times(const std::string& rho_decimal, Index n);

}  // namespace nmk
