#include "nmk/biguint.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>

namespace nmk {

void BigUint::trim() {
  while (!w_.empty() && w_.back() == 0) w_.pop_back();
}

BigUint BigUint::pow2(std::size_t bits) {
  BigUint r;
  r.w_.assign(bits / 64 + 1, 0);
  r.w_.back() = std::uint64_t{1} << (bits % 64);
  return r;
}

std::size_t BigUint::bit_length() const {
  if (w_.empty()) return 0;
  return 64 * (w_.size() - 1) + (64 - std::countl_zero(w_.back()));
}

BigUint& BigUint::operator+=(const BigUint& other) {
  if (other.w_.size() > w_.size()) w_.resize(other.w_.size(), 0);
  unsigned __int128 carry = 0;
  for (std::size_t i = 0; i < w_.size(); ++i) {
    carry += w_[i];
    if (i < other.w_.size()) carry += other.w_[i];
    w_[i] = static_cast<std::uint64_t>(carry);
    carry >>= 64;
  }
  if (carry) w_.push_back(static_cast<std::uint64_t>(carry));
  return *this;
}

BigUint& BigUint::mul_word(std::uint64_t m) {
  unsigned __int128 carry = 0;
  for (auto& limb : w_) {
    carry += static_cast<unsigned __int128>(limb) * m;
    limb = static_cast<std::uint64_t>(carry);
    carry >>= 64;
  }
  while (carry) {
    w_.push_back(static_cast<std::uint64_t>(carry));
    carry >>= 64;
  }
  trim();  // m == 0
  return *this;
}

std::uint64_t BigUint::div_word(std::uint64_t d) {
  if (d == 0) throw ValidationError("BigUint: division by zero");
  unsigned __int128 rem = 0;
  for (std::size_t i = w_.size(); i-- > 0;) {
    unsigned __int128 cur = (rem << 64) | w_[i];
    w_[i] = static_cast<std::uint64_t>(cur / d);
    rem = cur % d;
  }
  trim();
  return static_cast<std::uint64_t>(rem);
}

int BigUint::compare(const BigUint& other) const {
  if (w_.size() != other.w_.size()) return w_.size() < other.w_.size() ? -1 : 1;
  for (std::size_t i = w_.size(); i-- > 0;) {
    if (w_[i] != other.w_[i]) return w_[i] < other.w_[i] ? -1 : 1;
  }
  return 0;
}

double BigUint::log2() const {
  if (w_.empty()) throw NumericError("BigUint: log2 of zero");
  // Top 128 bits as a long double, plus the limb offset.
  std::size_t k = w_.size();
  long double top = static_cast<long double>(w_[k - 1]);
  long double offset = 64.0L * (k - 1);
  if (k >= 2) {
    top = top * 18446744073709551616.0L + static_cast<long double>(w_[k - 2]);
    offset -= 64.0L;
  }
  return static_cast<double>(std::log2(top) + offset);
}

std::string BigUint::to_decimal() const {
  if (w_.empty()) return "0";
  BigUint tmp = *this;
  constexpr std::uint64_t chunk = 10000000000000000000ULL;  // 10^19
  std::vector<std::uint64_t> parts;
  while (!tmp.is_zero()) parts.push_back(tmp.div_word(chunk));
  std::string out = std::to_string(parts.back());
  for (std::size_t i = parts.size() - 1; i-- > 0;) {
    std::string p = std::to_string(parts[i]);
    out += std::string(19 - p.size(), '0') + p;
  }
  return out;
}

std::string BigUint::to_hex() const {
  if (w_.empty()) return "0";
  static const char* digits = "0123456789abcdef";
  std::string out;
  for (std::size_t i = w_.size(); i-- > 0;) {
    for (int shift = 60; shift >= 0; shift -= 4)
      out.push_back(digits[(w_[i] >> shift) & 0xf]);
  }
  out.erase(0, out.find_first_not_of('0'));
  return out;
}

BigUint binomial_prefix_sum(Index n, Index upto) {
  if (n < 0) throw ValidationError("binomial_prefix_sum: n must be >= 0");
  if (upto < 0) return BigUint{};
  upto = std::min(upto, n);
  BigUint sum;
  BigUint coeff(1);  // C(n, 0)
  for (Index i = 0;; ++i) {
    sum += coeff;
    if (i == upto) break;
    // C(n, i+1) = C(n, i) * (n - i) / (i + 1); the division is exact.
    coeff.mul_word(static_cast<std::uint64_t>(n - i));
    std::uint64_t rem = coeff.div_word(static_cast<std::uint64_t>(i + 1));
    if (rem != 0) throw NumericError("binomial_prefix_sum: inexact division");
  }
  return sum;
}

Index ceil_fraction_times(double rho, Index n) {
  if (n < 0) throw ValidationError("ceil_fraction_times: n must be >= 0");
  if (!(rho == rho)) throw ValidationError("ceil_fraction_times: rho is NaN");
  if (rho <= 0.0) return 0;
  if (rho >= 1.0) return n;
  // rho = f * 2^e with f in [0.5, 1); the 53-bit mantissa is exact.
  int e = 0;
  double f = std::frexp(rho, &e);
  auto mant = static_cast<unsigned __int128>(std::ldexp(f, 53));
  int shift = 53 - e;  // rho = mant / 2^shift, shift >= 53
  unsigned __int128 prod = mant * static_cast<unsigned __int128>(n);
  if (shift >= 127) return 1;  // prod < 2^127 <= 2^shift, so 0 < rho*n < 1
  unsigned __int128 den = static_cast<unsigned __int128>(1) << shift;
  return static_cast<Index>((prod + den - 1) >> shift);
}

Index ceil_fraction_times(const std::string& rho_decimal, Index n) {
  if (n < 0) throw ValidationError("ceil_fraction_times: n must be >= 0");
  std::size_t i = 0;
  auto fail = [&] { throw ValidationError("malformed decimal fraction: " + rho_decimal); };
  if (rho_decimal.empty()) fail();
  unsigned __int128 num = 0;
  unsigned __int128 den = 1;
  bool seen_digit = false, seen_dot = false;
  int frac_digits = 0;
  for (; i < rho_decimal.size(); ++i) {
    char c = rho_decimal[i];
    if (c == '.') {
      if (seen_dot) fail();
      seen_dot = true;
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      seen_digit = true;
      if (seen_dot && ++frac_digits > 30)
        throw ValidationError("decimal fraction too long (max 30 fractional digits)");
      num = num * 10 + static_cast<unsigned>(c - '0');
      if (seen_dot) den *= 10;
      if (!seen_dot && num > 1000) fail();  // integer part can only be 0 or 1
    } else {
      fail();
    }
  }
  if (!seen_digit) fail();
  if (num > den) throw ValidationError("fraction exceeds 1: " + rho_decimal);
  if (num == 0) return 0;
  unsigned __int128 prod = num * static_cast<unsigned __int128>(n);
  return static_cast<Index>((prod + den - 1) / den);
}

}  // namespace nmk
