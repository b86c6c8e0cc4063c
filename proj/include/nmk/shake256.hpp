#pragma once

#include "nmk/types.hpp"

#include <array>
#include <cstddef>

namespace nmk {

// SHAKE-256 extendable-output function (FIPS 202). Incremental sponge over
// Keccak-f[1600] with rate 136 bytes; domain suffix 0x1f. Arbitrary-length
// squeeze is supported; absorbing after the first squeeze is an error.
class Shake256 {
 public:
  Shake256() { state_.fill(0); }

  void absorb(const std::uint8_t* data, std::size_t len);
  void absorb(const Bytes& data) { absorb(data.data(), data.size()); }

  void squeeze(std::uint8_t* out, std::size_t len);
  Bytes squeeze(std::size_t len);

  // One-shot convenience.
  static Bytes digest(const Bytes& data, std::size_t out_len);

 private:
  static constexpr std::size_t kRate = 136;  // 1088-bit rate, 512-bit capacity

  void pad_and_switch();
  static void permute(std::array<std::uint64_t, 25>& a);

  std::array<std::uint64_t, 25> state_{};
  std::size_t pos_ = 0;
  bool squeezing_ = false;
};

}  // namespace nmk
