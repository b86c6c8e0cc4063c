#include "nmk/shake256.hpp"

#include <bit>

namespace nmk {
namespace {

constexpr std::array<std::uint64_t, 24> kRoundConstants = {
    0x0000000000000001ULL, 0x0000000000008082ULL, 0x800000000000808aULL,
    0x8000000080008000ULL, 0x000000000000808bULL, 0x0000000080000001ULL,
    0x8000000080008081ULL, 0x8000000000008009ULL, 0x000000000000008aULL,
    0x0000000000000088ULL, 0x0000000080008009ULL, 0x000000008000000aULL,
    0x000000008000808bULL, 0x800000000000008bULL, 0x8000000000008089ULL,
    0x8000000000008003ULL, 0x8000000000008002ULL, 0x8000000000000080ULL,
    0x000000000000800aULL, 0x800000008000000aULL, 0x8000000080008081ULL,
    0x8000000000008080ULL, 0x0000000080000001ULL, 0x8000000080008008ULL,
};

// Rotation offsets for lane (x, y) at flat index x + 5y.
constexpr std::array<int, 25> kRho = {
    0,  1,  62, 28, 27,  //
    36, 44, 6,  55, 20,  //
    3,  10, 43, 25, 39,  //
    41, 45, 15, 21, 8,   //
    18, 2,  61, 56, 14,
};

inline std::uint8_t lane_byte(std::uint64_t lane, std::size_t i) {
  return static_cast<std::uint8_t>(lane >> (8 * i));
}

}  // namespace

void Shake256::permute(std::array<std::uint64_t, 25>& a) {
  for (int round = 0; round < 24; ++round) {
    // theta
    std::uint64_t c[5];
    for (int x = 0; x < 5; ++x)
      c[x] = a[x] ^ a[x + 5] ^ a[x + 10] ^ a[x + 15] ^ a[x + 20];
    for (int x = 0; x < 5; ++x) {
      std::uint64_t d = c[(x + 4) % 5] ^ std::rotl(c[(x + 1) % 5], 1);
      for (int y = 0; y < 25; y += 5) a[x + y] ^= d;
    }
    // rho + pi: lane (x, y) -> (y, 2x + 3y)
    std::uint64_t b[25];
    for (int x = 0; x < 5; ++x)
      for (int y = 0; y < 5; ++y)
        b[y + 5 * ((2 * x + 3 * y) % 5)] = std::rotl(a[x + 5 * y], kRho[x + 5 * y]);
    // chi
    for (int y = 0; y < 25; y += 5)
      for (int x = 0; x < 5; ++x)
        a[x + y] = b[x + y] ^ (~b[(x + 1) % 5 + y] & b[(x + 2) % 5 + y]);
    // iota
    a[0] ^= kRoundConstants[round];
  }
}

void Shake256::absorb(const std::uint8_t* data, std::size_t len) {
  if (squeezing_) throw ValidationError("Shake256: absorb after squeeze");
  for (std::size_t i = 0; i < len; ++i) {
    state_[pos_ / 8] ^= static_cast<std::uint64_t>(data[i]) << (8 * (pos_ % 8));
    if (++pos_ == kRate) {
      permute(state_);
      pos_ = 0;
    }
  }
}

void Shake256::pad_and_switch() {
  // Multi-rate padding: XOF suffix 0x1f, final bit 0x80 at the rate boundary.
  state_[pos_ / 8] ^= std::uint64_t{0x1f} << (8 * (pos_ % 8));
  state_[(kRate - 1) / 8] ^= std::uint64_t{0x80} << (8 * ((kRate - 1) % 8));
  permute(state_);
  pos_ = 0;
  squeezing_ = true;
}

void Shake256::squeeze(std::uint8_t* out, std::size_t len) {
  if (!squeezing_) pad_and_switch();
  for (std::size_t i = 0; i < len; ++i) {
    if (pos_ == kRate) {
      permute(state_);
      pos_ = 0;
    }
    out[i] = lane_byte(state_[pos_ / 8], pos_ % 8);
    ++pos_;
  }
}

Bytes Shake256::squeeze(std::size_t len) {
  Bytes out(len);
  squeeze(out.data(), len);
  return out;
}

Bytes Shake256::digest(const Bytes& data, std::size_t out_len) {
  Shake256 x;
  x.absorb(data);
  return x.squeeze(out_len);
}

}  // namespace nmk
