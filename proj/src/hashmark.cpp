#include "nmk/hashmark.hpp"

#include "nmk/shake256.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace nmk {

Bytes serialize_key(const SecretKey& key, const Bytes& aux) {
  if (key.rows() < 1 || key.cols() < 1)
    throw ValidationError("serialize_key: key must have at least one row and column");
  Bytes out;
  out.reserve(static_cast<std::size_t>(key.rows() * key.cols()) * 8 + aux.size());
  for (Index r = 0; r < key.rows(); ++r) {
    for (Index c = 0; c < key.cols(); ++c) {
      double v = key.values(r, c);
      if (!std::isfinite(v))
        throw ValidationError("serialize_key: non-finite entry at (" + std::to_string(r) +
                              ", " + std::to_string(c) + ")");
      auto u = std::bit_cast<std::uint64_t>(v);
      for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
    }
  }
  out.insert(out.end(), aux.begin(), aux.end());
  return out;
}

Watermark watermark_from_bytes(const Bytes& data, Index n) {
  if (n <= 0) throw ValidationError("watermark_from_bytes: n must be positive");
  Bytes squeezed = Shake256::digest(data, static_cast<std::size_t>((n + 7) / 8));
  Watermark wm;
  wm.bits.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i)
    wm.bits[static_cast<std::size_t>(i)] = (squeezed[static_cast<std::size_t>(i / 8)] >> (7 - i % 8)) & 1;
  return wm;
}

Watermark generate_watermark(const SecretKey& key, const Bytes& aux, Index n) {
  if (n != key.cols())
    throw ValidationError("generate_watermark: n must equal the key column count");
  return watermark_from_bytes(serialize_key(key, aux), n);
}

double hamming_fraction(const Watermark& a, const Watermark& b) {
  if (a.size() != b.size()) throw ValidationError("hamming_fraction: length mismatch");
  Index diff = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) diff += a.bits[i] != b.bits[i];
  return static_cast<double>(diff) / static_cast<double>(a.size());
}

double avalanche_score(const SecretKey& key, Index trials, std::uint64_t rng_seed) {
  if (trials < 1) throw ValidationError("avalanche_score: trials must be >= 1");
  Bytes base = serialize_key(key, {});
  Index n = key.cols();
  Watermark original = watermark_from_bytes(base, n);
  Rng rng(rng_seed);
  double total = 0.0;
  for (Index t = 0; t < trials; ++t) {
    std::uint64_t bit = rng.below(static_cast<std::uint64_t>(base.size()) * 8);
    Bytes flipped = base;
    flipped[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    total += hamming_fraction(original, watermark_from_bytes(flipped, n));
  }
  return total / static_cast<double>(trials);
}

bool hash_consistent(const SecretKey& key, const Bytes& aux, const Watermark& watermark) {
  if (watermark.size() != key.cols()) return false;
  return generate_watermark(key, aux, key.cols()) == watermark;
}

SecretKey sample_key(Index k, Index n, Rng& rng) {
  if (k < 1 || n < 1) throw ValidationError("sample_key: k and n must be positive");
  SecretKey key;
  key.values.resize(k, n);
  for (Index r = 0; r < k; ++r)
    for (Index c = 0; c < n; ++c) key.values(r, c) = rng.normal();
  return key;
}

void save_key(const std::filesystem::path& path, const SecretKey& key, const Bytes& aux) {
  Bytes data = serialize_key(key, aux);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open key file for writing: " + path.string());
  f.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!f) throw IoError("failed writing key file: " + path.string());
}

std::pair<SecretKey, Bytes> load_key(const std::filesystem::path& path, Index k, Index n) {
  if (k < 1 || n < 1) throw ValidationError("load_key: k and n must be positive");
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open key file: " + path.string());
  Bytes data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  std::size_t need = static_cast<std::size_t>(k) * static_cast<std::size_t>(n) * 8;
  if (data.size() < need)
    throw IoError("key file too short for a " + std::to_string(k) + "x" + std::to_string(n) +
                  " key: " + path.string());
  SecretKey key;
  key.values.resize(k, n);
  std::size_t off = 0;
  for (Index r = 0; r < k; ++r) {
    for (Index c = 0; c < n; ++c) {
      std::uint64_t u = 0;
      for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(data[off + static_cast<std::size_t>(i)]) << (8 * i);
      key.values(r, c) = std::bit_cast<double>(u);
      off += 8;
    }
  }
  return {std::move(key), Bytes(data.begin() + static_cast<std::ptrdiff_t>(off), data.end())};
}

void save_watermark(const std::filesystem::path& path, const Watermark& watermark) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open watermark file for writing: " + path.string());
  for (std::uint8_t b : watermark.bits) f.put(b ? '1' : '0');
  f.put('\n');
  if (!f) throw IoError("failed writing watermark file: " + path.string());
}

Watermark load_watermark(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open watermark file: " + path.string());
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
  if (text.empty()) throw IoError("empty watermark file: " + path.string());
  Watermark wm;
  wm.bits.reserve(text.size());
  for (char c : text) {
    if (c != '0' && c != '1')
      throw IoError("watermark file contains byte other than '0'/'1': " + path.string());
    wm.bits.push_back(static_cast<std::uint8_t>(c - '0'));
  }
  return wm;
}

}  // namespace nmk
