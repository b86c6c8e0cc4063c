#pragma once

#include "nmk/rng.hpp"
#include "nmk/types.hpp"

#include <filesystem>

namespace nmk {

// k×n secret key matrix. Rows (k) set the pooled-vector length, columns (n)
// the watermark length.
struct SecretKey {
  MatX values;

  Index rows() const { return values.rows(); }
  Index cols() const { return values.cols(); }
};

// n-bit ownership watermark derived from the key by SHAKE-256.
struct Watermark {
  BitVec bits;

  Index size() const { return static_cast<Index>(bits.size()); }
  bool operator==(const Watermark& other) const { return bits == other.bits; }
};

// Row-major little-endian binary64 encoding of the key entries, with the
// auxiliary content appended verbatim. This is the exact byte string the
// watermark hash absorbs, and the exact on-disk key file format.
Bytes serialize_key(const SecretKey& key, const Bytes& aux);

// First n bits of SHAKE-256(serialize_key(key, aux)), MSB-first per octet.
Watermark generate_watermark(const SecretKey& key, const Bytes& aux, Index n);

// Same bit expansion applied to an arbitrary byte string (used for avalanche
// measurement and for checking against published XOF vectors).
Watermark watermark_from_bytes(const Bytes& data, Index n);

// Fraction of differing bits; inputs must have equal length.
double hamming_fraction(const Watermark& a, const Watermark& b);

// Mean normalized Hamming distance between the key's watermark and the
// watermark of the key with one uniformly chosen serialized bit flipped,
// over `trials` independent flips. Expected ≈ 0.5 for a good hash.
double avalanche_score(const SecretKey& key, Index trials, std::uint64_t rng_seed);

// True iff watermark == generate_watermark(key, aux).
bool hash_consistent(const SecretKey& key, const Bytes& aux, const Watermark& watermark);

// I.i.d. standard-normal key entries.
SecretKey sample_key(Index k, Index n, Rng& rng);

// Key file holds serialize_key(key, aux) verbatim; the reader needs the shape
// and treats any remaining bytes as aux content.
void save_key(const std::filesystem::path& path, const SecretKey& key, const Bytes& aux);
std::pair<SecretKey, Bytes> load_key(const std::filesystem::path& path, Index k, Index n);

// Watermark file: n ASCII '0'/'1' characters plus a trailing newline.
void save_watermark(const std::filesystem::path& path, const Watermark& watermark);
Watermark load_watermark(const std::filesystem::path& path);

}  // namespace nmk
