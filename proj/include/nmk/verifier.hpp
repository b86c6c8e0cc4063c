#pragma once

#include "nmk/biguint.hpp"
#include "nmk/checkpoint.hpp"
#include "nmk/embedder.hpp"

#include <optional>
#include <string>

namespace nmk {

// Outcome of the two-condition ownership check: the detection rate must reach
// the security boundary AND the presented watermark must hash-match the key.
struct DetectionReport {
  double rho = 0.0;
  double rho_star = 0.0;
  double log2_bound = 0.0;  // forgery bound at the measured rho
  Index n = 0;
  bool hash_checked = true;  // false for schemes that define no hash condition
  bool hash_consistent = false;
  bool verdict = false;
  Scheme scheme = Scheme::clean;

  std::string to_json() const;
};

// Exact forgery probability at a detection-rate threshold: the chance that a
// random n-bit pattern matches at least min_matches positions, as the exact
// fraction exact_numerator / 2^denominator_log2.
struct SecurityBoundary {
  Index n = 0;
  Index min_matches = 0;
  BigUint exact_numerator;
  Index denominator_log2 = 0;
  double log2_bound = 0.0;
};

struct ThresholdResult {
  bool reachable = false;
  Index min_matches = 0;
  double rho_star = 0.0;
  SecurityBoundary boundary;
};

// 1 where probability > 0.5, else 0 (exactly 0.5 maps to 0).
BitVec threshold_bits(const ExtractedWatermark& extracted);

// Fraction of matching positions.
double detection_rate(const BitVec& bits, const Watermark& target);

// Exact big-integer evaluation of (1/2^n) * sum_{i=0}^{n-ceil(rho*n)} C(n,i).
SecurityBoundary forgery_bound(Index n, double rho);
SecurityBoundary forgery_bound_at(Index n, Index min_matches);

// True iff the bound is at most 2^log2_target. Exact (bit-shift comparison)
// for integral targets, double log2 comparison otherwise.
bool bound_within(const SecurityBoundary& b, double log2_target);

// Smallest t/n whose forgery bound is <= 2^log2_target, by integer scan.
// reachable=false when even t=n misses the target.
ThresholdResult security_threshold(Index n, double log2_target);

// Desk policy for the verification threshold: scan target is -n/2 unless the
// config overrides it.
double default_log2_target(Index n);

// Full read-out of a checkpoint against a tuple: filter -> pool -> extract ->
// threshold -> detection rate, plus the hash-consistency condition for
// hash-bound schemes. Hash inconsistency is a verdict outcome, not an error.
DetectionReport verify(const ModelCheckpoint& ckpt, const WatermarkTuple& tuple,
                       const TrainConfig& config,
                       std::optional<double> log2_target = std::nullopt);

}  // namespace nmk
