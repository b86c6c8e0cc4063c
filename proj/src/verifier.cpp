#include "nmk/verifier.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace nmk {

std::string DetectionReport::to_json() const {
  std::ostringstream os;
  os.precision(17);
  os << "{\"rho\":" << rho << ",\"rho_star\":" << rho_star << ",\"n\":" << n
     << ",\"hash_checked\":" << (hash_checked ? "true" : "false")
     << ",\"hash_consistent\":" << (hash_consistent ? "true" : "false")
     << ",\"verdict\":" << (verdict ? "true" : "false") << ",\"log2_bound\":" << log2_bound
     << ",\"scheme\":\"" << to_string(scheme) << "\"}";
  return os.str();
}

BitVec threshold_bits(const ExtractedWatermark& extracted) {
  BitVec bits(static_cast<std::size_t>(extracted.size()));
  for (Index i = 0; i < extracted.size(); ++i)
    bits[static_cast<std::size_t>(i)] = extracted.probabilities[i] > 0.5 ? 1 : 0;
  return bits;
}

double detection_rate(const BitVec& bits, const Watermark& target) {
  if (static_cast<Index>(bits.size()) != target.size())
    throw ValidationError("detection_rate: length mismatch");
  if (bits.empty()) throw ValidationError("detection_rate: empty watermark");
  Index matches = 0;
  for (std::size_t i = 0; i < bits.size(); ++i) matches += bits[i] == target.bits[i];
  return static_cast<double>(matches) / static_cast<double>(bits.size());
}

SecurityBoundary forgery_bound_at(Index n, Index min_matches) {
  if (n < 1) throw ValidationError("forgery_bound: n must be >= 1");
  if (min_matches < 0 || min_matches > n)
    throw ValidationError("forgery_bound: min_matches out of [0, n]");
  SecurityBoundary b;
  b.n = n;
  b.min_matches = min_matches;
  b.denominator_log2 = n;
  // P(X >= t) for X ~ Binomial(n, 1/2) equals sum_{i=0}^{n-t} C(n,i) / 2^n by
  // symmetry of the binomial coefficients.
  b.exact_numerator = binomial_prefix_sum(n, n - min_matches);
  b.log2_bound = b.exact_numerator.is_zero()
                     ? -std::numeric_limits<double>::infinity()
                     : b.exact_numerator.log2() - static_cast<double>(n);
  return b;
}

SecurityBoundary forgery_bound(Index n, double rho) {
  if (rho < 0.0 || rho > 1.0) throw ValidationError("forgery_bound: rho out of [0, 1]");
  return forgery_bound_at(n, ceil_fraction_times(rho, n));
}

bool bound_within(const SecurityBoundary& b, double log2_target) {
  double integral = 0.0;
  if (std::modf(log2_target, &integral) == 0.0 && b.n + static_cast<Index>(integral) >= 0) {
    // Exact: numerator <= 2^(n + target).
    BigUint limit = BigUint::pow2(static_cast<std::size_t>(b.n + static_cast<Index>(integral)));
    return b.exact_numerator.compare(limit) <= 0;
  }
  return b.log2_bound <= log2_target;
}

ThresholdResult security_threshold(Index n, double log2_target) {
  if (n < 1) throw ValidationError("security_threshold: n must be >= 1");
  if (log2_target >= 0) throw ValidationError("security_threshold: target must be negative");
  ThresholdResult result;
  for (Index t = 0; t <= n; ++t) {
    SecurityBoundary b = forgery_bound_at(n, t);
    if (bound_within(b, log2_target)) {
      result.reachable = true;
      result.min_matches = t;
      result.rho_star = static_cast<double>(t) / static_cast<double>(n);
      result.boundary = std::move(b);
      return result;
    }
  }
  result.reachable = false;
  result.boundary = forgery_bound_at(n, n);
  return result;
}

double default_log2_target(Index n) { return -static_cast<double>(n) / 2.0; }

DetectionReport verify(const ModelCheckpoint& ckpt, const WatermarkTuple& tuple,
                       const TrainConfig& config, std::optional<double> log2_target) {
  if (tuple.watermark.size() != config.watermark_len)
    throw ValidationError("verify: watermark length does not match config");
  if (tuple.key.rows() != config.key_rows)
    throw ValidationError("verify: key rows do not match config");

  EmbedReadout readout = read_watermark(ckpt.model, tuple, config);
  DetectionReport report;
  report.n = tuple.watermark.size();
  report.scheme = ckpt.scheme;
  report.rho = detection_rate(threshold_bits(readout.extracted), tuple.watermark);

  double target = log2_target.value_or(default_log2_target(report.n));
  ThresholdResult threshold = security_threshold(report.n, target);
  if (!threshold.reachable)
    throw ValidationError("verify: no detection rate reaches 2^" + std::to_string(target) +
                          " at n = " + std::to_string(report.n));
  report.rho_star = threshold.rho_star;
  report.log2_bound = forgery_bound(report.n, report.rho).log2_bound;

  if (ckpt.scheme == Scheme::vanilla) {
    // The baseline scheme defines no hash relation between key and watermark.
    report.hash_checked = false;
    report.hash_consistent = true;
  } else {
    report.hash_checked = true;
    report.hash_consistent = tuple.consistent();
  }
  report.verdict = report.rho >= report.rho_star && report.hash_consistent;
  return report;
}

}  // namespace nmk
