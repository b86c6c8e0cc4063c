#pragma once

#include "nmk/hashmark.hpp"
#include "nmk/types.hpp"

#include <string>
#include <utility>
#include <vector>

namespace nmk {

// A filtered view of a flattened layer: values plus their positions in the
// original layer. source_indices are strictly increasing.
struct ParamSlice {
  VecX values;
  std::vector<Index> source_indices;

  Index size() const { return values.size(); }
  static ParamSlice from_vector(const VecX& v);
};

// Record of which source indices survived each filter round. Round 0 is the
// unfiltered input; rounds[r-1] holds the survivors after round r.
struct FilterTrace {
  Index source_len = 0;
  std::vector<Index> initial;
  std::vector<std::vector<Index>> rounds;

  Index round_count() const { return static_cast<Index>(rounds.size()); }
  const std::vector<Index>& at_round(Index r) const;
  std::string to_json() const;  // array-of-arrays, round 0 first
};

// Pooling geometry: window * output_len + discarded_tail = input length.
struct PoolSpec {
  Index window = 0;
  Index output_len = 0;
  Index discarded_tail = 0;
};

struct OverlapStat {
  double ratio = 0.0;
  bool both_empty = false;
};

// Watermark repeated floor(target_len / n) times; the caller discards source
// elements beyond the tiled length.
BitVec tile_watermark(const Watermark& b, Index target_len);

// Keep elements at tiled-bit-1 positions; preserves source indices.
ParamSlice filter_once(const ParamSlice& ps, const Watermark& b);

// R sequential filter rounds with a full index trace. Rejects (naming the
// round) if fewer than n elements would enter any round.
std::pair<ParamSlice, FilterTrace> filter_rounds(const ParamSlice& ps, const Watermark& b,
                                                 Index rounds);

// |A∩B| / max(|A|,|B|) over the two traces' round-r index sets.
OverlapStat overlap_ratio(const FilterTrace& a, const FilterTrace& b, Index round);

// Windowed mean to length k: window = floor(len/k), trailing remainder
// discarded and recorded in the PoolSpec.
std::pair<VecX, PoolSpec> avg_pool(const ParamSlice& ps, Index k);

// Pooling with the averaging stage switchable: average=false takes the first k
// surviving values unchanged (window 1), for the pooling ablation.
std::pair<VecX, PoolSpec> pool(const ParamSlice& ps, Index k, bool average);

// Exact Jacobian-transpose of pooling∘filtering: spreads grad_pooled[j]/window
// over window j's surviving source indices; everything else gets zero. Output
// length is trace.source_len.
VecX route_gradient(const VecX& grad_pooled, const PoolSpec& spec, const FilterTrace& trace);

}  // namespace nmk
