#include "nmk/filterpool.hpp"

#include <algorithm>
#include <numeric>

namespace nmk {

ParamSlice ParamSlice::from_vector(const VecX& v) {
  ParamSlice ps;
  ps.values = v;
  ps.source_indices.resize(static_cast<std::size_t>(v.size()));
  std::iota(ps.source_indices.begin(), ps.source_indices.end(), Index{0});
  return ps;
}

const std::vector<Index>& FilterTrace::at_round(Index r) const {
  if (r == 0) return initial;
  if (r < 0 || r > round_count())
    throw ValidationError("FilterTrace: round " + std::to_string(r) + " out of range");
  return rounds[static_cast<std::size_t>(r - 1)];
}

std::string FilterTrace::to_json() const {
  std::string out = "[";
  auto append_set = [&out](const std::vector<Index>& v) {
    out.push_back('[');
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) out.push_back(',');
      out += std::to_string(v[i]);
    }
    out.push_back(']');
  };
  append_set(initial);
  for (const auto& r : rounds) {
    out.push_back(',');
    append_set(r);
  }
  out.push_back(']');
  return out;
}

BitVec tile_watermark(const Watermark& b, Index target_len) {
  Index n = b.size();
  if (n <= 0) throw ValidationError("tile_watermark: empty watermark");
  if (target_len < n)
    throw ValidationError("tile_watermark: target length " + std::to_string(target_len) +
                          " shorter than one full tile of " + std::to_string(n));
  Index tiles = target_len / n;
  BitVec out;
  out.reserve(static_cast<std::size_t>(tiles * n));
  for (Index t = 0; t < tiles; ++t) out.insert(out.end(), b.bits.begin(), b.bits.end());
  return out;
}

ParamSlice filter_once(const ParamSlice& ps, const Watermark& b) {
  BitVec tiled = tile_watermark(b, ps.size());
  Index keep = 0;
  for (std::uint8_t bit : tiled) keep += bit;
  ParamSlice out;
  out.values.resize(keep);
  out.source_indices.reserve(static_cast<std::size_t>(keep));
  Index j = 0;
  for (std::size_t i = 0; i < tiled.size(); ++i) {
    if (tiled[i]) {
      out.values[j++] = ps.values[static_cast<Index>(i)];
      out.source_indices.push_back(ps.source_indices[i]);
    }
  }
  return out;
}

std::pair<ParamSlice, FilterTrace> filter_rounds(const ParamSlice& ps, const Watermark& b,
                                                 Index rounds) {
  if (rounds < 1) throw ValidationError("filter_rounds: round count must be >= 1");
  FilterTrace trace;
  trace.source_len = ps.source_indices.empty() ? ps.size() : ps.source_indices.back() + 1;
  trace.initial = ps.source_indices;
  ParamSlice cur = ps;
  for (Index r = 1; r <= rounds; ++r) {
    if (cur.size() < b.size())
      throw ValidationError("filter_rounds: only " + std::to_string(cur.size()) +
                            " parameters entering round " + std::to_string(r) +
                            ", need at least " + std::to_string(b.size()));
    cur = filter_once(cur, b);
    trace.rounds.push_back(cur.source_indices);
  }
  return {std::move(cur), std::move(trace)};
}

OverlapStat overlap_ratio(const FilterTrace& a, const FilterTrace& b, Index round) {
  const auto& sa = a.at_round(round);
  const auto& sb = b.at_round(round);
  OverlapStat stat;
  if (sa.empty() && sb.empty()) {
    stat.both_empty = true;
    return stat;
  }
  // Both sets are strictly increasing; a merge walk counts the intersection.
  std::size_t i = 0, j = 0, common = 0;
  while (i < sa.size() && j < sb.size()) {
    if (sa[i] < sb[j])
      ++i;
    else if (sa[i] > sb[j])
      ++j;
    else
      ++common, ++i, ++j;
  }
  stat.ratio = static_cast<double>(common) / static_cast<double>(std::max(sa.size(), sb.size()));
  return stat;
}

std::pair<VecX, PoolSpec> avg_pool(const ParamSlice& ps, Index k) {
  if (k < 1) throw ValidationError("avg_pool: k must be >= 1");
  if (ps.size() < k)
    throw ValidationError("avg_pool: input length " + std::to_string(ps.size()) +
                          " shorter than k = " + std::to_string(k));
  PoolSpec spec;
  spec.window = ps.size() / k;
  spec.output_len = k;
  spec.discarded_tail = ps.size() - spec.window * k;
  VecX out(k);
  for (Index j = 0; j < k; ++j)
    out[j] = ps.values.segment(j * spec.window, spec.window).mean();
  return {std::move(out), spec};
}

std::pair<VecX, PoolSpec> pool(const ParamSlice& ps, Index k, bool average) {
  if (average) return avg_pool(ps, k);
  if (k < 1) throw ValidationError("pool: k must be >= 1");
  if (ps.size() < k)
    throw ValidationError("pool: input length " + std::to_string(ps.size()) +
                          " shorter than k = " + std::to_string(k));
  PoolSpec spec;
  spec.window = 1;
  spec.output_len = k;
  spec.discarded_tail = ps.size() - k;
  return {ps.values.head(k), spec};
}

VecX route_gradient(const VecX& grad_pooled, const PoolSpec& spec, const FilterTrace& trace) {
  if (grad_pooled.size() != spec.output_len)
    throw ValidationError("route_gradient: gradient length " +
                          std::to_string(grad_pooled.size()) + " does not match pool output " +
                          std::to_string(spec.output_len));
  if (trace.rounds.empty()) throw ValidationError("route_gradient: trace has no rounds");
  const auto& survivors = trace.rounds.back();
  if (spec.window * spec.output_len + spec.discarded_tail != static_cast<Index>(survivors.size()))
    throw ValidationError("route_gradient: pool spec does not match the trace's final round");
  VecX out = VecX::Zero(trace.source_len);
  double inv_window = 1.0 / static_cast<double>(spec.window);
  for (Index j = 0; j < spec.output_len; ++j) {
    double g = grad_pooled[j] * inv_window;
    for (Index w = 0; w < spec.window; ++w)
      out[survivors[static_cast<std::size_t>(j * spec.window + w)]] += g;
  }
  return out;
}

}  // namespace nmk
