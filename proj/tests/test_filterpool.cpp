#include <doctest.h>

#include "nmk/filterpool.hpp"
#include "nmk/rng.hpp"

#include <algorithm>
#include <set>

using namespace nmk;

namespace {

Watermark bits(std::initializer_list<int> v) {
  Watermark w;
  for (int b : v) w.bits.push_back(static_cast<std::uint8_t>(b));
  return w;
}

VecX iota_vec(Index n) {
  VecX v(n);
  for (Index i = 0; i < n; ++i) v[i] = static_cast<double>(i);
  return v;
}

}  // namespace

TEST_CASE("tile_watermark repeats whole copies and discards the remainder") {
  Watermark b = bits({1, 0, 1});
  BitVec t = tile_watermark(b, 7);  // floor(7/3)=2 copies -> length 6
  BitVec expected = {1, 0, 1, 1, 0, 1};
  CHECK(t == expected);
  CHECK(tile_watermark(b, 3).size() == 3);
  CHECK_THROWS_AS(tile_watermark(b, 2), ValidationError);
}

TEST_CASE("filter_once keeps bit-1 positions with their source indices") {
  ParamSlice ps = ParamSlice::from_vector(iota_vec(7));
  ParamSlice f = filter_once(ps, bits({1, 0, 1}));
  // Tiled mask 1,0,1,1,0,1 over indices 0..5; index 6 past the tiling is
  // dropped.
  std::vector<Index> expected = {0, 2, 3, 5};
  CHECK(f.source_indices == expected);
  CHECK(f.values.size() == 4);
  CHECK(f.values[0] == 0.0);
  CHECK(f.values[1] == 2.0);
  CHECK(f.values[2] == 3.0);
  CHECK(f.values[3] == 5.0);
}

TEST_CASE("two filter rounds on sixteen parameters (owner vs adversary)") {
  // Worked example: b = 1010 over 16 parameters.
  ParamSlice ps = ParamSlice::from_vector(iota_vec(16));
  auto [owner_slice, owner_trace] = filter_rounds(ps, bits({1, 0, 1, 0}), 2);
  std::vector<Index> r1 = {0, 2, 4, 6, 8, 10, 12, 14};
  std::vector<Index> r2 = {0, 4, 8, 12};
  CHECK(owner_trace.at_round(1) == r1);
  CHECK(owner_trace.at_round(2) == r2);
  CHECK(owner_slice.source_indices == r2);
  CHECK(owner_trace.at_round(0).size() == 16);
  CHECK(owner_trace.source_len == 16);

  auto [adv_slice, adv_trace] = filter_rounds(ps, bits({0, 1, 1, 0}), 2);
  std::vector<Index> a1 = {1, 2, 5, 6, 9, 10, 13, 14};
  std::vector<Index> a2 = {2, 5, 10, 13};
  CHECK(adv_trace.at_round(1) == a1);
  CHECK(adv_trace.at_round(2) == a2);

  // Overlap decays round by round: identical support at round 0, half at
  // round 1, disjoint at round 2.
  CHECK(overlap_ratio(owner_trace, adv_trace, 0).ratio == doctest::Approx(1.0));
  CHECK(overlap_ratio(owner_trace, adv_trace, 1).ratio == doctest::Approx(0.5));
  CHECK(overlap_ratio(owner_trace, adv_trace, 2).ratio == doctest::Approx(0.0));
}

TEST_CASE("filter trace nesting and counting laws") {
  // Half-weight watermark in shuffled positions keeps every round large
  // enough for three rounds from 300 sources.
  Rng rng(5);
  Watermark b;
  b.bits.assign(16, 0);
  std::fill(b.bits.begin(), b.bits.begin() + 8, 1);
  rng.shuffle(b.bits);
  ParamSlice ps = ParamSlice::from_vector(iota_vec(300));
  auto [slice, trace] = filter_rounds(ps, b, 3);

  const Index ones = 8;
  for (Index r = 1; r <= 3; ++r) {
    const auto& prev = trace.at_round(r - 1);
    const auto& cur = trace.at_round(r);
    // Survivors are a subset of the previous round.
    CHECK(std::includes(prev.begin(), prev.end(), cur.begin(), cur.end()));
    CHECK(std::is_sorted(cur.begin(), cur.end()));
    // Exact survivor count: ones per whole tile plus the tiled prefix of the
    // remainder... the remainder past the last whole tile is discarded, so
    // count = floor(prev/16) * popcount(b).
    CHECK(static_cast<Index>(cur.size()) ==
          static_cast<Index>(prev.size()) / 16 * ones);
  }
  CHECK(slice.source_indices == trace.at_round(3));
}

TEST_CASE("filter_rounds rejects too-short inputs naming the round") {
  ParamSlice ps = ParamSlice::from_vector(iota_vec(16));
  Watermark b = bits({1, 0, 0, 0});  // 16 -> 4 -> 1; 1 < n entering round 3
  CHECK_NOTHROW(filter_rounds(ps, b, 2));
  CHECK_THROWS_WITH_AS(filter_rounds(ps, b, 3),
                       doctest::Contains("round 3"), ValidationError);
}

TEST_CASE("avg_pool windows and tail discard") {
  ParamSlice ps = ParamSlice::from_vector(iota_vec(10));
  auto [pooled, spec] = avg_pool(ps, 3);
  CHECK(spec.window == 3);
  CHECK(spec.output_len == 3);
  CHECK(spec.discarded_tail == 1);
  CHECK(pooled.size() == 3);
  CHECK(pooled[0] == doctest::Approx(1.0));
  CHECK(pooled[1] == doctest::Approx(4.0));
  CHECK(pooled[2] == doctest::Approx(7.0));

  auto [same, spec1] = avg_pool(ParamSlice::from_vector(iota_vec(4)), 4);
  CHECK(spec1.window == 1);
  CHECK(same == iota_vec(4));

  CHECK_THROWS_AS(avg_pool(ParamSlice::from_vector(iota_vec(3)), 4), ValidationError);
}

TEST_CASE("pool without averaging takes the first k survivors") {
  ParamSlice ps = ParamSlice::from_vector(iota_vec(10));
  auto [head, spec] = pool(ps, 4, false);
  CHECK(spec.window == 1);
  CHECK(spec.output_len == 4);
  CHECK(spec.discarded_tail == 6);
  CHECK(head == iota_vec(4));

  auto [avg, spec_avg] = pool(ps, 4, true);
  CHECK(spec_avg.window == 2);
  CHECK(avg[0] == doctest::Approx(0.5));
}

TEST_CASE("route_gradient is the exact transpose of pool∘filter") {
  // Finite differences through the full composite map: perturb each source
  // coordinate, measure the pooled output change against the routed gradient.
  const Index len = 48, n = 8, k = 4, rounds = 2;
  Rng rng(9);
  SecretKey key = sample_key(4, n, rng);
  Watermark b = generate_watermark(key, {}, n);

  VecX x(len);
  for (Index i = 0; i < len; ++i) x[i] = rng.normal();
  VecX g(k);
  for (Index j = 0; j < k; ++j) g[j] = rng.normal();

  auto forward = [&](const VecX& v) {
    auto [slice, trace] = filter_rounds(ParamSlice::from_vector(v), b, rounds);
    return avg_pool(slice, k).first;
  };
  auto [slice, trace] = filter_rounds(ParamSlice::from_vector(x), b, rounds);
  auto [pooled, spec] = avg_pool(slice, k);
  VecX routed = route_gradient(g, spec, trace);
  CHECK(routed.size() == len);

  const double h = 1e-6;
  for (Index i = 0; i < len; ++i) {
    VecX xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    double fd = (g.dot(forward(xp)) - g.dot(forward(xm))) / (2 * h);
    CHECK(routed[i] == doctest::Approx(fd).epsilon(1e-6));
  }

  // Gradient mass is conserved: each pooled coordinate's gradient is split
  // evenly over its window.
  CHECK(routed.sum() == doctest::Approx(g.sum()).epsilon(1e-12));
}

TEST_CASE("independent watermarks overlap at about 2^-R") {
  // For random b, a source index survives R rounds of each of two independent
  // filters with probability ~(1/2)^R each, and the overlap ratio
  // |A∩B|/max(|A|,|B|) concentrates near 2^-R.
  const Index n = 32, len = 4096;
  ParamSlice ps = ParamSlice::from_vector(iota_vec(len));
  Rng rng(31);
  double sum1 = 0, sum2 = 0;
  const int pairs = 20;
  for (int p = 0; p < pairs; ++p) {
    Watermark a = generate_watermark(sample_key(2, n, rng), {}, n);
    Watermark b = generate_watermark(sample_key(2, n, rng), {}, n);
    auto ta = filter_rounds(ps, a, 2).second;
    auto tb = filter_rounds(ps, b, 2).second;
    sum1 += overlap_ratio(ta, tb, 1).ratio;
    sum2 += overlap_ratio(ta, tb, 2).ratio;
  }
  CHECK(sum1 / pairs == doctest::Approx(0.5).epsilon(0.25));
  CHECK(sum2 / pairs == doctest::Approx(0.25).epsilon(0.45));
  CHECK(sum2 / pairs < sum1 / pairs);
}

TEST_CASE("overlap_ratio edge cases") {
  FilterTrace a, b;
  a.source_len = b.source_len = 4;
  a.initial = {0, 1};
  b.initial = {2, 3};
  a.rounds = {{}};
  b.rounds = {{}};
  CHECK(overlap_ratio(a, b, 0).ratio == 0.0);
  OverlapStat empty = overlap_ratio(a, b, 1);
  CHECK(empty.both_empty);
  CHECK(empty.ratio == 0.0);
  CHECK_THROWS_AS(overlap_ratio(a, b, 2), ValidationError);
}
