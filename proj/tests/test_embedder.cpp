#include <doctest.h>

#include "nmk/embedder.hpp"

#include <algorithm>
#include <cmath>
#include <set>

using namespace nmk;

namespace {

// Small embedding scenario: watermark lives in the first weight matrix
// (8x2 = 16 parameters), n = 4 bits, pooled down to k = 4 so the square key
// reaches every bit pattern.
TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.hidden = {8};
  cfg.lambda = 0.7;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  cfg.seed = 5;
  cfg.filter_rounds = 1;
  cfg.embed_layer = 0;
  cfg.watermark_len = 4;
  cfg.key_rows = 4;
  cfg.lr_milestones = {};
  return cfg;
}

// A tuple whose watermark has 1-3 ones, so filtering keeps some parameters
// and drops others.
WatermarkTuple tiny_tuple() {
  for (std::uint64_t seed = 21;; ++seed) {
    Rng rng(seed);
    WatermarkTuple tuple = make_watermark_tuple(sample_key(4, 4, rng));
    int ones = 0;
    for (auto b : tuple.watermark.bits) ones += b;
    if (ones >= 1 && ones <= 3) return tuple;
  }
}

double total_loss(const Mlp& model, const Batch& batch, const WatermarkTuple& tuple,
                  const TrainConfig& cfg) {
  ForwardCache cache;
  double lm = forward_loss(model, batch, cache);
  EmbedReadout readout = read_watermark(model, tuple, cfg);
  return lm + cfg.lambda * embed_loss(readout.extracted, tuple.watermark);
}

}  // namespace

TEST_CASE("extract applies the sigmoid of key-projected parameters") {
  SecretKey key;
  key.values = MatX::Identity(2, 2);
  VecX w(2);
  w << 2.0, 0.0;
  ExtractedWatermark e = extract(w, key);
  REQUIRE(e.size() == 2);
  CHECK(e.probabilities[0] == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))).epsilon(1e-15));
  CHECK(e.probabilities[1] == doctest::Approx(0.5).epsilon(1e-15));

  // Key column mixing: probabilities see w through K column by column.
  key.values.resize(2, 1);
  key.values << 1.0, 1.0;
  ExtractedWatermark mixed = extract(w, key);
  CHECK(mixed.probabilities[0] == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))).epsilon(1e-15));

  VecX wrong(3);
  wrong.setZero();
  CHECK_THROWS_AS(extract(wrong, key), ValidationError);
}

TEST_CASE("embed_loss is mean binary cross-entropy with clamping") {
  ExtractedWatermark e;
  e.probabilities = VecX::Constant(2, 0.5);
  Watermark target{BitVec{0, 1}};
  CHECK(embed_loss(e, target) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  e.probabilities = VecX::Constant(1, 1.0 / (1.0 + std::exp(-2.0)));
  Watermark one{BitVec{1}};
  CHECK(embed_loss(e, one) == doctest::Approx(std::log1p(std::exp(-2.0))).epsilon(1e-12));

  // Exact 0/1 probabilities stay finite through the clamp.
  e.probabilities = VecX::Constant(1, 0.0);
  double clamped = embed_loss(e, one);
  CHECK(std::isfinite(clamped));
  CHECK(clamped == doctest::Approx(-std::log(1e-12)).epsilon(1e-6));

  Watermark wrong{BitVec{1, 0}};
  CHECK_THROWS_AS(embed_loss(e, wrong), ValidationError);
}

TEST_CASE("embed view selects one matrix or all of them") {
  Rng rng(2);
  Mlp m = Mlp::init({2, 8, 4}, rng);

  EmbedView one = make_embed_view(m, 1);
  CHECK(one.layers == std::vector<Index>{1});
  CHECK(one.total_len == 32);
  VecX flat = gather_view(m, one);
  REQUIRE(flat.size() == 32);
  // Row-major: flat[r*cols + c] == W(r, c).
  CHECK(flat[0] == m.weights[1](0, 0));
  CHECK(flat[1] == m.weights[1](0, 1));
  CHECK(flat[8] == m.weights[1](1, 0));

  EmbedView all = make_embed_view(m, -1);
  CHECK(all.layers == std::vector<Index>{0, 1});
  CHECK(all.total_len == 16 + 32);
  VecX flat_all = gather_view(m, all);
  CHECK(flat_all[0] == m.weights[0](0, 0));
  CHECK(flat_all[16] == m.weights[1](0, 0));

  CHECK_THROWS_AS(make_embed_view(m, 2), ValidationError);
  CHECK_THROWS_AS(make_embed_view(m, -2), ValidationError);

  // scatter_add_view is the adjoint of gather_view: scattering a one-hot
  // vector hits exactly the gathered coordinate.
  Grads g = Grads::zeros_like(m);
  VecX delta = VecX::Zero(32);
  delta[9] = 2.5;
  scatter_add_view(g, one, delta, 2.0);
  CHECK(g.w[1](1, 1) == doctest::Approx(5.0));
  CHECK(g.w[1].sum() == doctest::Approx(5.0));
  CHECK(g.w[0].isZero());
}

TEST_CASE("read_watermark chains filter, pool, and extract") {
  Rng rng(3);
  Mlp m = Mlp::init({2, 8, 4}, rng);
  TrainConfig cfg = tiny_config();
  WatermarkTuple tuple = tiny_tuple();
  EmbedReadout r = read_watermark(m, tuple, cfg);
  CHECK(r.extracted.size() == 4);
  CHECK(r.pooled.size() == 4);
  CHECK(r.trace.round_count() == 1);
  CHECK(r.trace.source_len == 16);
  // Probabilities are genuine probabilities.
  CHECK(r.extracted.probabilities.minCoeff() > 0.0);
  CHECK(r.extracted.probabilities.maxCoeff() < 1.0);
}

TEST_CASE("joint gradient matches finite differences everywhere") {
  TrainConfig cfg = tiny_config();
  WatermarkTuple tuple = tiny_tuple();
  Rng rng(7);
  Mlp m = Mlp::init({2, 8, 4}, rng);
  Dataset ds = make_blobs(4, 4, 2, 0.5, 13);
  Batch batch = Batch::from_dataset(ds);

  double lm = 0, le = 0;
  Grads g = joint_grad(m, batch, tuple, cfg, &lm, &le);
  CHECK(lm > 0.0);
  CHECK(le > 0.0);

  const double h = 1e-6;
  // First weight matrix (the embed layer): main + embed gradients combined.
  for (Index r = 0; r < 8; ++r) {
    for (Index c = 0; c < 2; ++c) {
      Mlp mp = m, mm = m;
      mp.weights[0](r, c) += h;
      ++mp.revision;
      mm.weights[0](r, c) -= h;
      ++mm.revision;
      double fd =
          (total_loss(mp, batch, tuple, cfg) - total_loss(mm, batch, tuple, cfg)) / (2 * h);
      CHECK(g.w[0](r, c) == doctest::Approx(fd).epsilon(1e-5));
    }
  }
  // Second matrix and biases carry only the main loss, and still must match.
  for (Index r = 0; r < 4; ++r) {
    Mlp mp = m, mm = m;
    mp.weights[1](r, 3) += h;
    ++mp.revision;
    mm.weights[1](r, 3) -= h;
    ++mm.revision;
    double fd =
        (total_loss(mp, batch, tuple, cfg) - total_loss(mm, batch, tuple, cfg)) / (2 * h);
    CHECK(g.w[1](r, 3) == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("embed gradient is confined to surviving embed-layer coordinates") {
  TrainConfig cfg = tiny_config();
  WatermarkTuple tuple = tiny_tuple();
  Rng rng(8);
  Mlp m = Mlp::init({2, 8, 4}, rng);
  Dataset ds = make_blobs(4, 4, 2, 0.5, 14);
  Batch batch = Batch::from_dataset(ds);

  Grads with = joint_grad(m, batch, tuple, cfg);
  TrainConfig plain = cfg;
  plain.lambda = 0.0;
  Grads without = joint_grad(m, batch, tuple, plain);

  EmbedReadout readout = read_watermark(m, tuple, cfg);
  std::set<Index> survivors(readout.trace.at_round(1).begin(),
                            readout.trace.at_round(1).end());
  // Survivors actually filtered: some coordinates dropped out.
  REQUIRE(survivors.size() < 16);

  Index nonzero = 0;
  for (Index r = 0; r < 8; ++r) {
    for (Index c = 0; c < 2; ++c) {
      double diff = with.w[0](r, c) - without.w[0](r, c);
      Index flat = r * 2 + c;
      if (survivors.count(flat) == 0) {
        CHECK(diff == 0.0);
      } else if (diff != 0.0) {
        ++nonzero;
      }
    }
  }
  CHECK(nonzero > 0);
  // Pooled windows may discard a tail; those survivors get zero too — but the
  // embed term never leaks outside the embed layer.
  CHECK((with.w[1] - without.w[1]).isZero(0.0));
  CHECK((with.b[0] - without.b[0]).isZero(0.0));
  CHECK((with.b[1] - without.b[1]).isZero(0.0));
}

TEST_CASE("embed gradient is linear in lambda") {
  TrainConfig cfg = tiny_config();
  WatermarkTuple tuple = tiny_tuple();
  Rng rng(9);
  Mlp m = Mlp::init({2, 8, 4}, rng);
  Dataset ds = make_blobs(4, 4, 2, 0.5, 15);
  Batch batch = Batch::from_dataset(ds);

  TrainConfig c0 = cfg, c1 = cfg, c2 = cfg;
  c0.lambda = 0.0;
  c1.lambda = 1.0;
  c2.lambda = 2.0;
  Grads g0 = joint_grad(m, batch, tuple, c0);
  Grads g1 = joint_grad(m, batch, tuple, c1);
  Grads g2 = joint_grad(m, batch, tuple, c2);
  MatX lhs = g2.w[0] - g0.w[0];
  MatX rhs = 2.0 * (g1.w[0] - g0.w[0]);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("watermark training drives rho to one on the tiny scenario") {
  TrainConfig cfg = tiny_config();
  cfg.epochs = 40;
  cfg.lambda = 5.0;
  cfg.learning_rate = 0.05;
  WatermarkTuple tuple = tiny_tuple();
  Dataset train = make_blobs(64, 4, 2, 0.5, 16);
  Dataset test = make_blobs(32, 4, 2, 0.5, 17, "test");

  TrainResult result = train_watermarked(train, test, tuple, cfg);
  CHECK(result.checkpoint.scheme == Scheme::neuralmark);
  CHECK(result.checkpoint.model.all_finite());
  CHECK(result.checkpoint.config_digest == train_config_digest(cfg, Scheme::neuralmark));
  REQUIRE(result.curves.size() == 40);
  CHECK(result.curves.back().rho == doctest::Approx(1.0));
  CHECK(result.curves.back().loss_embed < result.curves.front().loss_embed);

  // Deterministic end to end: the same run reproduces identical bytes.
  TrainResult again = train_watermarked(train, test, tuple, cfg);
  CHECK(checkpoint_bytes(again.checkpoint) == checkpoint_bytes(result.checkpoint));

  std::string csv = curves_csv(result.curves);
  CHECK(csv.rfind("epoch,train_acc,test_acc,loss_main,loss_embed,rho\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 41);
}

TEST_CASE("clean training carries no embed loss") {
  TrainConfig cfg = tiny_config();
  cfg.epochs = 5;
  Dataset train = make_blobs(32, 4, 2, 0.5, 18);
  Dataset test = make_blobs(16, 4, 2, 0.5, 19, "test");
  TrainResult result = train_clean(train, test, cfg);
  CHECK(result.checkpoint.scheme == Scheme::clean);
  for (const auto& row : result.curves) {
    CHECK(row.loss_embed == 0.0);
    CHECK(row.rho == 0.0);
  }
}

TEST_CASE("training config mismatches are rejected up front") {
  TrainConfig cfg = tiny_config();
  WatermarkTuple tuple = tiny_tuple();
  Dataset train = make_blobs(16, 4, 2, 0.5, 20);
  Dataset test = make_blobs(8, 4, 2, 0.5, 21, "test");

  TrainConfig bad = cfg;
  bad.watermark_len = 8;  // tuple carries 4 bits
  CHECK_THROWS_AS(train_watermarked(train, test, tuple, bad), ValidationError);

  TrainConfig negative = cfg;
  negative.learning_rate = -1.0;
  CHECK_THROWS_AS(train_watermarked(train, test, tuple, negative), ValidationError);
}
