#include <doctest.h>

#include "nmk/attacks.hpp"
#include "nmk/experiment.hpp"

#include <set>

using namespace nmk;

namespace {

// Shared tiny scenario: 2-8-8-4 network, watermark in the middle matrix.
TrainConfig attack_config() {
  TrainConfig cfg;
  cfg.hidden = {8, 8};
  cfg.lambda = 5.0;
  cfg.learning_rate = 0.05;
  cfg.epochs = 60;
  cfg.batch_size = 8;
  cfg.seed = 11;
  cfg.filter_rounds = 1;
  cfg.embed_layer = 1;  // 8x8 = 64 parameters
  cfg.watermark_len = 8;
  cfg.key_rows = 8;
  cfg.lr_milestones = {};
  return cfg;
}

struct Scenario {
  TrainConfig cfg = attack_config();
  Dataset train = make_blobs(64, 4, 2, 0.5, 60);
  Dataset test = make_blobs(32, 4, 2, 0.5, 61, "test");
  WatermarkTuple owner;
  TrainResult run;

  Scenario() {
    Rng rng(12);
    owner = make_watermark_tuple(sample_key(8, 8, rng));
    run = train_watermarked(train, test, owner, cfg);
  }
};

Scenario& scenario() {
  static Scenario s;
  return s;
}

double owner_rho(const Mlp& model, const Scenario& s) {
  EmbedReadout r = read_watermark(model, s.owner, s.cfg);
  return detection_rate(threshold_bits(r.extracted), s.owner.watermark);
}

}  // namespace

TEST_CASE("forge_random never mutates the checkpoint and reports per trial") {
  Scenario& s = scenario();
  Bytes before = checkpoint_bytes(s.run.checkpoint);

  std::vector<DetectionReport> reports = forge_random(s.run.checkpoint, s.cfg, 6, 77);
  CHECK(checkpoint_bytes(s.run.checkpoint) == before);
  REQUIRE(reports.size() == 6);
  for (const auto& r : reports) {
    CHECK(r.hash_checked);
    CHECK(r.hash_consistent);  // counterfeits are honestly hash-derived
    CHECK(r.rho >= 0.0);
    CHECK(r.rho <= 1.0);
    CHECK(r.n == 8);
  }

  // Deterministic per seed, different across seeds.
  std::vector<DetectionReport> again = forge_random(s.run.checkpoint, s.cfg, 6, 77);
  for (std::size_t i = 0; i < reports.size(); ++i)
    CHECK(again[i].rho == reports[i].rho);
  std::vector<DetectionReport> other = forge_random(s.run.checkpoint, s.cfg, 6, 78);
  bool any_diff = false;
  for (std::size_t i = 0; i < reports.size(); ++i)
    any_diff = any_diff || other[i].rho != reports[i].rho;
  CHECK(any_diff);

  AttackReport summary = summarize_forge(reports, 0.9);
  CHECK(summary.kind == "forge");
  CHECK(summary.accuracy_after == doctest::Approx(0.9));
  CHECK(summary.params.count("mean_rho") == 1);
  CHECK(summary.params.count("max_rho") == 1);
  // success is exactly "some trial's verdict fired"; at n = 8 a lucky
  // counterfeit is possible, so cross-check instead of assuming.
  bool any_verdict = false;
  for (const auto& r : reports) any_verdict = any_verdict || r.verdict;
  CHECK(summary.success == any_verdict);
}

TEST_CASE("forge trials cannot replay the embedded key from a shared master seed") {
  // The embedded key is itself derived from the training seed at a small
  // stream index.  Forging with that same master seed — exactly what the CLI
  // does — must still draw a fresh counterfeit at every trial index instead
  // of replaying a sibling stream.
  ExperimentConfig ecfg;
  ecfg.train = attack_config();
  ecfg.train.watermark_len = 16;
  ecfg.train.key_rows = 16;
  ecfg.train_samples = 64;
  ecfg.test_samples = 32;
  ecfg.spread = 0.5;

  WatermarkTuple owner = ecfg.owner_tuple();
  TrainResult run = train_watermarked(ecfg.make_train(), ecfg.make_test(), owner, ecfg.train);
  EmbedReadout readout = read_watermark(run.checkpoint.model, owner, ecfg.train);
  REQUIRE(detection_rate(threshold_bits(readout.extracted), owner.watermark) == 1.0);

  // A replayed owner key would report rho exactly 1.0; an honest random
  // counterfeit cannot (these seeds are fixed, so this is deterministic).
  std::vector<DetectionReport> reports =
      forge_random(run.checkpoint, ecfg.train, 8, ecfg.train.seed);
  for (const auto& r : reports) CHECK(r.rho < 1.0);
}

TEST_CASE("prune ratio edge cases") {
  Scenario& s = scenario();

  SUBCASE("ratio zero is the identity") {
    auto [pruned, report] = prune(s.run.checkpoint, 0.0, s.cfg.embed_layer, 5, s.owner, s.test,
                                  s.cfg);
    CHECK(checkpoint_bytes(pruned) == checkpoint_bytes(s.run.checkpoint));
    CHECK(report.kind == "prune");
    CHECK(report.original_rho == doctest::Approx(owner_rho(s.run.checkpoint.model, s)));
    CHECK(report.accuracy_after == doctest::Approx(report.accuracy_before));
  }

  SUBCASE("ratio one zeroes the whole layer") {
    auto [pruned, report] = prune(s.run.checkpoint, 1.0, s.cfg.embed_layer, 5, s.owner, s.test,
                                  s.cfg);
    CHECK(pruned.model.weights[1].isZero());
    CHECK_FALSE(pruned.model.weights[0].isZero());
    // All-zero parameters extract sigma(0) = 0.5 everywhere, thresholded to
    // all-zero bits: rho collapses to the owner's zero-bit fraction.
    double zeros = 0;
    for (auto b : s.owner.watermark.bits) zeros += (b == 0) ? 1.0 : 0.0;
    CHECK(report.original_rho == doctest::Approx(zeros / 8.0));
  }

  SUBCASE("layer -1 prunes across all matrices") {
    auto [pruned, report] = prune(s.run.checkpoint, 1.0, -1, 5, s.owner, s.test, s.cfg);
    CHECK(pruned.model.weights[0].isZero());
    CHECK(pruned.model.weights[1].isZero());
    CHECK(pruned.model.weights[2].isZero());
  }

  SUBCASE("fractional ratio zeroes exactly floor(ratio*m) entries") {
    auto [pruned, report] = prune(s.run.checkpoint, 0.4, s.cfg.embed_layer, 5, s.owner, s.test,
                                  s.cfg);
    Index zeros = 0;
    const MatX& w = pruned.model.weights[1];
    for (Index r = 0; r < w.rows(); ++r)
      for (Index c = 0; c < w.cols(); ++c)
        if (w(r, c) == 0.0) ++zeros;
    // 0.4 * 64 = 25.6 -> 25 pruned (original entries are nonzero with
    // probability 1).
    CHECK(zeros == 25);
    CHECK(std::stod(report.params.at("ratio")) == doctest::Approx(0.4));
    // Different seeds prune different subsets.
    auto [pruned2, report2] = prune(s.run.checkpoint, 0.4, s.cfg.embed_layer, 6, s.owner,
                                    s.test, s.cfg);
    CHECK(checkpoint_bytes(pruned2) != checkpoint_bytes(pruned));
  }

  SUBCASE("invalid ratio is rejected") {
    CHECK_THROWS_AS(prune(s.run.checkpoint, -0.1, 1, 5, s.owner, s.test, s.cfg),
                    ValidationError);
    CHECK_THROWS_AS(prune(s.run.checkpoint, 1.1, 1, 5, s.owner, s.test, s.cfg),
                    ValidationError);
  }
}

TEST_CASE("finetune with zero epochs is a strict no-op") {
  Scenario& s = scenario();
  Dataset new_train = make_blobs(32, 4, 2, 0.5, 62);
  Dataset new_test = make_blobs(16, 4, 2, 0.5, 63, "test");
  auto [tuned, report] = finetune(s.run.checkpoint, new_train, new_test, s.owner,
                                  FinetuneScope::all, 0.01, 0, 7, s.cfg);
  CHECK(checkpoint_bytes(tuned) == checkpoint_bytes(s.run.checkpoint));
  CHECK(report.kind == "finetune");
  CHECK(report.original_rho == doctest::Approx(owner_rho(s.run.checkpoint.model, s)));
}

TEST_CASE("finetune scope controls which layers move") {
  Scenario& s = scenario();
  Dataset new_train = make_blobs(64, 4, 2, 0.5, 64);
  Dataset new_test = make_blobs(32, 4, 2, 0.5, 65, "test");

  auto [scoped, r1] = finetune(s.run.checkpoint, new_train, new_test, s.owner,
                               FinetuneScope::watermark_layer, 0.01, 5, 7, s.cfg);
  // Frozen first matrix: bit-identical. Embed layer and re-initialized head
  // move.
  CHECK(scoped.model.weights[0] == s.run.checkpoint.model.weights[0]);
  CHECK(scoped.model.biases[0] == s.run.checkpoint.model.biases[0]);
  CHECK(scoped.model.weights[1] != s.run.checkpoint.model.weights[1]);
  CHECK(scoped.model.weights[2] != s.run.checkpoint.model.weights[2]);

  auto [full, r2] = finetune(s.run.checkpoint, new_train, new_test, s.owner,
                             FinetuneScope::all, 0.01, 5, 7, s.cfg);
  CHECK(full.model.weights[0] != s.run.checkpoint.model.weights[0]);

  CHECK(r1.params.at("scope") == "watermark_layer");
  CHECK(r2.params.at("scope") == "all");
  // Original checkpoint untouched by either run.
  CHECK(s.run.checkpoint.model.all_finite());
}

TEST_CASE("overwrite reports both sides of the dispute") {
  Scenario& s = scenario();
  Rng rng(13);
  WatermarkTuple adversary = make_watermark_tuple(sample_key(8, 8, rng));
  OverwriteParams params;
  params.lambda_a = 5.0;
  params.eta_a = 0.01;
  params.epochs = 10;
  params.seed = 21;

  Bytes before = checkpoint_bytes(s.run.checkpoint);
  auto [stolen, report] = overwrite(s.run.checkpoint, s.train, s.test, s.owner, adversary,
                                    s.cfg, params);
  CHECK(checkpoint_bytes(s.run.checkpoint) == before);
  CHECK(checkpoint_bytes(stolen) != before);
  CHECK(report.kind == "overwrite");
  CHECK(report.params.count("owner_rho_before") == 1);
  CHECK(report.params.count("rho_star") == 1);
  CHECK(std::stod(report.params.at("lambda_a")) == doctest::Approx(5.0));
  CHECK(report.accuracy_before >= 0.0);
  CHECK(report.accuracy_before <= 1.0);
  CHECK(report.accuracy_after >= 0.0);
  CHECK(report.accuracy_after <= 1.0);
  CHECK(report.adversary_rho >= 0.0);
  CHECK(report.adversary_rho <= 1.0);
  // The adversary's own read-out on the mutated model matches the report.
  EmbedReadout adv = read_watermark(stolen.model, adversary, s.cfg);
  CHECK(detection_rate(threshold_bits(adv.extracted), adversary.watermark) ==
        doctest::Approx(report.adversary_rho));

  // Inconsistent adversary evidence is rejected up front.
  WatermarkTuple bogus = adversary;
  bogus.watermark.bits[0] ^= 1;
  CHECK_THROWS_AS(overwrite(s.run.checkpoint, s.train, s.test, s.owner, bogus, s.cfg, params),
                  ValidationError);
}

TEST_CASE("scheme-mismatched attacks are rejected") {
  Scenario& s = scenario();
  Rng rng(14);
  VanillaTuple vt = make_vanilla_tuple(sample_key(8, 8, rng), s.owner.watermark);
  OverwriteParams params;
  // Vanilla overload demands a vanilla checkpoint.
  CHECK_THROWS_AS(overwrite(s.run.checkpoint, s.train, s.test, vt,
                            make_vanilla_tuple(sample_key(8, 8, rng), s.owner.watermark), s.cfg,
                            params),
                  ValidationError);
}
