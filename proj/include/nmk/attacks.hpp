#pragma once

#include "nmk/vanilla.hpp"
#include "nmk/verifier.hpp"

#include <map>
#include <string>

namespace nmk {

// Accuracy is "maintained" when the test-accuracy drop stays within this
// margin; attacks that pay more than this for removing a watermark fail the
// success criteria.
inline constexpr double kAccuracyDropTolerance = 0.10;

// Outcome of one attack run. original_rho is the owner watermark's detection
// rate on the attacked model; adversary_rho the adversary watermark's (where
// one exists). success follows the threat model: the owner's claim must be
// destroyed (or forged) while model accuracy survives.
struct AttackReport {
  std::string kind;
  double original_rho = 0.0;
  double adversary_rho = 0.0;
  double accuracy_before = 0.0;
  double accuracy_after = 0.0;
  bool adversary_verdict = false;
  bool success = false;
  std::map<std::string, std::string> params;

  std::string to_json() const;
};

// Verifies `trials` fresh hash-consistent random tuples against the frozen
// checkpoint; one report per trial. Never mutates the checkpoint.
std::vector<DetectionReport> forge_random(const ModelCheckpoint& ckpt, const TrainConfig& config,
                                          Index trials, std::uint64_t seed);

AttackReport summarize_forge(const std::vector<DetectionReport>& reports,
                             double accuracy);

struct ForgeLearnResult {
  SecretKey key;
  double rho = 0.0;
  Index steps_used = 0;
  // Alg. 2 verdict for the learned tuple against this checkpoint's scheme:
  // true against hash-free baselines, false against hash-bound schemes.
  bool verdict = false;
};

// Gradient descent on the key alone, model frozen, targeting arbitrary bits
// b_a through the publicly reconstructible baseline selection. Stops early
// once every bit matches.
ForgeLearnResult forge_learn_key(const ModelCheckpoint& ckpt, const BitVec& target_bits,
                                 Index steps, double eta, const TrainConfig& config);

struct OverwriteParams {
  double lambda_a = 10.0;
  double eta_a = 0.001;
  Index epochs = 100;
  std::uint64_t seed = 99;
};

// Continue training from the stolen checkpoint with the adversary's own
// watermark term riding the main loss. Owner evidence is measured before and
// after. The two overloads attack the matching scheme's checkpoints.
std::pair<ModelCheckpoint, AttackReport> overwrite(const ModelCheckpoint& ckpt,
                                                   const Dataset& train, const Dataset& test,
                                                   const WatermarkTuple& owner,
                                                   const WatermarkTuple& adversary,
                                                   const TrainConfig& base,
                                                   const OverwriteParams& params);
std::pair<ModelCheckpoint, AttackReport> overwrite(const ModelCheckpoint& ckpt,
                                                   const Dataset& train, const Dataset& test,
                                                   const VanillaTuple& owner,
                                                   const VanillaTuple& adversary,
                                                   const TrainConfig& base,
                                                   const OverwriteParams& params);

enum class FinetuneScope { all, watermark_layer };

FinetuneScope finetune_scope_from_string(const std::string& s);
std::string to_string(FinetuneScope scope);

// Transfer fine-tuning: the classifier head is re-initialized and the chosen
// scope trained on the new task with the main loss only (no weight decay, so
// frozen layers stay frozen). epochs = 0 is a strict no-op.
std::pair<ModelCheckpoint, AttackReport> finetune(const ModelCheckpoint& ckpt,
                                                  const Dataset& new_train,
                                                  const Dataset& new_test,
                                                  const WatermarkTuple& owner,
                                                  FinetuneScope scope, double eta, Index epochs,
                                                  std::uint64_t seed, const TrainConfig& base);

// Zero floor(ratio * m) uniformly chosen entries of one weight matrix
// (layer = -1 prunes across all of them).
std::pair<ModelCheckpoint, AttackReport> prune(const ModelCheckpoint& ckpt, double ratio,
                                               Index layer, std::uint64_t seed,
                                               const WatermarkTuple& owner, const Dataset& test,
                                               const TrainConfig& base);

}  // namespace nmk
