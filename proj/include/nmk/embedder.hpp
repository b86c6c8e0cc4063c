#pragma once

#include "nmk/checkpoint.hpp"
#include "nmk/filterpool.hpp"
#include "nmk/hashmark.hpp"
#include "nmk/tinynet.hpp"

#include <functional>
#include <optional>

namespace nmk {

// Ownership evidence: the key, its hash-derived watermark, and the auxiliary
// content that participated in the hash.
struct WatermarkTuple {
  SecretKey key;
  Watermark watermark;
  Bytes aux;

  bool consistent() const { return nmk::hash_consistent(key, aux, watermark); }
};

WatermarkTuple make_watermark_tuple(SecretKey key, Bytes aux = {});

// Per-bit recovery probabilities, sigmoid(w_tilde^T K).
struct ExtractedWatermark {
  VecX probabilities;

  Index size() const { return probabilities.size(); }
};

ExtractedWatermark extract(const VecX& w_tilde, const SecretKey& key);

// Mean binary cross-entropy against the target bits; probabilities clamped to
// [1e-12, 1 - 1e-12] so the loss stays finite.
double embed_loss(const ExtractedWatermark& extracted, const Watermark& target);

// Which flattened weight coordinates the watermark lives in. embed_layer >= 0
// selects one weight matrix (row-major flattened); -1 concatenates all of them.
struct EmbedView {
  std::vector<Index> layers;   // weight-matrix indices, in order
  std::vector<Index> offsets;  // start of each layer inside the flat vector
  Index total_len = 0;
};

EmbedView make_embed_view(const Mlp& model, Index embed_layer);
VecX gather_view(const Mlp& model, const EmbedView& view);
void scatter_add_view(Grads& grads, const EmbedView& view, const VecX& flat, double scale);

// One full watermark read-out of a model: filter -> pool -> extract.
struct EmbedReadout {
  FilterTrace trace;
  PoolSpec spec;
  VecX pooled;
  ExtractedWatermark extracted;
};

EmbedReadout read_watermark(const Mlp& model, const WatermarkTuple& tuple,
                            const TrainConfig& config);

// Gradient of L_m + lambda * L_e over every parameter. The L_e term flows
// through extract, the pooling window, and the filter trace; parameters
// outside the final trace round receive only the L_m term.
Grads joint_grad(const Mlp& model, const Batch& batch, const WatermarkTuple& tuple,
                 const TrainConfig& config, double* loss_main = nullptr,
                 double* loss_embed = nullptr);

struct EpochStats {
  Index epoch = 0;
  double train_acc = 0.0;
  double test_acc = 0.0;
  double loss_main = 0.0;
  double loss_embed = 0.0;
  double rho = 0.0;
};

struct TrainResult {
  ModelCheckpoint checkpoint;
  std::vector<EpochStats> curves;
};

// Adds the lambda-scaled L_e gradient for `tuple` into `grads` and returns the
// current L_e. Shared by joint_grad, the training loop, and the overwriter.
double watermark_grad_term(const Mlp& model, const WatermarkTuple& tuple,
                           const TrainConfig& config, Grads& grads);

// Scheme-agnostic training engine. The watermark term (if any) adds its
// gradient for the current minibatch and returns its loss; the rho hook reads
// the current detection rate for the per-epoch curves; grad_mask (if set) can
// zero out layers excluded from the update (fine-tuning scopes). start (if
// set) continues from an existing model instead of a fresh init.
struct TrainHooks {
  std::function<double(const Mlp& model, Grads& grads)> watermark_grad;
  std::function<double(const Mlp& model)> rho;
  std::function<void(Grads& grads)> grad_mask;
  const Mlp* start = nullptr;
};

TrainResult run_training(const Dataset& train, const Dataset& test, const TrainConfig& config,
                         Scheme scheme, const TrainHooks& hooks,
                         const std::string& config_digest);

// Algorithm: per epoch, shuffled minibatches of joint_grad + sgd_step; curves
// record (train_acc, test_acc, L_m, L_e, rho) each epoch.
TrainResult train_watermarked(const Dataset& train, const Dataset& test,
                              const WatermarkTuple& tuple, const TrainConfig& config,
                              const std::string& config_digest = "");

// Same loop with lambda pinned to zero and no watermark read-out.
TrainResult train_clean(const Dataset& train, const Dataset& test, const TrainConfig& config,
                        const std::string& config_digest = "");

// CSV with header epoch,train_acc,test_acc,loss_main,loss_embed,rho.
std::string curves_csv(const std::vector<EpochStats>& curves);

// Short hex fingerprint of (scheme, train hyperparameters) for checkpoints
// created outside the CLI (the CLI stamps its full config digest instead).
std::string train_config_digest(const TrainConfig& config, Scheme scheme);

}  // namespace nmk
