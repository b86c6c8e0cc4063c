#pragma once

#include "nmk/rng.hpp"
#include "nmk/types.hpp"

#include <string>
#include <vector>

namespace nmk {

// Fully-connected classifier: tanh hidden units, linear output layer.
// weights[l] has shape sizes[l+1] x sizes[l]; samples are column vectors.
struct Mlp {
  std::vector<MatX> weights;
  std::vector<VecX> biases;
  // Bumped by every parameter mutation; lets backward() reject stale caches.
  std::uint64_t revision = 0;

  Index layer_count() const { return static_cast<Index>(weights.size()); }
  std::vector<Index> layer_sizes() const;
  Index parameter_count() const;
  bool all_finite() const;

  // Logits for a dims x batch feature block.
  MatX logits(const MatX& x) const;

  // Uniform init in ±sqrt(6/(fan_in+fan_out)), biases zero.
  static Mlp init(const std::vector<Index>& sizes, Rng& rng);
};

struct Dataset {
  MatX features;            // samples x dims
  std::vector<int> labels;  // class ids in [0, classes)
  int classes = 0;
  std::string split;

  Index size() const { return features.rows(); }
  Index dims() const { return features.cols(); }
};

struct TrainConfig {
  std::vector<Index> hidden = {64, 64};
  double lambda = 1.0;
  double learning_rate = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  Index epochs = 200;
  Index batch_size = 64;
  std::uint64_t seed = 1;
  Index filter_rounds = 2;
  // Index of the weight matrix carrying the watermark; -1 embeds across all
  // weight matrices concatenated in layer order.
  Index embed_layer = 1;
  Index watermark_len = 64;
  Index key_rows = 64;
  bool use_pooling = true;
  // Multiply learning_rate by lr_gamma at each milestone epoch (0-based).
  std::vector<Index> lr_milestones = {150, 180};
  double lr_gamma = 0.1;

  void validate() const;
  double lr_at_epoch(Index epoch) const;
};

// Minibatch view: features transposed to dims x batch for the forward pass.
struct Batch {
  MatX x;  // dims x batch
  std::vector<int> labels;

  Index size() const { return x.cols(); }
  static Batch from_dataset(const Dataset& ds);
  static Batch from_dataset(const Dataset& ds, const std::vector<Index>& idx);
};

struct ForwardCache {
  MatX input;                   // dims x batch
  std::vector<MatX> hidden;     // post-tanh activations per hidden layer
  MatX probs;                   // classes x batch softmax outputs
  std::vector<int> labels;
  double loss = 0.0;
  std::uint64_t revision = 0;   // model revision at forward time
};

struct Grads {
  std::vector<MatX> w;
  std::vector<VecX> b;

  static Grads zeros_like(const Mlp& model);
  void add_scaled(const Grads& other, double scale);
};

struct SgdState {
  std::vector<MatX> vw;
  std::vector<VecX> vb;

  static SgdState zeros_like(const Mlp& model);
};

// Isotropic Gaussian clusters with means on a radius-3 circle (first two
// feature dimensions), labels round-robin, noise scale `spread`. Deterministic
// under seed.
Dataset make_blobs(Index samples, int classes, Index dims, double spread, std::uint64_t seed,
                   std::string split = "train");

// Softmax cross-entropy averaged over the batch.
double forward_loss(const Mlp& model, const Batch& batch, ForwardCache& cache);

// Analytic gradients for the cached forward pass. Rejects a cache taken at a
// different model revision.
Grads backward(const Mlp& model, const ForwardCache& cache);

// v <- momentum*v + grad + weight_decay*theta; theta <- theta - lr*v.
void sgd_step(Mlp& model, const Grads& grads, SgdState& state, double lr, double momentum,
              double weight_decay);

double accuracy(const Mlp& model, const Dataset& ds);

}  // namespace nmk
