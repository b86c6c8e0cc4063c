#include "nmk/tinynet.hpp"

#include <cmath>
#include <numbers>

namespace nmk {

std::vector<Index> Mlp::layer_sizes() const {
  std::vector<Index> sizes;
  if (weights.empty()) return sizes;
  sizes.push_back(weights.front().cols());
  for (const auto& w : weights) sizes.push_back(w.rows());
  return sizes;
}

Index Mlp::parameter_count() const {
  Index total = 0;
  for (const auto& w : weights) total += w.size();
  for (const auto& b : biases) total += b.size();
  return total;
}

bool Mlp::all_finite() const {
  for (const auto& w : weights)
    if (!w.allFinite()) return false;
  for (const auto& b : biases)
    if (!b.allFinite()) return false;
  return true;
}

MatX Mlp::logits(const MatX& x) const {
  if (weights.empty()) throw ValidationError("Mlp: no layers");
  if (x.rows() != weights.front().cols())
    throw ValidationError("Mlp: input has " + std::to_string(x.rows()) +
                          " features, expected " + std::to_string(weights.front().cols()));
  MatX a = x;
  for (Index l = 0; l < layer_count(); ++l) {
    MatX z = (weights[static_cast<std::size_t>(l)] * a).colwise() +
             biases[static_cast<std::size_t>(l)];
    if (l + 1 < layer_count())
      a = z.array().tanh();
    else
      a = std::move(z);
  }
  return a;
}

Mlp Mlp::init(const std::vector<Index>& sizes, Rng& rng) {
  if (sizes.size() < 2) throw ValidationError("Mlp::init: need at least input and output sizes");
  for (Index s : sizes)
    if (s < 1) throw ValidationError("Mlp::init: layer sizes must be positive");
  Mlp m;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    Index fan_in = sizes[l], fan_out = sizes[l + 1];
    double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    MatX w(fan_out, fan_in);
    for (Index r = 0; r < fan_out; ++r)
      for (Index c = 0; c < fan_in; ++c) w(r, c) = (2.0 * rng.uniform() - 1.0) * bound;
    m.weights.push_back(std::move(w));
    m.biases.push_back(VecX::Zero(fan_out));
  }
  return m;
}

void TrainConfig::validate() const {
  if (hidden.empty()) throw ValidationError("config: need at least one hidden layer");
  for (Index h : hidden)
    if (h < 1) throw ValidationError("config: hidden sizes must be positive");
  if (lambda < 0) throw ValidationError("config: lambda must be >= 0");
  if (learning_rate <= 0) throw ValidationError("config: learning_rate must be > 0");
  if (momentum < 0 || momentum >= 1) throw ValidationError("config: momentum must be in [0,1)");
  if (weight_decay < 0) throw ValidationError("config: weight_decay must be >= 0");
  if (epochs < 0) throw ValidationError("config: epochs must be >= 0");
  if (batch_size < 1) throw ValidationError("config: batch_size must be >= 1");
  if (filter_rounds < 1) throw ValidationError("config: filter_rounds must be >= 1");
  if (watermark_len < 1) throw ValidationError("config: watermark_len must be >= 1");
  if (key_rows < 1) throw ValidationError("config: key_rows must be >= 1");
  if (embed_layer < -1) throw ValidationError("config: embed_layer must be >= -1");
  if (lr_gamma <= 0) throw ValidationError("config: lr_gamma must be > 0");
}

double TrainConfig::lr_at_epoch(Index epoch) const {
  double lr = learning_rate;
  for (Index m : lr_milestones)
    if (epoch >= m) lr *= lr_gamma;
  return lr;
}

Batch Batch::from_dataset(const Dataset& ds) {
  Batch b;
  b.x = ds.features.transpose();
  b.labels = ds.labels;
  return b;
}

Batch Batch::from_dataset(const Dataset& ds, const std::vector<Index>& idx) {
  Batch b;
  b.x.resize(ds.dims(), static_cast<Index>(idx.size()));
  b.labels.resize(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    b.x.col(static_cast<Index>(i)) = ds.features.row(idx[i]).transpose();
    b.labels[i] = ds.labels[static_cast<std::size_t>(idx[i])];
  }
  return b;
}

Grads Grads::zeros_like(const Mlp& model) {
  Grads g;
  for (const auto& w : model.weights) g.w.push_back(MatX::Zero(w.rows(), w.cols()));
  for (const auto& b : model.biases) g.b.push_back(VecX::Zero(b.size()));
  return g;
}

void Grads::add_scaled(const Grads& other, double scale) {
  for (std::size_t l = 0; l < w.size(); ++l) {
    w[l] += scale * other.w[l];
    b[l] += scale * other.b[l];
  }
}

SgdState SgdState::zeros_like(const Mlp& model) {
  SgdState s;
  for (const auto& w : model.weights) s.vw.push_back(MatX::Zero(w.rows(), w.cols()));
  for (const auto& b : model.biases) s.vb.push_back(VecX::Zero(b.size()));
  return s;
}

Dataset make_blobs(Index samples, int classes, Index dims, double spread, std::uint64_t seed,
                   std::string split) {
  if (classes < 2) throw ValidationError("make_blobs: need at least 2 classes");
  if (samples < classes) throw ValidationError("make_blobs: need at least one sample per class");
  if (dims < 1) throw ValidationError("make_blobs: dims must be >= 1");
  if (spread <= 0) throw ValidationError("make_blobs: spread must be > 0");
  constexpr double radius = 3.0;
  // Class means sit on a circle in the first two dimensions (a line for
  // dims = 1), independent of the seed so different splits share geometry.
  MatX means = MatX::Zero(classes, dims);
  for (int c = 0; c < classes; ++c) {
    double angle = 2.0 * std::numbers::pi * c / classes;
    means(c, 0) = radius * std::cos(angle);
    if (dims > 1) means(c, 1) = radius * std::sin(angle);
  }
  Dataset ds;
  ds.features.resize(samples, dims);
  ds.labels.resize(static_cast<std::size_t>(samples));
  ds.classes = classes;
  ds.split = std::move(split);
  Rng rng(seed);
  for (Index i = 0; i < samples; ++i) {
    int c = static_cast<int>(i % classes);
    ds.labels[static_cast<std::size_t>(i)] = c;
    for (Index d = 0; d < dims; ++d)
      ds.features(i, d) = means(c, d) + spread * rng.normal();
  }
  return ds;
}

double forward_loss(const Mlp& model, const Batch& batch, ForwardCache& cache) {
  if (batch.size() == 0) throw ValidationError("forward_loss: empty batch");
  if (batch.x.rows() != model.weights.front().cols())
    throw ValidationError("forward_loss: feature dimension mismatch");
  if (static_cast<Index>(batch.labels.size()) != batch.size())
    throw ValidationError("forward_loss: label count mismatch");

  cache.input = batch.x;
  cache.labels = batch.labels;
  cache.hidden.clear();
  MatX a = batch.x;
  for (Index l = 0; l + 1 < model.layer_count(); ++l) {
    a = ((model.weights[static_cast<std::size_t>(l)] * a).colwise() +
         model.biases[static_cast<std::size_t>(l)])
            .array()
            .tanh();
    cache.hidden.push_back(a);
  }
  MatX z = (model.weights.back() * a).colwise() + model.biases.back();

  // Shifted softmax + cross-entropy, averaged over the batch.
  Index nb = z.cols();
  cache.probs.resize(z.rows(), nb);
  double loss = 0.0;
  for (Index j = 0; j < nb; ++j) {
    int label = batch.labels[static_cast<std::size_t>(j)];
    if (label < 0 || label >= z.rows())
      throw ValidationError("forward_loss: label out of range");
    double zmax = z.col(j).maxCoeff();
    VecX e = (z.col(j).array() - zmax).exp();
    double denom = e.sum();
    cache.probs.col(j) = e / denom;
    loss += std::log(denom) - (z(label, j) - zmax);
  }
  loss /= static_cast<double>(nb);
  if (!std::isfinite(loss)) throw NumericError("forward_loss: non-finite loss");
  cache.loss = loss;
  cache.revision = model.revision;
  return loss;
}

Grads backward(const Mlp& model, const ForwardCache& cache) {
  if (cache.revision != model.revision)
    throw ValidationError("backward: cache is stale (model changed since forward pass)");
  Index nb = cache.probs.cols();
  Index layers = model.layer_count();

  // d loss / d logits = (softmax - one_hot) / batch.
  MatX delta = cache.probs;
  for (Index j = 0; j < nb; ++j) delta(cache.labels[static_cast<std::size_t>(j)], j) -= 1.0;
  delta /= static_cast<double>(nb);

  Grads g = Grads::zeros_like(model);
  for (Index l = layers - 1; l >= 0; --l) {
    const MatX& below = l == 0 ? cache.input : cache.hidden[static_cast<std::size_t>(l - 1)];
    g.w[static_cast<std::size_t>(l)] = delta * below.transpose();
    g.b[static_cast<std::size_t>(l)] = delta.rowwise().sum();
    if (l > 0) {
      // tanh' = 1 - a^2, with a the cached activation.
      delta = (model.weights[static_cast<std::size_t>(l)].transpose() * delta).array() *
              (1.0 - cache.hidden[static_cast<std::size_t>(l - 1)].array().square());
    }
  }
  return g;
}

void sgd_step(Mlp& model, const Grads& grads, SgdState& state, double lr, double momentum,
              double weight_decay) {
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    state.vw[l] = momentum * state.vw[l] + grads.w[l] + weight_decay * model.weights[l];
    state.vb[l] = momentum * state.vb[l] + grads.b[l] + weight_decay * model.biases[l];
    model.weights[l] -= lr * state.vw[l];
    model.biases[l] -= lr * state.vb[l];
    if (!model.weights[l].allFinite() || !model.biases[l].allFinite())
      throw NumericError("sgd_step: non-finite parameters in layer " + std::to_string(l));
  }
  ++model.revision;
}

double accuracy(const Mlp& model, const Dataset& ds) {
  if (ds.size() == 0) throw ValidationError("accuracy: empty dataset");
  MatX z = model.logits(ds.features.transpose());
  Index correct = 0;
  for (Index j = 0; j < z.cols(); ++j) {
    Index pred = 0;
    z.col(j).maxCoeff(&pred);
    correct += pred == ds.labels[static_cast<std::size_t>(j)];
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

}  // namespace nmk
