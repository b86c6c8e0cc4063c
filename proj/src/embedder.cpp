#include "nmk/embedder.hpp"

#include "nmk/shake256.hpp"
#include "nmk/verifier.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace nmk {

WatermarkTuple make_watermark_tuple(SecretKey key, Bytes aux) {
  WatermarkTuple t;
  t.watermark = generate_watermark(key, aux, key.cols());
  t.key = std::move(key);
  t.aux = std::move(aux);
  return t;
}

ExtractedWatermark extract(const VecX& w_tilde, const SecretKey& key) {
  if (w_tilde.size() != key.rows())
    throw ValidationError("extract: pooled vector length " + std::to_string(w_tilde.size()) +
                          " does not match key rows " + std::to_string(key.rows()));
  ExtractedWatermark e;
  VecX z = key.values.transpose() * w_tilde;
  e.probabilities = (1.0 + (-z.array()).exp()).inverse();
  return e;
}

double embed_loss(const ExtractedWatermark& extracted, const Watermark& target) {
  if (extracted.size() != target.size())
    throw ValidationError("embed_loss: length mismatch");
  constexpr double eps = 1e-12;
  double loss = 0.0;
  for (Index i = 0; i < target.size(); ++i) {
    double p = std::min(1.0 - eps, std::max(eps, extracted.probabilities[i]));
    loss -= target.bits[static_cast<std::size_t>(i)] ? std::log(p) : std::log1p(-p);
  }
  return loss / static_cast<double>(target.size());
}

EmbedView make_embed_view(const Mlp& model, Index embed_layer) {
  if (model.weights.empty()) throw ValidationError("make_embed_view: model has no layers");
  EmbedView view;
  if (embed_layer == -1) {
    for (Index l = 0; l < model.layer_count(); ++l) view.layers.push_back(l);
  } else if (embed_layer >= 0 && embed_layer < model.layer_count()) {
    view.layers.push_back(embed_layer);
  } else {
    throw ValidationError("make_embed_view: embed layer " + std::to_string(embed_layer) +
                          " out of range for " + std::to_string(model.layer_count()) +
                          " layers");
  }
  for (Index l : view.layers) {
    view.offsets.push_back(view.total_len);
    view.total_len += model.weights[static_cast<std::size_t>(l)].size();
  }
  return view;
}

VecX gather_view(const Mlp& model, const EmbedView& view) {
  VecX flat(view.total_len);
  for (std::size_t i = 0; i < view.layers.size(); ++i) {
    const MatX& w = model.weights[static_cast<std::size_t>(view.layers[i])];
    Index off = view.offsets[i];
    for (Index r = 0; r < w.rows(); ++r)
      for (Index c = 0; c < w.cols(); ++c) flat[off + r * w.cols() + c] = w(r, c);
  }
  return flat;
}

void scatter_add_view(Grads& grads, const EmbedView& view, const VecX& flat, double scale) {
  for (std::size_t i = 0; i < view.layers.size(); ++i) {
    MatX& g = grads.w[static_cast<std::size_t>(view.layers[i])];
    Index off = view.offsets[i];
    for (Index r = 0; r < g.rows(); ++r)
      for (Index c = 0; c < g.cols(); ++c) g(r, c) += scale * flat[off + r * g.cols() + c];
  }
}

EmbedReadout read_watermark(const Mlp& model, const WatermarkTuple& tuple,
                            const TrainConfig& config) {
  EmbedView view = make_embed_view(model, config.embed_layer);
  ParamSlice slice = ParamSlice::from_vector(gather_view(model, view));
  auto [filtered, trace] = filter_rounds(slice, tuple.watermark, config.filter_rounds);
  EmbedReadout out;
  out.trace = std::move(trace);
  auto [pooled, spec] = pool(filtered, config.key_rows, config.use_pooling);
  out.spec = spec;
  out.pooled = std::move(pooled);
  out.extracted = extract(out.pooled, tuple.key);
  return out;
}

double watermark_grad_term(const Mlp& model, const WatermarkTuple& tuple,
                           const TrainConfig& config, Grads& grads) {
  EmbedView view = make_embed_view(model, config.embed_layer);
  EmbedReadout readout = read_watermark(model, tuple, config);
  double le = embed_loss(readout.extracted, tuple.watermark);
  Index n = tuple.watermark.size();
  // dL_e/dz_i = (p_i - b_i)/n; pull back through the key, the pooling window,
  // and the filter trace.
  VecX dz(n);
  for (Index i = 0; i < n; ++i)
    dz[i] = (readout.extracted.probabilities[i] -
             static_cast<double>(tuple.watermark.bits[static_cast<std::size_t>(i)])) /
            static_cast<double>(n);
  VecX d_pooled = tuple.key.values * dz;
  VecX d_flat = route_gradient(d_pooled, readout.spec, readout.trace);
  if (d_flat.size() < view.total_len) d_flat.conservativeResizeLike(VecX::Zero(view.total_len));
  scatter_add_view(grads, view, d_flat, config.lambda);
  return le;
}

Grads joint_grad(const Mlp& model, const Batch& batch, const WatermarkTuple& tuple,
                 const TrainConfig& config, double* loss_main, double* loss_embed) {
  ForwardCache cache;
  double lm = forward_loss(model, batch, cache);
  Grads grads = backward(model, cache);
  if (loss_main) *loss_main = lm;
  double le = 0.0;
  if (config.lambda > 0) le = watermark_grad_term(model, tuple, config, grads);
  if (loss_embed) *loss_embed = le;
  return grads;
}

TrainResult run_training(const Dataset& train, const Dataset& test, const TrainConfig& config,
                         Scheme scheme, const TrainHooks& hooks,
                         const std::string& config_digest) {
  config.validate();
  if (train.size() == 0 || test.size() == 0)
    throw ValidationError("run_training: empty dataset");

  Rng rng(config.seed);
  Mlp model;
  if (hooks.start) {
    model = *hooks.start;
  } else {
    std::vector<Index> sizes;
    sizes.push_back(train.dims());
    sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
    sizes.push_back(static_cast<Index>(train.classes));
    model = Mlp::init(sizes, rng);
  }
  SgdState sgd = SgdState::zeros_like(model);

  std::vector<Index> order(static_cast<std::size_t>(train.size()));
  std::iota(order.begin(), order.end(), Index{0});

  TrainResult result;
  result.curves.reserve(static_cast<std::size_t>(config.epochs));
  for (Index epoch = 0; epoch < config.epochs; ++epoch) {
    double lr = config.lr_at_epoch(epoch);
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      std::vector<Index> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(stop));
      Batch batch = Batch::from_dataset(train, idx);
      ForwardCache cache;
      double lm = forward_loss(model, batch, cache);
      if (!std::isfinite(lm))
        throw NumericError("training diverged at epoch " + std::to_string(epoch));
      Grads grads = backward(model, cache);
      if (hooks.watermark_grad) hooks.watermark_grad(model, grads);
      if (hooks.grad_mask) hooks.grad_mask(grads);
      sgd_step(model, grads, sgd, lr, config.momentum, config.weight_decay);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_acc = accuracy(model, train);
    stats.test_acc = accuracy(model, test);
    Batch full = Batch::from_dataset(train);
    ForwardCache cache;
    stats.loss_main = forward_loss(model, full, cache);
    if (hooks.watermark_grad) {
      Grads scratch = Grads::zeros_like(model);
      stats.loss_embed = hooks.watermark_grad(model, scratch);
    }
    if (hooks.rho) stats.rho = hooks.rho(model);
    if (!std::isfinite(stats.loss_main) || !std::isfinite(stats.loss_embed))
      throw NumericError("training diverged at epoch " + std::to_string(epoch));
    result.curves.push_back(stats);
  }

  result.checkpoint.model = std::move(model);
  result.checkpoint.scheme = scheme;
  result.checkpoint.config_digest = config_digest;
  return result;
}

std::string train_config_digest(const TrainConfig& config, Scheme scheme) {
  std::ostringstream os;
  os.precision(17);
  os << to_string(scheme);
  for (Index h : config.hidden) os << '|' << h;
  os << '|' << config.lambda << '|' << config.learning_rate << '|' << config.momentum << '|'
     << config.weight_decay << '|' << config.epochs << '|' << config.batch_size << '|'
     << config.seed << '|' << config.filter_rounds << '|' << config.embed_layer << '|'
     << config.watermark_len << '|' << config.key_rows << '|' << config.use_pooling;
  std::string text = os.str();
  return hex_string(Shake256::digest(Bytes(text.begin(), text.end()), 8));
}

TrainResult train_watermarked(const Dataset& train, const Dataset& test,
                              const WatermarkTuple& tuple, const TrainConfig& config,
                              const std::string& config_digest) {
  if (tuple.watermark.size() != config.watermark_len)
    throw ValidationError("train_watermarked: watermark length does not match config");
  if (tuple.key.rows() != config.key_rows)
    throw ValidationError("train_watermarked: key rows do not match config");

  TrainHooks hooks;
  hooks.watermark_grad = [&tuple, &config](const Mlp& model, Grads& grads) {
    return watermark_grad_term(model, tuple, config, grads);
  };
  hooks.rho = [&tuple, &config](const Mlp& model) {
    EmbedReadout readout = read_watermark(model, tuple, config);
    return detection_rate(threshold_bits(readout.extracted), tuple.watermark);
  };
  return run_training(train, test, config, Scheme::neuralmark, hooks,
                      config_digest.empty() ? train_config_digest(config, Scheme::neuralmark)
                                            : config_digest);
}

TrainResult train_clean(const Dataset& train, const Dataset& test, const TrainConfig& config,
                        const std::string& config_digest) {
  TrainConfig clean = config;
  clean.lambda = 0.0;
  return run_training(train, test, clean, Scheme::clean, TrainHooks{},
                      config_digest.empty() ? train_config_digest(clean, Scheme::clean)
                                            : config_digest);
}

std::string curves_csv(const std::vector<EpochStats>& curves) {
  std::ostringstream os;
  os.precision(17);
  os << "epoch,train_acc,test_acc,loss_main,loss_embed,rho\n";
  for (const auto& s : curves) {
    os << s.epoch << ',' << s.train_acc << ',' << s.test_acc << ',' << s.loss_main << ','
       << s.loss_embed << ',' << s.rho << '\n';
  }
  return os.str();
}

}  // namespace nmk
