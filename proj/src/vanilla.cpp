#include "nmk/vanilla.hpp"

#include "nmk/verifier.hpp"

#include <numeric>

namespace nmk {
namespace {

// A single-round identity "trace" over the flat view lets route_gradient
// handle the no-filter backward pass.
FilterTrace identity_trace(Index len) {
  FilterTrace trace;
  trace.source_len = len;
  trace.initial.resize(static_cast<std::size_t>(len));
  std::iota(trace.initial.begin(), trace.initial.end(), Index{0});
  trace.rounds.push_back(trace.initial);
  return trace;
}

}  // namespace

VanillaTuple make_vanilla_tuple(SecretKey key, Watermark watermark) {
  if (watermark.size() != key.cols())
    throw ValidationError("make_vanilla_tuple: watermark length must match key columns");
  return VanillaTuple{std::move(key), std::move(watermark)};
}

std::pair<VecX, PoolSpec> vanilla_select(const Mlp& model, Index embed_layer, Index k) {
  EmbedView view = make_embed_view(model, embed_layer);
  ParamSlice slice = ParamSlice::from_vector(gather_view(model, view));
  return avg_pool(slice, k);
}

double vanilla_grad_term(const Mlp& model, const VanillaTuple& tuple, const TrainConfig& config,
                         Grads& grads) {
  EmbedView view = make_embed_view(model, config.embed_layer);
  auto [pooled, spec] = vanilla_select(model, config.embed_layer, config.key_rows);
  ExtractedWatermark extracted = extract(pooled, tuple.key);
  double le = embed_loss(extracted, tuple.watermark);
  Index n = tuple.watermark.size();
  VecX dz(n);
  for (Index i = 0; i < n; ++i)
    dz[i] = (extracted.probabilities[i] -
             static_cast<double>(tuple.watermark.bits[static_cast<std::size_t>(i)])) /
            static_cast<double>(n);
  VecX d_pooled = tuple.key.values * dz;
  VecX d_flat = route_gradient(d_pooled, spec, identity_trace(view.total_len));
  scatter_add_view(grads, view, d_flat, config.lambda);
  return le;
}

double vanilla_rho(const Mlp& model, const VanillaTuple& tuple, const TrainConfig& config) {
  auto [pooled, spec] = vanilla_select(model, config.embed_layer, config.key_rows);
  ExtractedWatermark extracted = extract(pooled, tuple.key);
  return detection_rate(threshold_bits(extracted), tuple.watermark);
}

TrainResult vanilla_train(const Dataset& train, const Dataset& test, const VanillaTuple& tuple,
                          const TrainConfig& config, const std::string& config_digest) {
  if (tuple.watermark.size() != config.watermark_len)
    throw ValidationError("vanilla_train: watermark length does not match config");
  if (tuple.key.rows() != config.key_rows)
    throw ValidationError("vanilla_train: key rows do not match config");

  TrainHooks hooks;
  if (config.lambda > 0) {
    hooks.watermark_grad = [&tuple, &config](const Mlp& model, Grads& grads) {
      return vanilla_grad_term(model, tuple, config, grads);
    };
  }
  hooks.rho = [&tuple, &config](const Mlp& model) {
    return vanilla_rho(model, tuple, config);
  };
  return run_training(train, test, config, Scheme::vanilla, hooks,
                      config_digest.empty() ? train_config_digest(config, Scheme::vanilla)
                                            : config_digest);
}

}  // namespace nmk
