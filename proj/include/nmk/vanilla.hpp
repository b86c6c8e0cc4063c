#pragma once

#include "nmk/embedder.hpp"

namespace nmk {

// Baseline scheme: the watermark is an arbitrary bit vector with no hash
// relation to the key, and the carrier subset is fixed and publicly
// reconstructible (plain pooling over the flattened layer, no filtering).
struct VanillaTuple {
  SecretKey key;
  Watermark watermark;
};

VanillaTuple make_vanilla_tuple(SecretKey key, Watermark watermark);

// Flatten the embed view, then average-pool to length k. Anyone holding the
// checkpoint computes the same vector — the scheme keeps no selection secret.
std::pair<VecX, PoolSpec> vanilla_select(const Mlp& model, Index embed_layer, Index k);

// Same joint objective as the watermarked trainer, with the baseline's
// selection in place of the hashed filter.
TrainResult vanilla_train(const Dataset& train, const Dataset& test, const VanillaTuple& tuple,
                          const TrainConfig& config, const std::string& config_digest = "");

// L_e gradient through the baseline selection; returns L_e.
double vanilla_grad_term(const Mlp& model, const VanillaTuple& tuple, const TrainConfig& config,
                         Grads& grads);

// Detection read-out for a vanilla checkpoint.
double vanilla_rho(const Mlp& model, const VanillaTuple& tuple, const TrainConfig& config);

}  // namespace nmk
