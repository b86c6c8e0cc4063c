#pragma once

#include "nmk/checkpoint.hpp"
#include "nmk/embedder.hpp"
#include "nmk/vanilla.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace nmk {

// Everything one experiment needs, parsed from a flat key=value config file.
// Unknown keys are rejected; the canonical echo reproduces the run exactly.
struct ExperimentConfig {
  Scheme scheme = Scheme::neuralmark;
  TrainConfig train;
  std::string aux;  // UTF-8, hashed with the key
  // Verification target exponent; unset means -watermark_len/2.
  std::optional<double> boundary_log2;

  Index train_samples = 400;
  Index test_samples = 400;
  int classes = 4;
  Index dims = 2;
  double spread = 0.7;

  Index attack_epochs = 100;
  double attack_eta = 0.005;
  double attack_lambda = 10.0;
  Index forge_trials = 10;
  Index forge_steps = 2000;
  double forge_eta = 100.0;
  std::vector<double> prune_ratios = {0.2, 0.4, 0.6, 0.8};
  std::vector<double> overwrite_lambdas = {1.0, 10.0, 100.0};

  void validate() const;

  // Sorted key=value lines; parsing them back yields an equal config.
  std::string canonical_text() const;
  std::string digest() const;

  Bytes aux_bytes() const { return Bytes(aux.begin(), aux.end()); }
  double effective_log2_target() const;

  // Deterministic per-purpose RNG streams under the master seed.
  Dataset make_train() const;
  Dataset make_test() const;
  // A fresh transfer task: new sample noise and permuted class identities.
  Dataset make_transfer_train() const;
  Dataset make_transfer_test() const;
  WatermarkTuple owner_tuple() const;
  VanillaTuple owner_vanilla_tuple() const;
  WatermarkTuple adversary_tuple(std::uint64_t stream) const;
  VanillaTuple adversary_vanilla_tuple(std::uint64_t stream) const;
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace nmk
