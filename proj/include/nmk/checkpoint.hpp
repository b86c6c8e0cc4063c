#pragma once

#include "nmk/tinynet.hpp"
#include "nmk/types.hpp"

#include <filesystem>
#include <string>

namespace nmk {

enum class Scheme { clean, neuralmark, vanilla };

std::string to_string(Scheme s);
Scheme scheme_from_string(const std::string& s);

// A trained model plus its provenance: embedding scheme and a fingerprint of
// the config that produced it.
struct ModelCheckpoint {
  Mlp model;
  Scheme scheme = Scheme::clean;
  std::string config_digest;
};

// Binary layout (all integers little-endian u32, all values little-endian
// binary64, weights row-major):
//   "NMK1" | version | tensor_count | tensors (W0, b0, W1, b1, ...) | meta
// Each tensor: rank | dims... | values. Meta: byte length | JSON payload.
// Writing is deterministic: equal checkpoints produce equal bytes.
void save_checkpoint(const std::filesystem::path& path, const ModelCheckpoint& ckpt);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

Bytes checkpoint_bytes(const ModelCheckpoint& ckpt);

}  // namespace nmk
