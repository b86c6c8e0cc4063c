#include "nmk/checkpoint.hpp"

#include <json.hpp>

#include <bit>
#include <fstream>

namespace nmk {
namespace {

constexpr char kMagic[4] = {'N', 'M', 'K', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(Bytes& out, double v) {
  auto u = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
}

struct ByteReader {
  const Bytes& data;
  std::size_t pos = 0;

  void need(std::size_t count, const char* what) const {
    if (pos + count > data.size())
      throw IoError(std::string("checkpoint truncated while reading ") + what);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data[pos + static_cast<std::size_t>(i)]) << (8 * i);
    pos += 4;
    return v;
  }
  double f64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data[pos + static_cast<std::size_t>(i)]) << (8 * i);
    pos += 8;
    return std::bit_cast<double>(v);
  }
};

}  // namespace

std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::clean: return "clean";
    case Scheme::neuralmark: return "neuralmark";
    case Scheme::vanilla: return "vanilla";
  }
  throw ValidationError("unknown scheme value");
}

Scheme scheme_from_string(const std::string& s) {
  if (s == "clean") return Scheme::clean;
  if (s == "neuralmark") return Scheme::neuralmark;
  if (s == "vanilla") return Scheme::vanilla;
  throw ValidationError("unknown scheme: " + s + " (expected clean|neuralmark|vanilla)");
}

Bytes checkpoint_bytes(const ModelCheckpoint& ckpt) {
  const Mlp& m = ckpt.model;
  if (m.weights.empty()) throw ValidationError("checkpoint: model has no layers");
  if (!m.all_finite()) throw ValidationError("checkpoint: non-finite parameters");
  Bytes out;
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(2 * m.weights.size()));
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    const MatX& w = m.weights[l];
    put_u32(out, 2);
    put_u32(out, static_cast<std::uint32_t>(w.rows()));
    put_u32(out, static_cast<std::uint32_t>(w.cols()));
    for (Index r = 0; r < w.rows(); ++r)
      for (Index c = 0; c < w.cols(); ++c) put_f64(out, w(r, c));
    const VecX& b = m.biases[l];
    put_u32(out, 1);
    put_u32(out, static_cast<std::uint32_t>(b.size()));
    for (Index i = 0; i < b.size(); ++i) put_f64(out, b[i]);
  }
  nlohmann::json meta;
  meta["scheme"] = to_string(ckpt.scheme);
  meta["config_digest"] = ckpt.config_digest;
  std::string meta_str = meta.dump();
  put_u32(out, static_cast<std::uint32_t>(meta_str.size()));
  out.insert(out.end(), meta_str.begin(), meta_str.end());
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const ModelCheckpoint& ckpt) {
  Bytes data = checkpoint_bytes(ckpt);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open checkpoint for writing: " + path.string());
  f.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!f) throw IoError("failed writing checkpoint: " + path.string());
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path.string());
  Bytes data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  ByteReader r{data};

  r.need(4, "magic");
  if (!std::equal(kMagic, kMagic + 4, data.begin()))
    throw IoError("not a checkpoint file (bad magic): " + path.string());
  r.pos = 4;
  std::uint32_t version = r.u32("version");
  if (version != kVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  std::uint32_t tensors = r.u32("tensor count");
  if (tensors == 0 || tensors % 2 != 0)
    throw IoError("checkpoint must hold weight/bias tensor pairs");

  ModelCheckpoint ckpt;
  for (std::uint32_t t = 0; t < tensors; ++t) {
    std::uint32_t rank = r.u32("tensor rank");
    bool expect_weight = t % 2 == 0;
    if (expect_weight && rank != 2)
      throw IoError("expected rank-2 weight tensor at position " + std::to_string(t));
    if (!expect_weight && rank != 1)
      throw IoError("expected rank-1 bias tensor at position " + std::to_string(t));
    if (rank == 2) {
      std::uint32_t rows = r.u32("rows");
      std::uint32_t cols = r.u32("cols");
      if (rows == 0 || cols == 0) throw IoError("zero-sized weight tensor");
      MatX w(rows, cols);
      for (std::uint32_t i = 0; i < rows; ++i)
        for (std::uint32_t j = 0; j < cols; ++j) w(i, j) = r.f64("weight values");
      ckpt.model.weights.push_back(std::move(w));
    } else {
      std::uint32_t len = r.u32("length");
      if (len == 0) throw IoError("zero-sized bias tensor");
      VecX b(len);
      for (std::uint32_t i = 0; i < len; ++i) b[i] = r.f64("bias values");
      if (b.size() != ckpt.model.weights.back().rows())
        throw IoError("bias length does not match weight rows at tensor " + std::to_string(t));
      ckpt.model.biases.push_back(std::move(b));
    }
  }
  // Consecutive layer shapes must chain.
  for (std::size_t l = 1; l < ckpt.model.weights.size(); ++l)
    if (ckpt.model.weights[l].cols() != ckpt.model.weights[l - 1].rows())
      throw IoError("layer shapes do not chain at layer " + std::to_string(l));

  std::uint32_t meta_len = r.u32("metadata length");
  r.need(meta_len, "metadata");
  std::string meta_str(data.begin() + static_cast<std::ptrdiff_t>(r.pos),
                       data.begin() + static_cast<std::ptrdiff_t>(r.pos + meta_len));
  r.pos += meta_len;
  if (r.pos != data.size())
    throw IoError("trailing bytes after checkpoint payload: " + path.string());
  nlohmann::json meta = nlohmann::json::parse(meta_str, nullptr, false);
  if (meta.is_discarded() || !meta.contains("scheme") || !meta.contains("config_digest"))
    throw IoError("malformed checkpoint metadata: " + path.string());
  ckpt.scheme = scheme_from_string(meta["scheme"].get<std::string>());
  ckpt.config_digest = meta["config_digest"].get<std::string>();
  return ckpt;
}

}  // namespace nmk
