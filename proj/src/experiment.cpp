#include "nmk/experiment.hpp"

#include "nmk/shake256.hpp"
#include "nmk/verifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace nmk {
namespace {

// Fixed sub-stream ids under the master seed; changing these would silently
// re-randomize every pinned experiment.
enum Stream : std::uint64_t {
  kTrainData = 1,
  kTestData = 2,
  kOwnerKey = 3,
  kVanillaBits = 4,
  kTransferTrain = 5,
  kTransferTest = 6,
  kLabelPermutation = 7,
  kAdversaryBase = 0x100,
};

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double parse_real(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    throw ParseError("config: bad number for " + key + ": '" + value + "'");
  }
  if (used != value.size()) throw ParseError("config: bad number for " + key + ": '" + value + "'");
  return v;
}

long long parse_int(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(value, &used);
  } catch (const std::exception&) {
    throw ParseError("config: bad integer for " + key + ": '" + value + "'");
  }
  if (used != value.size())
    throw ParseError("config: bad integer for " + key + ": '" + value + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true") return true;
  if (value == "false") return false;
  throw ParseError("config: bad boolean for " + key + ": '" + value + "' (true|false)");
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : value) {
    if (c == ',') {
      parts.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!trim(cur).empty() || !parts.empty()) parts.push_back(trim(cur));
  return parts;
}

std::vector<double> parse_real_list(const std::string& key, const std::string& value) {
  std::vector<double> out;
  for (const auto& p : split_list(value)) {
    if (p.empty()) throw ParseError("config: empty element in list " + key);
    out.push_back(parse_real(key, p));
  }
  return out;
}

std::vector<Index> parse_int_list(const std::string& key, const std::string& value) {
  std::vector<Index> out;
  for (const auto& p : split_list(value)) {
    if (p.empty()) throw ParseError("config: empty element in list " + key);
    out.push_back(static_cast<Index>(parse_int(key, p)));
  }
  return out;
}

std::string fmt_real(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

template <typename T>
std::string fmt_list(const std::vector<T>& v) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) os << ',';
    os << v[i];
  }
  return os.str();
}

}  // namespace

void ExperimentConfig::validate() const {
  train.validate();
  if (train_samples < classes || test_samples < classes)
    throw ValidationError("config: need at least one sample per class in each split");
  if (classes < 2) throw ValidationError("config: classes must be >= 2");
  if (dims < 1) throw ValidationError("config: dims must be >= 1");
  if (spread <= 0) throw ValidationError("config: spread must be > 0");
  if (attack_epochs < 0) throw ValidationError("config: attack_epochs must be >= 0");
  if (attack_eta <= 0) throw ValidationError("config: attack_eta must be > 0");
  if (attack_lambda < 0) throw ValidationError("config: attack_lambda must be >= 0");
  if (forge_trials < 1) throw ValidationError("config: forge_trials must be >= 1");
  if (forge_steps < 1) throw ValidationError("config: forge_steps must be >= 1");
  if (forge_eta <= 0) throw ValidationError("config: forge_eta must be > 0");
  for (double r : prune_ratios)
    if (r < 0 || r > 1) throw ValidationError("config: prune_ratios entries must be in [0,1]");
  for (double l : overwrite_lambdas)
    if (l < 0) throw ValidationError("config: overwrite_lambdas entries must be >= 0");
  if (boundary_log2 && *boundary_log2 >= 0)
    throw ValidationError("config: boundary_log2 must be negative");
}

std::string ExperimentConfig::canonical_text() const {
  std::ostringstream os;
  os << "attack_epochs = " << attack_epochs << '\n'
     << "attack_eta = " << fmt_real(attack_eta) << '\n'
     << "attack_lambda = " << fmt_real(attack_lambda) << '\n'
     << "aux = " << aux << '\n'
     << "batch_size = " << train.batch_size << '\n'
     << "boundary_log2 = " << (boundary_log2 ? fmt_real(*boundary_log2) : "auto") << '\n'
     << "classes = " << classes << '\n'
     << "dims = " << dims << '\n'
     << "embed_layer = " << train.embed_layer << '\n'
     << "epochs = " << train.epochs << '\n'
     << "filter_rounds = " << train.filter_rounds << '\n'
     << "forge_eta = " << fmt_real(forge_eta) << '\n'
     << "forge_steps = " << forge_steps << '\n'
     << "forge_trials = " << forge_trials << '\n'
     << "hidden = " << fmt_list(train.hidden) << '\n'
     << "key_rows = " << train.key_rows << '\n'
     << "lambda = " << fmt_real(train.lambda) << '\n'
     << "learning_rate = " << fmt_real(train.learning_rate) << '\n'
     << "lr_gamma = " << fmt_real(train.lr_gamma) << '\n'
     << "lr_milestones = " << fmt_list(train.lr_milestones) << '\n'
     << "momentum = " << fmt_real(train.momentum) << '\n'
     << "overwrite_lambdas = " << fmt_list(overwrite_lambdas) << '\n'
     << "prune_ratios = " << fmt_list(prune_ratios) << '\n'
     << "scheme = " << to_string(scheme) << '\n'
     << "seed = " << train.seed << '\n'
     << "spread = " << fmt_real(spread) << '\n'
     << "test_samples = " << test_samples << '\n'
     << "train_samples = " << train_samples << '\n'
     << "use_pooling = " << (train.use_pooling ? "true" : "false") << '\n'
     << "watermark_len = " << train.watermark_len << '\n'
     << "weight_decay = " << fmt_real(train.weight_decay) << '\n';
  return os.str();
}

std::string ExperimentConfig::digest() const {
  std::string text = canonical_text();
  return hex_string(Shake256::digest(Bytes(text.begin(), text.end()), 8));
}

double ExperimentConfig::effective_log2_target() const {
  return boundary_log2 ? *boundary_log2 : default_log2_target(train.watermark_len);
}

Dataset ExperimentConfig::make_train() const {
  return make_blobs(train_samples, classes, dims, spread, Rng::derive(train.seed, kTrainData),
                    "train");
}

Dataset ExperimentConfig::make_test() const {
  return make_blobs(test_samples, classes, dims, spread, Rng::derive(train.seed, kTestData),
                    "test");
}

namespace {

Dataset relabel(Dataset ds, std::uint64_t perm_seed) {
  // Permute class identities (guaranteed non-identity) so the transfer task
  // has fresh labels over the same input geometry.
  int classes = ds.classes;
  std::vector<int> perm(static_cast<std::size_t>(classes));
  for (int c = 0; c < classes; ++c) perm[static_cast<std::size_t>(c)] = c;
  Rng rng(perm_seed);
  do {
    rng.shuffle(perm);
  } while (std::is_sorted(perm.begin(), perm.end()));
  for (auto& label : ds.labels) label = perm[static_cast<std::size_t>(label)];
  return ds;
}

}  // namespace

Dataset ExperimentConfig::make_transfer_train() const {
  Dataset ds = make_blobs(train_samples, classes, dims, spread,
                          Rng::derive(train.seed, kTransferTrain), "train");
  return relabel(std::move(ds), Rng::derive(train.seed, kLabelPermutation));
}

Dataset ExperimentConfig::make_transfer_test() const {
  Dataset ds = make_blobs(test_samples, classes, dims, spread,
                          Rng::derive(train.seed, kTransferTest), "test");
  return relabel(std::move(ds), Rng::derive(train.seed, kLabelPermutation));
}

WatermarkTuple ExperimentConfig::owner_tuple() const {
  Rng rng(Rng::derive(train.seed, kOwnerKey));
  return make_watermark_tuple(sample_key(train.key_rows, train.watermark_len, rng), aux_bytes());
}

VanillaTuple ExperimentConfig::owner_vanilla_tuple() const {
  Rng key_rng(Rng::derive(train.seed, kOwnerKey));
  SecretKey key = sample_key(train.key_rows, train.watermark_len, key_rng);
  Rng bit_rng(Rng::derive(train.seed, kVanillaBits));
  Watermark wm;
  wm.bits.resize(static_cast<std::size_t>(train.watermark_len));
  for (auto& b : wm.bits) b = static_cast<std::uint8_t>(bit_rng.below(2));
  return make_vanilla_tuple(std::move(key), std::move(wm));
}

WatermarkTuple ExperimentConfig::adversary_tuple(std::uint64_t stream) const {
  Rng rng(Rng::derive(train.seed, kAdversaryBase + stream));
  return make_watermark_tuple(sample_key(train.key_rows, train.watermark_len, rng), aux_bytes());
}

VanillaTuple ExperimentConfig::adversary_vanilla_tuple(std::uint64_t stream) const {
  Rng rng(Rng::derive(train.seed, kAdversaryBase + stream));
  SecretKey key = sample_key(train.key_rows, train.watermark_len, rng);
  Watermark wm;
  wm.bits.resize(static_cast<std::size_t>(train.watermark_len));
  for (auto& b : wm.bits) b = static_cast<std::uint8_t>(rng.below(2));
  return make_vanilla_tuple(std::move(key), std::move(wm));
}

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  Index line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    // Everything after '#' is a comment, so values themselves cannot contain it.
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::string stripped = trim(line);
    if (stripped.empty()) continue;
    std::size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ParseError("config line " + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(stripped.substr(0, eq));
    std::string value = trim(stripped.substr(eq + 1));
    if (key.empty())
      throw ParseError("config line " + std::to_string(line_no) + ": empty key");

    if (key == "scheme") {
      try {
        cfg.scheme = scheme_from_string(value);
      } catch (const ValidationError& e) {
        throw ParseError("config line " + std::to_string(line_no) + ": " + e.what());
      }
    } else if (key == "seed") {
      cfg.train.seed = static_cast<std::uint64_t>(parse_int(key, value));
    } else if (key == "hidden") {
      cfg.train.hidden = parse_int_list(key, value);
    } else if (key == "epochs") {
      cfg.train.epochs = static_cast<Index>(parse_int(key, value));
    } else if (key == "batch_size") {
      cfg.train.batch_size = static_cast<Index>(parse_int(key, value));
    } else if (key == "learning_rate") {
      cfg.train.learning_rate = parse_real(key, value);
    } else if (key == "momentum") {
      cfg.train.momentum = parse_real(key, value);
    } else if (key == "weight_decay") {
      cfg.train.weight_decay = parse_real(key, value);
    } else if (key == "lambda") {
      cfg.train.lambda = parse_real(key, value);
    } else if (key == "lr_milestones") {
      cfg.train.lr_milestones = parse_int_list(key, value);
    } else if (key == "lr_gamma") {
      cfg.train.lr_gamma = parse_real(key, value);
    } else if (key == "watermark_len") {
      cfg.train.watermark_len = static_cast<Index>(parse_int(key, value));
    } else if (key == "key_rows") {
      cfg.train.key_rows = static_cast<Index>(parse_int(key, value));
    } else if (key == "filter_rounds") {
      cfg.train.filter_rounds = static_cast<Index>(parse_int(key, value));
    } else if (key == "embed_layer") {
      cfg.train.embed_layer = static_cast<Index>(parse_int(key, value));
    } else if (key == "use_pooling") {
      cfg.train.use_pooling = parse_bool(key, value);
    } else if (key == "aux") {
      cfg.aux = value;
    } else if (key == "boundary_log2") {
      if (value == "auto")
        cfg.boundary_log2.reset();
      else
        cfg.boundary_log2 = parse_real(key, value);
    } else if (key == "train_samples") {
      cfg.train_samples = static_cast<Index>(parse_int(key, value));
    } else if (key == "test_samples") {
      cfg.test_samples = static_cast<Index>(parse_int(key, value));
    } else if (key == "classes") {
      cfg.classes = static_cast<int>(parse_int(key, value));
    } else if (key == "dims") {
      cfg.dims = static_cast<Index>(parse_int(key, value));
    } else if (key == "spread") {
      cfg.spread = parse_real(key, value);
    } else if (key == "attack_epochs") {
      cfg.attack_epochs = static_cast<Index>(parse_int(key, value));
    } else if (key == "attack_eta") {
      cfg.attack_eta = parse_real(key, value);
    } else if (key == "attack_lambda") {
      cfg.attack_lambda = parse_real(key, value);
    } else if (key == "forge_trials") {
      cfg.forge_trials = static_cast<Index>(parse_int(key, value));
    } else if (key == "forge_steps") {
      cfg.forge_steps = static_cast<Index>(parse_int(key, value));
    } else if (key == "forge_eta") {
      cfg.forge_eta = parse_real(key, value);
    } else if (key == "prune_ratios") {
      cfg.prune_ratios = parse_real_list(key, value);
    } else if (key == "overwrite_lambdas") {
      cfg.overwrite_lambdas = parse_real_list(key, value);
    } else {
      throw ParseError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  return parse_config_text(read_text_file(path));
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw IoError("failed writing: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open file: " + path.string());
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

}  // namespace nmk
