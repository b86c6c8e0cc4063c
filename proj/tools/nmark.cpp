// nmark: train, verify, attack, and analyze watermark-carrying MLP
// checkpoints. Exit codes: 0 success/verdict-true, 1 verdict-false, 2 usage,
// 3 I/O or parse failure, 4 numerical failure.

#include <CLI11.hpp>
#include <json.hpp>

#include "nmk/attacks.hpp"
#include "nmk/experiment.hpp"
#include "nmk/verifier.hpp"

#include <filesystem>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir = "out";
  std::int64_t seed_override = -1;
};

nmk::ExperimentConfig resolve_config(const CommonArgs& args) {
  nmk::ExperimentConfig cfg;
  if (!args.config_path.empty()) cfg = nmk::load_config(args.config_path);
  if (args.seed_override >= 0) cfg.train.seed = static_cast<std::uint64_t>(args.seed_override);
  cfg.validate();
  return cfg;
}

json report_to_json(const nmk::DetectionReport& report) { return json::parse(report.to_json()); }

json attack_report_to_json(const nmk::AttackReport& report) {
  return json::parse(report.to_json());
}

// Owner evidence as stored on disk: raw key bytes (with aux as the remainder)
// plus the ASCII watermark file.
nmk::WatermarkTuple load_tuple(const std::string& key_path, const std::string& watermark_path,
                               const nmk::ExperimentConfig& cfg) {
  auto [key, aux] = nmk::load_key(key_path, cfg.train.key_rows, cfg.train.watermark_len);
  nmk::Watermark wm = nmk::load_watermark(watermark_path);
  if (wm.size() != cfg.train.watermark_len)
    throw nmk::IoError("watermark file length " + std::to_string(wm.size()) +
                       " does not match config watermark_len " +
                       std::to_string(cfg.train.watermark_len));
  nmk::WatermarkTuple tuple;
  tuple.key = std::move(key);
  tuple.watermark = std::move(wm);
  tuple.aux = std::move(aux);
  return tuple;
}

int cmd_train(const CommonArgs& args) {
  nmk::ExperimentConfig cfg = resolve_config(args);
  fs::create_directories(args.out_dir);
  fs::path out(args.out_dir);

  nmk::Dataset train = cfg.make_train();
  nmk::Dataset test = cfg.make_test();

  nmk::TrainResult result;
  json report;
  report["config_text"] = cfg.canonical_text();
  report["config_digest"] = cfg.digest();
  report["scheme"] = nmk::to_string(cfg.scheme);

  if (cfg.scheme == nmk::Scheme::neuralmark) {
    nmk::WatermarkTuple tuple = cfg.owner_tuple();
    result = nmk::train_watermarked(train, test, tuple, cfg.train, cfg.digest());
    nmk::save_key(out / "key.bin", tuple.key, tuple.aux);
    nmk::save_watermark(out / "watermark.txt", tuple.watermark);
    nmk::DetectionReport verdict =
        nmk::verify(result.checkpoint, tuple, cfg.train, cfg.effective_log2_target());
    report["verification"] = report_to_json(verdict);
  } else if (cfg.scheme == nmk::Scheme::vanilla) {
    nmk::VanillaTuple tuple = cfg.owner_vanilla_tuple();
    result = nmk::vanilla_train(train, test, tuple, cfg.train, cfg.digest());
    nmk::save_key(out / "key.bin", tuple.key, {});
    nmk::save_watermark(out / "watermark.txt", tuple.watermark);
    nmk::WatermarkTuple as_tuple;
    as_tuple.key = tuple.key;
    as_tuple.watermark = tuple.watermark;
    nmk::DetectionReport verdict =
        nmk::verify(result.checkpoint, as_tuple, cfg.train, cfg.effective_log2_target());
    report["verification"] = report_to_json(verdict);
  } else {
    result = nmk::train_clean(train, test, cfg.train, cfg.digest());
  }

  nmk::save_checkpoint(out / "checkpoint.nmk", result.checkpoint);
  nmk::write_text_file(out / "curves.csv", nmk::curves_csv(result.curves));

  if (!result.curves.empty()) {
    const auto& last = result.curves.back();
    report["final"]["train_acc"] = last.train_acc;
    report["final"]["test_acc"] = last.test_acc;
    report["final"]["loss_main"] = last.loss_main;
    report["final"]["loss_embed"] = last.loss_embed;
    report["final"]["rho"] = last.rho;
  }
  nmk::write_text_file(out / "report.json", report.dump(2) + "\n");

  std::cout << "trained scheme=" << nmk::to_string(cfg.scheme) << " checkpoint="
            << (out / "checkpoint.nmk").string();
  if (report.contains("verification"))
    std::cout << " rho=" << report["verification"]["rho"] << " verdict="
              << report["verification"]["verdict"];
  std::cout << '\n';
  return 0;
}

int cmd_verify(const CommonArgs& args, const std::string& checkpoint_path,
               const std::string& key_path, const std::string& watermark_path) {
  nmk::ExperimentConfig cfg = resolve_config(args);
  nmk::ModelCheckpoint ckpt = nmk::load_checkpoint(checkpoint_path);
  nmk::WatermarkTuple tuple = load_tuple(key_path, watermark_path, cfg);
  nmk::DetectionReport report =
      nmk::verify(ckpt, tuple, cfg.train, cfg.effective_log2_target());
  std::cout << report.to_json() << '\n';
  return report.verdict ? 0 : 1;
}

int cmd_boundary(nmk::Index n, const std::string& target_str, const std::string& rho_str) {
  if ((target_str.empty()) == (rho_str.empty()))
    throw nmk::ValidationError("boundary: pass exactly one of --target or --rho");
  json out;
  out["n"] = n;
  if (!rho_str.empty()) {
    nmk::Index t = nmk::ceil_fraction_times(rho_str, n);
    nmk::SecurityBoundary b = nmk::forgery_bound_at(n, t);
    out["rho"] = rho_str;
    out["min_matches"] = b.min_matches;
    out["numerator"] = b.exact_numerator.to_decimal();
    out["denominator_log2"] = b.denominator_log2;
    out["log2_bound"] = b.log2_bound;
    out["bound"] = std::pow(2.0, b.log2_bound);
  } else {
    double target = 0;
    {
      std::istringstream is(target_str);
      if (!(is >> target) || !(is >> std::ws).eof())
        throw nmk::ValidationError("boundary: bad --target value '" + target_str + "'");
    }
    nmk::ThresholdResult scan = nmk::security_threshold(n, target);
    out["target_log2"] = target;
    out["reachable"] = scan.reachable;
    if (scan.reachable) {
      out["min_matches"] = scan.min_matches;
      out["rho_star"] = scan.rho_star;
      out["rho_star_fraction"] =
          std::to_string(scan.min_matches) + "/" + std::to_string(n);
      out["numerator"] = scan.boundary.exact_numerator.to_decimal();
      out["log2_bound"] = scan.boundary.log2_bound;
      // Exact certification of minimality: the sum meets the target at t and
      // misses it at t-1.
      out["certified_at_t"] = nmk::bound_within(scan.boundary, target);
      if (scan.min_matches > 0) {
        nmk::SecurityBoundary below = nmk::forgery_bound_at(n, scan.min_matches - 1);
        out["certified_above_at_t_minus_1"] = !nmk::bound_within(below, target);
        out["log2_bound_at_t_minus_1"] = below.log2_bound;
      }
    }
  }
  std::cout << out.dump(2) << '\n';
  return 0;
}

int cmd_attack_forge(const CommonArgs& args, const std::string& checkpoint_path, bool learn,
                     std::int64_t trials_override) {
  nmk::ExperimentConfig cfg = resolve_config(args);
  fs::create_directories(args.out_dir);
  fs::path out(args.out_dir);
  nmk::ModelCheckpoint ckpt = nmk::load_checkpoint(checkpoint_path);
  nmk::Dataset test = cfg.make_test();

  if (learn) {
    // Gradient descent on the key with the model frozen, against arbitrary
    // target bits.
    nmk::Rng rng(nmk::Rng::derive(cfg.train.seed, 0xf04e));
    nmk::BitVec target(static_cast<std::size_t>(cfg.train.watermark_len));
    for (auto& b : target) b = static_cast<std::uint8_t>(rng.below(2));
    nmk::ForgeLearnResult learned =
        nmk::forge_learn_key(ckpt, target, cfg.forge_steps, cfg.forge_eta, cfg.train);
    json report;
    report["kind"] = "forge_learn";
    report["scheme"] = nmk::to_string(ckpt.scheme);
    report["rho"] = learned.rho;
    report["steps_used"] = learned.steps_used;
    report["verdict"] = learned.verdict;
    nmk::write_text_file(out / "forge_learn.json", report.dump(2) + "\n");
    std::cout << report.dump() << '\n';
    return 0;
  }

  nmk::Index trials = trials_override > 0 ? static_cast<nmk::Index>(trials_override)
                                          : cfg.forge_trials;
  std::vector<nmk::DetectionReport> reports =
      nmk::forge_random(ckpt, cfg.train, trials, cfg.train.seed);
  nmk::AttackReport summary = nmk::summarize_forge(reports, nmk::accuracy(ckpt.model, test));

  std::ostringstream csv;
  csv.precision(17);
  csv << "trial,rho,verdict\n";
  for (std::size_t i = 0; i < reports.size(); ++i)
    csv << i << ',' << reports[i].rho << ',' << (reports[i].verdict ? 1 : 0) << '\n';
  nmk::write_text_file(out / "forge.csv", csv.str());
  nmk::write_text_file(out / "forge.json", summary.to_json() + "\n");
  std::cout << summary.to_json() << '\n';
  return 0;
}

int cmd_attack_overwrite(const CommonArgs& args, const std::string& checkpoint_path,
                         const std::string& key_path, const std::string& watermark_path,
                         const std::string& lambdas_csv, double eta_override,
                         std::int64_t epochs_override) {
  nmk::ExperimentConfig cfg = resolve_config(args);
  fs::create_directories(args.out_dir);
  fs::path out(args.out_dir);
  nmk::ModelCheckpoint ckpt = nmk::load_checkpoint(checkpoint_path);
  nmk::Dataset train = cfg.make_train();
  nmk::Dataset test = cfg.make_test();

  std::vector<double> lambdas = cfg.overwrite_lambdas;
  if (!lambdas_csv.empty()) {
    lambdas.clear();
    std::istringstream is(lambdas_csv);
    std::string part;
    while (std::getline(is, part, ','))
      lambdas.push_back(std::stod(part));
  }

  nmk::OverwriteParams params;
  params.eta_a = eta_override > 0 ? eta_override : cfg.attack_eta;
  params.epochs = epochs_override >= 0 ? static_cast<nmk::Index>(epochs_override)
                                       : cfg.attack_epochs;
  params.seed = nmk::Rng::derive(cfg.train.seed, 0x0ff);

  json all = json::array();
  std::ostringstream csv;
  csv.precision(17);
  csv << "lambda,owner_rho_before,owner_rho_after,adversary_rho,accuracy_before,accuracy_after,"
         "success\n";
  for (std::size_t cell = 0; cell < lambdas.size(); ++cell) {
    params.lambda_a = lambdas[cell];
    std::pair<nmk::ModelCheckpoint, nmk::AttackReport> outcome;
    if (ckpt.scheme == nmk::Scheme::vanilla) {
      auto [key, aux] = nmk::load_key(key_path, cfg.train.key_rows, cfg.train.watermark_len);
      nmk::VanillaTuple owner =
          nmk::make_vanilla_tuple(std::move(key), nmk::load_watermark(watermark_path));
      outcome = nmk::overwrite(ckpt, train, test, owner, cfg.adversary_vanilla_tuple(cell),
                               cfg.train, params);
    } else {
      nmk::WatermarkTuple owner = load_tuple(key_path, watermark_path, cfg);
      outcome =
          nmk::overwrite(ckpt, train, test, owner, cfg.adversary_tuple(cell), cfg.train, params);
    }
    const nmk::AttackReport& rep = outcome.second;
    std::ostringstream name;
    name << "overwrite_lambda_" << lambdas[cell] << ".nmk";
    nmk::save_checkpoint(out / name.str(), outcome.first);
    all.push_back(attack_report_to_json(rep));
    csv << lambdas[cell] << ',' << rep.params.at("owner_rho_before") << ',' << rep.original_rho
        << ',' << rep.adversary_rho << ',' << rep.accuracy_before << ',' << rep.accuracy_after
        << ',' << (rep.success ? 1 : 0) << '\n';
  }
  nmk::write_text_file(out / "overwrite.csv", csv.str());
  nmk::write_text_file(out / "overwrite.json", all.dump(2) + "\n");
  std::cout << all.dump() << '\n';
  return 0;
}

int cmd_attack_finetune(const CommonArgs& args, const std::string& checkpoint_path,
                        const std::string& key_path, const std::string& watermark_path,
                        const std::string& scope_str, double eta_override,
                        std::int64_t epochs_override) {
  nmk::ExperimentConfig cfg = resolve_config(args);
  fs::create_directories(args.out_dir);
  fs::path out(args.out_dir);
  nmk::ModelCheckpoint ckpt = nmk::load_checkpoint(checkpoint_path);
  nmk::WatermarkTuple owner = load_tuple(key_path, watermark_path, cfg);
  nmk::Dataset new_train = cfg.make_transfer_train();
  nmk::Dataset new_test = cfg.make_transfer_test();

  double eta = eta_override > 0 ? eta_override : cfg.attack_eta;
  nmk::Index epochs =
      epochs_override >= 0 ? static_cast<nmk::Index>(epochs_override) : cfg.attack_epochs;
  auto [mutated, report] =
      nmk::finetune(ckpt, new_train, new_test, owner, nmk::finetune_scope_from_string(scope_str),
                    eta, epochs, nmk::Rng::derive(cfg.train.seed, 0xf1e), cfg.train);
  nmk::save_checkpoint(out / "finetuned.nmk", mutated);
  nmk::write_text_file(out / "finetune.json", report.to_json() + "\n");
  std::cout << report.to_json() << '\n';
  return 0;
}

int cmd_attack_prune(const CommonArgs& args, const std::string& checkpoint_path,
                     const std::string& key_path, const std::string& watermark_path,
                     const std::string& ratios_csv, std::int64_t layer_override) {
  nmk::ExperimentConfig cfg = resolve_config(args);
  fs::create_directories(args.out_dir);
  fs::path out(args.out_dir);
  nmk::ModelCheckpoint ckpt = nmk::load_checkpoint(checkpoint_path);
  nmk::WatermarkTuple owner = load_tuple(key_path, watermark_path, cfg);
  nmk::Dataset test = cfg.make_test();

  std::vector<double> ratios = cfg.prune_ratios;
  if (!ratios_csv.empty()) {
    ratios.clear();
    std::istringstream is(ratios_csv);
    std::string part;
    while (std::getline(is, part, ','))
      ratios.push_back(std::stod(part));
  }
  nmk::Index layer = layer_override >= -1 ? static_cast<nmk::Index>(layer_override)
                                          : cfg.train.embed_layer;

  json all = json::array();
  std::ostringstream csv;
  csv.precision(17);
  csv << "ratio,rho,accuracy,success\n";
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    auto [mutated, report] =
        nmk::prune(ckpt, ratios[i], layer, nmk::Rng::derive(cfg.train.seed, 0x94 + i), owner,
                   test, cfg.train);
    std::ostringstream name;
    name << "pruned_" << ratios[i] << ".nmk";
    nmk::save_checkpoint(out / name.str(), mutated);
    all.push_back(attack_report_to_json(report));
    csv << ratios[i] << ',' << report.original_rho << ',' << report.accuracy_after << ','
        << (report.success ? 1 : 0) << '\n';
  }
  nmk::write_text_file(out / "prune.csv", csv.str());
  nmk::write_text_file(out / "prune.json", all.dump(2) + "\n");
  std::cout << all.dump() << '\n';
  return 0;
}

int cmd_analyze(const CommonArgs& args, const std::vector<std::string>& checkpoint_paths,
                const std::string& watermark_path, nmk::Index counterfeits,
                nmk::Index max_rounds) {
  nmk::ExperimentConfig cfg = resolve_config(args);
  fs::create_directories(args.out_dir);
  fs::path out(args.out_dir);

  constexpr nmk::Index kBins = 101;
  json summary;
  std::vector<nmk::ModelCheckpoint> ckpts;
  // Per-layer histograms over each layer's observed range.
  std::vector<std::vector<std::vector<nmk::Index>>> histograms;
  std::vector<std::vector<std::pair<double, double>>> ranges;
  for (const auto& path : checkpoint_paths) {
    nmk::ModelCheckpoint ckpt = nmk::load_checkpoint(path);
    std::ostringstream csv;
    csv.precision(17);
    csv << "layer,bin,lo,hi,count\n";
    std::vector<std::vector<nmk::Index>> layer_hists;
    std::vector<std::pair<double, double>> layer_ranges;
    for (nmk::Index l = 0; l < ckpt.model.layer_count(); ++l) {
      const nmk::MatX& w = ckpt.model.weights[static_cast<std::size_t>(l)];
      double lo = w.minCoeff(), hi = w.maxCoeff();
      std::vector<nmk::Index> hist(static_cast<std::size_t>(kBins), 0);
      double width = (hi - lo) / static_cast<double>(kBins);
      for (nmk::Index r = 0; r < w.rows(); ++r) {
        for (nmk::Index c = 0; c < w.cols(); ++c) {
          nmk::Index bin = width > 0
                               ? std::min<nmk::Index>(kBins - 1,
                                                      static_cast<nmk::Index>((w(r, c) - lo) / width))
                               : 0;
          ++hist[static_cast<std::size_t>(bin)];
        }
      }
      for (nmk::Index b = 0; b < kBins; ++b)
        csv << l << ',' << b << ',' << lo + width * static_cast<double>(b) << ','
            << lo + width * static_cast<double>(b + 1) << ','
            << hist[static_cast<std::size_t>(b)] << '\n';
      layer_hists.push_back(std::move(hist));
      layer_ranges.emplace_back(lo, hi);
    }
    std::string stem = fs::path(path).stem().string();
    nmk::write_text_file(out / ("hist_" + stem + ".csv"), csv.str());
    histograms.push_back(std::move(layer_hists));
    ranges.push_back(std::move(layer_ranges));
    ckpts.push_back(std::move(ckpt));
  }
  summary["checkpoints"] = checkpoint_paths;

  if (ckpts.size() >= 2) {
    // L1 distance between normalized histograms, first checkpoint vs each
    // other, averaged over layers. Near-zero means the weight distributions
    // are indistinguishable at this bin resolution.
    json distances = json::array();
    for (std::size_t other = 1; other < ckpts.size(); ++other) {
      double total = 0.0;
      nmk::Index layers = std::min(ckpts[0].model.layer_count(),
                                   ckpts[other].model.layer_count());
      for (nmk::Index l = 0; l < layers; ++l) {
        const auto& ha = histograms[0][static_cast<std::size_t>(l)];
        const auto& hb = histograms[other][static_cast<std::size_t>(l)];
        double na = static_cast<double>(ckpts[0].model.weights[static_cast<std::size_t>(l)].size());
        double nb =
            static_cast<double>(ckpts[other].model.weights[static_cast<std::size_t>(l)].size());
        double l1 = 0.0;
        for (nmk::Index b = 0; b < kBins; ++b)
          l1 += std::abs(static_cast<double>(ha[static_cast<std::size_t>(b)]) / na -
                         static_cast<double>(hb[static_cast<std::size_t>(b)]) / nb);
        total += l1;
      }
      distances.push_back(total / static_cast<double>(layers));
    }
    summary["hist_l1_mean_vs_first"] = distances;
  }

  if (!watermark_path.empty()) {
    nmk::Watermark owner_wm = nmk::load_watermark(watermark_path);
    nmk::EmbedView view = nmk::make_embed_view(ckpts.at(0).model, cfg.train.embed_layer);
    nmk::VecX flat = nmk::gather_view(ckpts.at(0).model, view);
    std::ostringstream csv;
    csv.precision(17);
    csv << "rounds,mean_overlap,min_overlap,max_overlap\n";
    json curve = json::array();
    for (nmk::Index rounds = 1; rounds <= max_rounds; ++rounds) {
      nmk::FilterTrace owner_trace;
      try {
        owner_trace =
            nmk::filter_rounds(nmk::ParamSlice::from_vector(flat), owner_wm, rounds).second;
      } catch (const nmk::ValidationError&) {
        break;  // layer too small for this many rounds
      }
      double sum = 0.0, lo = 1.0, hi = 0.0;
      nmk::Index done = 0;
      for (nmk::Index c = 0; c < counterfeits; ++c) {
        nmk::Rng rng(nmk::Rng::derive(cfg.train.seed, 0xa11 + static_cast<std::uint64_t>(c)));
        nmk::Watermark fake = nmk::generate_watermark(
            nmk::sample_key(cfg.train.key_rows, owner_wm.size(), rng), {}, owner_wm.size());
        nmk::FilterTrace fake_trace;
        try {
          fake_trace =
              nmk::filter_rounds(nmk::ParamSlice::from_vector(flat), fake, rounds).second;
        } catch (const nmk::ValidationError&) {
          continue;
        }
        double ratio = nmk::overlap_ratio(owner_trace, fake_trace, rounds).ratio;
        sum += ratio;
        lo = std::min(lo, ratio);
        hi = std::max(hi, ratio);
        ++done;
      }
      if (done == 0) break;
      double mean = sum / static_cast<double>(done);
      csv << rounds << ',' << mean << ',' << lo << ',' << hi << '\n';
      curve.push_back({{"rounds", rounds}, {"mean", mean}, {"min", lo}, {"max", hi}});
    }
    nmk::write_text_file(out / "overlap.csv", csv.str());
    summary["overlap"] = curve;
  }

  nmk::write_text_file(out / "analyze.json", summary.dump(2) + "\n");
  std::cout << summary.dump() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"watermark embedding, verification, and attack harness"};
  app.require_subcommand(1);

  CommonArgs common;

  auto add_common = [&common](CLI::App* sub, bool with_out) {
    sub->add_option("--config", common.config_path, "config file (key = value lines)");
    sub->add_option("--seed", common.seed_override, "override the config seed");
    if (with_out) sub->add_option("--out", common.out_dir, "output directory");
  };

  auto* train = app.add_subcommand("train", "train a clean/vanilla/neuralmark model");
  add_common(train, true);

  auto* verify = app.add_subcommand("verify", "verify ownership evidence against a checkpoint");
  std::string checkpoint_path, key_path, watermark_path;
  add_common(verify, false);
  verify->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  verify->add_option("--key", key_path, "key file")->required();
  verify->add_option("--watermark", watermark_path, "watermark file")->required();

  auto* attack = app.add_subcommand("attack", "run an attack against a checkpoint");
  attack->require_subcommand(1);
  std::string a_checkpoint, a_key, a_watermark;
  bool forge_learn = false;
  std::int64_t forge_trials = -1;
  auto* forge = attack->add_subcommand("forge", "counterfeit tuples against a frozen model");
  add_common(forge, true);
  forge->add_option("--checkpoint", a_checkpoint, "checkpoint file")->required();
  forge->add_flag("--learn", forge_learn, "learn a key by gradient descent instead");
  forge->add_option("--trials", forge_trials, "number of random counterfeit tuples");

  std::string lambdas_csv, scope_str = "all", ratios_csv;
  double eta_override = -1;
  std::int64_t epochs_override = -1, layer_override = -2;
  auto* overwrite = attack->add_subcommand("overwrite", "embed an adversary watermark on top");
  add_common(overwrite, true);
  overwrite->add_option("--checkpoint", a_checkpoint, "checkpoint file")->required();
  overwrite->add_option("--key", a_key, "owner key file")->required();
  overwrite->add_option("--watermark", a_watermark, "owner watermark file")->required();
  overwrite->add_option("--lambdas", lambdas_csv, "comma-separated adversary lambda grid");
  overwrite->add_option("--eta", eta_override, "adversary learning rate");
  overwrite->add_option("--epochs", epochs_override, "adversary epochs");

  auto* finetune = attack->add_subcommand("finetune", "transfer fine-tuning on a new task");
  add_common(finetune, true);
  finetune->add_option("--checkpoint", a_checkpoint, "checkpoint file")->required();
  finetune->add_option("--key", a_key, "owner key file")->required();
  finetune->add_option("--watermark", a_watermark, "owner watermark file")->required();
  finetune->add_option("--scope", scope_str, "all|watermark_layer");
  finetune->add_option("--eta", eta_override, "fine-tune learning rate");
  finetune->add_option("--epochs", epochs_override, "fine-tune epochs");

  auto* prune = attack->add_subcommand("prune", "zero a fraction of layer parameters");
  add_common(prune, true);
  prune->add_option("--checkpoint", a_checkpoint, "checkpoint file")->required();
  prune->add_option("--key", a_key, "owner key file")->required();
  prune->add_option("--watermark", a_watermark, "owner watermark file")->required();
  prune->add_option("--ratios", ratios_csv, "comma-separated prune ratios");
  prune->add_option("--layer", layer_override, "weight matrix to prune (-1 = all)");

  auto* boundary = app.add_subcommand("boundary", "exact forgery probability bounds");
  std::int64_t boundary_n = 256;
  std::string target_str, rho_str;
  boundary->add_option("--n", boundary_n, "watermark length")->required();
  boundary->add_option("--target", target_str, "log2 of the target bound (scan for rho*)");
  boundary->add_option("--rho", rho_str, "detection rate (exact decimal, evaluate the bound)");

  auto* analyze = app.add_subcommand("analyze", "parameter histograms and overlap curves");
  std::vector<std::string> analyze_paths;
  std::string analyze_watermark;
  std::int64_t counterfeits = 5, max_rounds = 6;
  add_common(analyze, true);
  analyze->add_option("checkpoints", analyze_paths, "checkpoint files")->required();
  analyze->add_option("--watermark", analyze_watermark,
                      "owner watermark file (enables the overlap section)");
  analyze->add_option("--counterfeits", counterfeits, "counterfeit watermarks per round");
  analyze->add_option("--max-rounds", max_rounds, "largest round count in the overlap curve");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << '\n';
    return 2;
  }

  try {
    if (train->parsed()) return cmd_train(common);
    if (verify->parsed()) return cmd_verify(common, checkpoint_path, key_path, watermark_path);
    if (boundary->parsed())
      return cmd_boundary(static_cast<nmk::Index>(boundary_n), target_str, rho_str);
    if (attack->parsed()) {
      if (forge->parsed()) return cmd_attack_forge(common, a_checkpoint, forge_learn, forge_trials);
      if (overwrite->parsed())
        return cmd_attack_overwrite(common, a_checkpoint, a_key, a_watermark, lambdas_csv,
                                    eta_override, epochs_override);
      if (finetune->parsed())
        return cmd_attack_finetune(common, a_checkpoint, a_key, a_watermark, scope_str,
                                   eta_override, epochs_override);
      if (prune->parsed())
        return cmd_attack_prune(common, a_checkpoint, a_key, a_watermark, ratios_csv,
                                layer_override);
    }
    if (analyze->parsed())
      return cmd_analyze(common, analyze_paths, analyze_watermark,
                         static_cast<nmk::Index>(counterfeits),
                         static_cast<nmk::Index>(max_rounds));
    std::cerr << "no subcommand\n";
    return 2;
  } catch (const nmk::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const nmk::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const nmk::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const nmk::NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  }
}
