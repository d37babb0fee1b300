// Command-line front end: train private mechanisms, run the privacy
// accountants, evaluate reconstruction attacks, and sweep parameter grids.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "reconbound/accounting.hpp"
#include "reconbound/attacks.hpp"
#include "reconbound/errors.hpp"
#include "reconbound/io.hpp"
#include <nlohmann/json.hpp>

namespace {

using namespace reconbound;
namespace fs = std::filesystem;
using nlohmann::json;

struct Overrides {
  std::optional<double> sigma, clip, lr, lambda, delta;
  std::optional<int64_t> iters, batch, trials;
  std::optional<uint64_t> seed;
  bool unsafe_reveal = false;
  bool attack_on = false;
  bool attack_off = false;
};

void add_override_flags(CLI::App* cmd, Overrides& ov) {
  cmd->add_option("--sigma", ov.sigma, "Noise scale / noise multiplier override");
  cmd->add_option("--clip", ov.clip, "Clip threshold override (dp_sgd)");
  cmd->add_option("--lr", ov.lr, "Learning rate override (dp_sgd)");
  cmd->add_option("--lambda", ov.lambda, "L2 coefficient override (output perturbation)");
  cmd->add_option("--iters", ov.iters, "Step count override (dp_sgd)");
  cmd->add_option("--batch", ov.batch, "Batch size override (dp_sgd)");
  cmd->add_option("--delta", ov.delta, "Total DP failure budget override");
  cmd->add_option("--trials", ov.trials, "Attack trials override");
  cmd->add_option("--seed", ov.seed, "Root seed override");
  cmd->add_flag("--unsafe-reveal", ov.unsafe_reveal,
                "Include raw sample indices in per-sample risk tables");
}

void apply(RunConfig& cfg, const Overrides& ov) {
  if (ov.seed) {
    cfg.seed = *ov.seed;
    cfg.mechanism.sgd.seed = *ov.seed;
  }
  if (ov.sigma) {
    cfg.mechanism.sigma = *ov.sigma;
    cfg.mechanism.sgd.sigma = *ov.sigma;
  }
  if (ov.clip) cfg.mechanism.sgd.clip = *ov.clip;
  if (ov.lr) cfg.mechanism.sgd.lr = *ov.lr;
  if (ov.lambda) cfg.mechanism.lambda = *ov.lambda;
  if (ov.delta) cfg.mechanism.sgd.delta_total = *ov.delta;
  if (ov.iters) cfg.mechanism.sgd.iters = *ov.iters;
  if (ov.batch) cfg.mechanism.sgd.batch = *ov.batch;
  if (ov.trials) cfg.attack.trials = *ov.trials;
  if (ov.unsafe_reveal) cfg.unsafe_reveal = true;
  if (ov.attack_on) cfg.attack.enabled = true;
  if (ov.attack_off) cfg.attack.enabled = false;
}

void print_pipeline_summary(const PipelineResult& res) {
  const PrivacyReport& r = res.report;
  std::printf("mechanism          %s\n", r.mechanism.c_str());
  std::printf("samples x dims     %lld x %lld\n", static_cast<long long>(r.n),
              static_cast<long long>(r.d));
  std::printf("train accuracy     %.4f\n", res.train_accuracy);
  std::printf("eps2               %.6g\n", r.eps2);
  std::printf("mia advantage      %.6g\n", r.mia_advantage);
  std::printf("rdp mse bound      %.6g%s\n", r.rdp_mse_bound,
              r.rdp_prior_limited ? "  (prior-limited)" : "");
  std::printf("dfil mean/max      %.6g / %.6g\n", r.dfil_mean, r.dfil_max);
  std::printf("fil mse bound min  %.6g\n", r.fil_mse_bound_min);
  for (const AttackSummary& a : res.attacks)
    std::printf("attack target %lld  mse %.6g +/- %.6g  baseline %.6g  fallbacks %lld\n",
                static_cast<long long>(a.target), a.mse_mean, a.mse_stderr,
                a.baseline_mse, static_cast<long long>(a.fallbacks));
  for (const std::string& f : res.files_written) std::printf("wrote %s\n", f.c_str());
}

int run_train(const RunConfig& cfg, const std::string& out_dir) {
  const Dataset data = load_dataset(cfg.data);
  ModelSpec model = cfg.model;
  model.input_dim = data.d();
  model.num_classes = data.num_classes;
  fs::create_directories(out_dir);

  Checkpoint ckpt;
  ckpt.spec = model;
  ckpt.seed = cfg.seed;
  if (cfg.mechanism.kind == "output_perturbation") {
    const OutputPerturbation mech = output_perturbation_train(
        model, data, cfg.mechanism.lambda, cfg.mechanism.sigma);
    ckpt.params = mech.w_star;
    ckpt.step = 0;
  } else {
    SgdConfig sgd = cfg.mechanism.sgd;
    sgd.seed = cfg.seed;
    Rng init_rng = Rng(sgd.seed).substream(0);
    const Params init = init_params(model, init_rng);
    ckpt.params = private_sgd_train(model, data, sgd, init).params;
    ckpt.step = sgd.iters;
  }
  const std::string prefix = (fs::path(out_dir) / "checkpoint").string();
  save_checkpoint(prefix, ckpt);
  std::printf("train accuracy %.4f\n", accuracy(model, ckpt.params.w, data));
  std::printf("wrote %s.bin\nwrote %s.json\n", prefix.c_str(), prefix.c_str());
  return 0;
}

int run_bounds_cmd(std::optional<double> eps2, std::optional<int64_t> n,
                   std::optional<double> lambda, std::optional<double> sigma,
                   std::optional<double> q, std::optional<int64_t> steps, int64_t d,
                   double diam) {
  double eps = 0.0;
  if (eps2) {
    eps = *eps2;
  } else if (n && lambda && sigma) {
    eps = rdp_output_perturbation(*n, *lambda, *sigma);
  } else if (q && sigma) {
    const double per_step = rdp_subsampled_gaussian_alpha2(*q, *sigma / kClipOverhead);
    eps = static_cast<double>(steps.value_or(1)) * per_step;
  } else {
    throw ConfigError(
        "bounds: give --eps2, or --n --lambda --sigma, or --q --sigma [--steps]");
  }
  json out;
  out["eps2"] = eps;
  out["mia_advantage"] = mia_advantage_bound(eps);
  out["mse_lower_bound"] =
      mse_lower_bound_rdp(eps, std::vector<double>(static_cast<size_t>(d), diam));
  out["prior_mse"] = diam * diam / 12.0;
  std::cout << out.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Privacy accounting and reconstruction lower bounds for private training"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", grid_path;
  Overrides ov;

  CLI::App* pipeline = app.add_subcommand("pipeline", "Full run: data, mechanism, accounting, bounds, report");
  pipeline->add_option("--config", config_path, "Run config JSON")->required();
  pipeline->add_option("--out", out_dir, "Output directory");
  add_override_flags(pipeline, ov);

  CLI::App* train = app.add_subcommand("train", "Train the configured mechanism and save a checkpoint");
  train->add_option("--config", config_path, "Run config JSON")->required();
  train->add_option("--out", out_dir, "Output directory");
  add_override_flags(train, ov);

  CLI::App* account = app.add_subcommand("account", "Accounting and bounds only (attack disabled)");
  account->add_option("--config", config_path, "Run config JSON")->required();
  account->add_option("--out", out_dir, "Output directory");
  add_override_flags(account, ov);

  CLI::App* attack = app.add_subcommand("attack", "Pipeline with the reconstruction attack enabled");
  attack->add_option("--config", config_path, "Run config JSON")->required();
  attack->add_option("--out", out_dir, "Output directory");
  add_override_flags(attack, ov);

  CLI::App* grid = app.add_subcommand("grid", "Sweep mechanism parameters, one accounting run per point");
  grid->add_option("--config", config_path, "Run config JSON")->required();
  grid->add_option("--grid", grid_path, "Grid spec JSON")->required();
  grid->add_option("--out", out_dir, "Output directory");
  add_override_flags(grid, ov);

  std::optional<double> b_eps2, b_lambda, b_sigma, b_q;
  std::optional<int64_t> b_n, b_steps;
  int64_t b_d = 1;
  double b_diam = 1.0;
  CLI::App* bounds = app.add_subcommand("bounds", "Closed-form bound calculator");
  bounds->add_option("--eps2", b_eps2, "Order-2 RDP epsilon, given directly");
  bounds->add_option("--n", b_n, "Training set size (output perturbation)");
  bounds->add_option("--lambda", b_lambda, "L2 coefficient (output perturbation)");
  bounds->add_option("--sigma", b_sigma, "Noise scale or noise multiplier");
  bounds->add_option("--q", b_q, "Sampling rate (noisy SGD)");
  bounds->add_option("--steps", b_steps, "Step count (noisy SGD)");
  bounds->add_option("--d", b_d, "Data dimension");
  bounds->add_option("--diam", b_diam, "Per-dimension prior diameter");

  SyntheticConfig synth_cfg;
  std::vector<int> synth_digits;
  CLI::App* synth = app.add_subcommand("synth", "Write a procedural digit corpus as IDX files");
  synth->add_option("--out", out_dir, "Output directory");
  synth->add_option("--per-class", synth_cfg.per_class, "Images per digit");
  synth->add_option("--digits", synth_digits, "Digits to include (default all)");
  synth->add_option("--noise", synth_cfg.noise, "Pixel noise level");
  synth->add_option("--rows", synth_cfg.rows, "Image rows");
  synth->add_option("--cols", synth_cfg.cols, "Image cols");
  synth->add_option("--seed", synth_cfg.seed, "Corpus seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Usage mistakes share the config-error exit code; --help/--version exit 0.
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*pipeline || *account || *attack) {
      RunConfig cfg = load_run_config(config_path);
      if (*account) ov.attack_off = true;
      if (*attack) ov.attack_on = true;
      apply(cfg, ov);
      print_pipeline_summary(run_pipeline(cfg, out_dir));
      return 0;
    }
    if (*train) {
      RunConfig cfg = load_run_config(config_path);
      apply(cfg, ov);
      return run_train(cfg, out_dir);
    }
    if (*grid) {
      RunConfig cfg = load_run_config(config_path);
      apply(cfg, ov);
      std::ifstream gf(grid_path);
      if (!gf) throw ConfigError("cannot open grid spec " + grid_path);
      std::stringstream ss;
      ss << gf.rdbuf();
      const std::string csv = run_grid(cfg, parse_grid_spec(ss.str()), out_dir);
      std::printf("wrote %s\n", csv.c_str());
      return 0;
    }
    if (*bounds)
      return run_bounds_cmd(b_eps2, b_n, b_lambda, b_sigma, b_q, b_steps, b_d, b_diam);
    if (*synth) {
      if (!synth_digits.empty()) synth_cfg.digits = synth_digits;
      const SyntheticCorpus corpus = generate_digit_corpus(synth_cfg);
      fs::create_directories(out_dir);
      const std::string img = (fs::path(out_dir) / "images.idx").string();
      const std::string lab = (fs::path(out_dir) / "labels.idx").string();
      write_idx_images(img, corpus.images);
      write_idx_labels(lab, corpus.labels);
      std::printf("wrote %s (%lld images)\nwrote %s\n", img.c_str(),
                  static_cast<long long>(corpus.images.count), lab.c_str());
      return 0;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const NonSmoothError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
