#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "reconbound/attacks.hpp"
#include "reconbound/errors.hpp"
#include "reconbound/io.hpp"
#include <nlohmann/json.hpp>

namespace reconbound {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(what + ": invalid JSON: " + e.what());
  }
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot open " + path + " for writing");
  f << content;
  if (!f) throw DataError("write failed for " + path);
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm_utc{};
  gmtime_r(&t, &tm_utc);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

struct StageLog {
  json stages = json::array();
  std::chrono::steady_clock::time_point mark = std::chrono::steady_clock::now();

  void done(const std::string& name) {
    const auto now = std::chrono::steady_clock::now();
    const double secs = std::chrono::duration<double>(now - mark).count();
    stages.push_back({{"name", name}, {"status", "ok"}, {"seconds", secs}});
    mark = now;
  }
};

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  const json j = parse_json(json_text, "run config");
  RunConfig cfg;
  try {
    cfg.seed = j.value("seed", uint64_t{1});

    const json jd = j.value("data", json::object());
    cfg.data.source = jd.value("source", "synthetic");
    if (cfg.data.source != "synthetic" && cfg.data.source != "idx")
      throw ConfigError("run config: data.source must be 'synthetic' or 'idx'");
    if (cfg.data.source == "idx") {
      if (!jd.contains("images") || !jd.contains("labels"))
        throw ConfigError("run config: idx source needs data.images and data.labels");
      cfg.data.images = jd.at("images").get<std::string>();
      cfg.data.labels = jd.at("labels").get<std::string>();
    } else {
      cfg.data.synth.per_class = jd.value("per_class", int64_t{50});
      cfg.data.synth.digits = jd.value("digits", std::vector<int>{0, 1});
      cfg.data.synth.noise = jd.value("noise", 0.06);
      cfg.data.synth.seed = jd.value("data_seed", cfg.seed);
      cfg.data.synth.rows = jd.value("rows", int64_t{28});
      cfg.data.synth.cols = jd.value("cols", int64_t{28});
    }
    cfg.data.classes = jd.value("classes", std::vector<int>{});
    if (!cfg.data.classes.empty() && cfg.data.classes.size() != 2)
      throw ConfigError("run config: data.classes must name exactly two classes");
    cfg.data.limit = jd.value("limit", int64_t{0});
    if (jd.contains("box")) {
      const auto box = jd.at("box").get<std::vector<double>>();
      if (box.size() != 2 || !(box[1] > box[0]))
        throw ConfigError("run config: data.box must be [lo, hi] with hi > lo");
      cfg.data.box = Box{box[0], box[1]};
    }

    const json jm = j.value("model", json::object());
    const std::string kind = jm.value("kind", "logistic");
    if (kind == "logistic") {
      cfg.model.kind = ModelKind::kLogistic;
    } else if (kind == "tanh_mlp") {
      cfg.model.kind = ModelKind::kTanhMlp;
      cfg.model.hidden = jm.value("hidden", std::vector<int64_t>{16});
      for (int64_t h : cfg.model.hidden)
        if (h <= 0) throw ConfigError("run config: model.hidden must be positive");
    } else {
      throw ConfigError("run config: model.kind must be 'logistic' or 'tanh_mlp'");
    }

    const json jmech = j.value("mechanism", json::object());
    cfg.mechanism.kind = jmech.value("kind", "output_perturbation");
    if (cfg.mechanism.kind == "output_perturbation") {
      cfg.mechanism.lambda = jmech.value("lambda", 1e-2);
      cfg.mechanism.sigma = jmech.value("sigma", 1e-2);
    } else if (cfg.mechanism.kind == "dp_sgd") {
      SgdConfig& s = cfg.mechanism.sgd;
      s.iters = jmech.value("iters", int64_t{100});
      s.batch = jmech.value("batch", int64_t{32});
      s.sigma = jmech.value("sigma", 1.0);
      s.clip = jmech.value("clip", 1.0);
      s.lr = jmech.value("lr", 0.1);
      s.momentum = jmech.value("momentum", 0.5);
      s.delta_total = jmech.value("delta_total", 0.0);
      s.seed = cfg.seed;
      cfg.mechanism.sigma = s.sigma;
    } else {
      throw ConfigError("run config: mechanism.kind must be 'output_perturbation' or 'dp_sgd'");
    }

    const json ja = j.value("accounting", json::object());
    const std::string policy = ja.value("policy", "amplified");
    if (policy == "amplified")
      cfg.accounting.policy = KappaPolicy::kAmplified;
    else if (policy == "convex")
      cfg.accounting.policy = KappaPolicy::kConvex;
    else
      throw ConfigError("run config: accounting.policy must be 'amplified' or 'convex'");
    cfg.accounting.coord_samples = ja.value("coord_samples", 50);
    cfg.accounting.runs = ja.value("runs", 10);
    cfg.accounting.spectral = ja.value("spectral", false);
    cfg.accounting.power_iters = ja.value("power_iters", 80);
    cfg.accounting.seed = ja.value("seed", cfg.seed + 1000003);

    const json jat = j.value("attack", json::object());
    cfg.attack.enabled = jat.value("enabled", false);
    cfg.attack.trials = jat.value("trials", int64_t{100});
    cfg.attack.targets = jat.value("targets", std::vector<int64_t>{});
    cfg.attack.count = jat.value("count", int64_t{10});

    cfg.unsafe_reveal = j.value("unsafe_reveal", false);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_run_config(ss.str());
}

Dataset load_dataset(const DataConfig& cfg) {
  Dataset all;
  if (cfg.source == "idx") {
    const IdxImages images = parse_idx_images(cfg.images);
    const IdxLabels labels = parse_idx_labels(cfg.labels);
    all = idx_to_dataset(images, labels, cfg.box);
  } else {
    const SyntheticCorpus corpus = generate_digit_corpus(cfg.synth);
    all = idx_to_dataset(corpus.images, corpus.labels, cfg.box);
  }
  if (cfg.classes.size() == 2)
    return filter_binary(all, cfg.classes[0], cfg.classes[1], cfg.limit);
  if (cfg.limit > 0 && all.n() > cfg.limit)
    all.samples.resize(static_cast<size_t>(cfg.limit));
  return all;
}

namespace {

struct AccountOutcome {
  PrivacyReport report;
  Params released;  // trained weights (pre-noise for output perturbation)
  double lambda = 0.0;
};

AccountOutcome account_run(const RunConfig& cfg, const Dataset& data) {
  AccountOutcome out;
  ModelSpec model = cfg.model;
  model.input_dim = data.d();
  model.num_classes = data.num_classes;

  if (cfg.mechanism.kind == "output_perturbation") {
    if (model.kind != ModelKind::kLogistic)
      throw ConfigError("output perturbation accounting requires a logistic model");
    const OutputPerturbation mech = output_perturbation_train(
        model, data, cfg.mechanism.lambda, cfg.mechanism.sigma);
    out.report = make_report_output_perturbation(model, data, cfg.mechanism.lambda,
                                                 cfg.mechanism.sigma, mech.w_star,
                                                 cfg.accounting.spectral,
                                                 cfg.unsafe_reveal);
    out.released = mech.w_star;
    out.lambda = cfg.mechanism.lambda;
    return out;
  }
  SgdConfig sgd = cfg.mechanism.sgd;
  sgd.seed = cfg.seed;
  if (sgd.iters == 0) {
    // Nothing is released beyond the data-independent init: no leakage on
    // either axis. Weights reproduce what a zero-step accounted run would use.
    PrivacyReport& rep = out.report;
    rep.mechanism = "dp_sgd";
    rep.n = data.n();
    rep.d = data.d();
    const double diam = data.box.diameter();
    rep.prior_mse = diam * diam / 12.0;
    rep.unsafe_reveal = cfg.unsafe_reveal;
    rep.rdp_mse_bound = std::numeric_limits<double>::infinity();
    rep.rdp_prior_limited = true;
    rep.kappa_policy =
        cfg.accounting.policy == KappaPolicy::kAmplified ? "amplified" : "convex";
    rep.samples.assign(static_cast<size_t>(data.n()), SampleRisk{});
    for (size_t i = 0; i < rep.samples.size(); ++i) {
      rep.samples[i].index = cfg.unsafe_reveal ? static_cast<int64_t>(i) : -1;
      rep.samples[i].mse_bound_trace = std::numeric_limits<double>::infinity();
    }
    rep.fil_mse_bound_min = std::numeric_limits<double>::infinity();
    Rng init_rng = Rng(Rng(sgd.seed).substream(0).next_u64()).substream(0);
    out.released = init_params(model, init_rng);
    return out;
  }
  const FilAccountResult fil = fil_accountant_run(model, data, sgd, cfg.accounting);
  out.report = make_report_dpsgd(model, data, sgd, cfg.accounting, fil, cfg.unsafe_reveal);
  out.released = fil.final_params;
  return out;
}

PipelineResult run_pipeline_stages(const RunConfig& cfg, const std::string& out_dir,
                                   StageLog& log, std::string& stage,
                                   PipelineResult& result);

}  // namespace

PipelineResult run_pipeline(const RunConfig& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  StageLog log;
  PipelineResult result;
  std::string stage = "data";

  // On any stage failure the MANIFEST still lands, recording which stage
  // died; artifacts written by earlier stages stay in place.
  try {
    return run_pipeline_stages(cfg, out_dir, log, stage, result);
  } catch (const std::exception& e) {
    json manifest;
    manifest["created_utc"] = utc_now();
    manifest["seed"] = cfg.seed;
    manifest["mechanism"] = cfg.mechanism.kind;
    manifest["failed_stage"] = stage;
    manifest["error"] = e.what();
    manifest["stages"] = log.stages;
    try {
      write_text((fs::path(out_dir) / "MANIFEST.json").string(), manifest.dump(2) + "\n");
    } catch (...) {
      // Nothing more to salvage; surface the original failure.
    }
    throw;
  }
}

namespace {

PipelineResult run_pipeline_stages(const RunConfig& cfg, const std::string& out_dir,
                                   StageLog& log, std::string& stage,
                                   PipelineResult& result) {
  const Dataset data = load_dataset(cfg.data);
  if (data.n() < 2) throw DataError("pipeline: need at least two samples");
  ModelSpec model = cfg.model;
  model.input_dim = data.d();
  model.num_classes = data.num_classes;
  if (model.kind == ModelKind::kLogistic && data.num_classes != 2)
    throw ConfigError("pipeline: logistic model needs a binary dataset (set data.classes)");
  log.done("data");

  stage = "account";
  const AccountOutcome outcome = account_run(cfg, data);
  result.report = outcome.report;
  result.train_accuracy = accuracy(model, outcome.released.w, data);
  log.done("account");

  stage = "checkpoint";
  Checkpoint ckpt;
  ckpt.spec = model;
  ckpt.params = outcome.released;
  ckpt.step = cfg.mechanism.kind == "dp_sgd" ? cfg.mechanism.sgd.iters : 0;
  ckpt.seed = cfg.seed;
  const std::string ckpt_prefix = (fs::path(out_dir) / "checkpoint").string();
  save_checkpoint(ckpt_prefix, ckpt);
  result.files_written.push_back(ckpt_prefix + ".bin");
  result.files_written.push_back(ckpt_prefix + ".json");
  log.done("checkpoint");

  if (cfg.attack.enabled) {
    stage = "attack";
    if (cfg.mechanism.kind != "output_perturbation")
      throw ConfigError("pipeline: the reconstruction attack targets output perturbation");
    std::vector<int64_t> targets = cfg.attack.targets;
    if (targets.empty()) {
      Rng pick(cfg.seed);
      targets = pick.substream(0xA77AC4).sample_without_replacement(
          data.n(), std::min(cfg.attack.count, data.n()));
    }
    const OutputPerturbation mech{outcome.released, cfg.mechanism.sigma};
    json attack_rows = json::array();
    for (int64_t target : targets) {
      if (target < 0 || target >= data.n())
        throw ConfigError("pipeline: attack target index out of range");
      const GlmStationarityAttack attack(model, data, target, outcome.lambda);
      const ReleaseSampler sampler = [&mech](Rng& r) { return mech.sample(r); };
      const AttackResult res =
          evaluate_attack(sampler, attack.as_reconstructor(),
                          data.samples[static_cast<size_t>(target)].x,
                          cfg.attack.trials, cfg.seed ^ static_cast<uint64_t>(target));
      AttackSummary summary;
      summary.target = target;
      summary.mse_mean = res.mse_mean;
      summary.mse_stderr = res.mse_stderr;
      summary.trials = res.trials;
      summary.fallbacks = attack.fallback_count();
      const Tensor mid = Tensor::full({data.d()}, data.box.midpoint());
      double base = 0.0;
      const Tensor& tx = data.samples[static_cast<size_t>(target)].x;
      for (int64_t i = 0; i < data.d(); ++i)
        base += (mid[i] - tx[i]) * (mid[i] - tx[i]);
      summary.baseline_mse = base / static_cast<double>(data.d());
      result.attacks.push_back(summary);
      attack_rows.push_back({{"target", summary.target},
                             {"trials", summary.trials},
                             {"mse_mean", summary.mse_mean},
                             {"mse_stderr", summary.mse_stderr},
                             {"baseline_mse", summary.baseline_mse},
                             {"fallbacks", summary.fallbacks}});
    }
    const std::string attack_path = (fs::path(out_dir) / "attack.json").string();
    write_text(attack_path, json{{"attacks", attack_rows}}.dump(2) + "\n");
    result.files_written.push_back(attack_path);
    log.done("attack");
  }

  stage = "report";
  const std::string report_json = (fs::path(out_dir) / "report.json").string();
  const std::string report_csv = (fs::path(out_dir) / "report.csv").string();
  write_text(report_json, result.report.to_json() + "\n");
  write_text(report_csv, result.report.to_csv());
  result.files_written.push_back(report_json);
  result.files_written.push_back(report_csv);
  log.done("report");

  json manifest;
  manifest["created_utc"] = utc_now();
  manifest["seed"] = cfg.seed;
  manifest["mechanism"] = cfg.mechanism.kind;
  manifest["n"] = data.n();
  manifest["d"] = data.d();
  manifest["train_accuracy"] = result.train_accuracy;
  manifest["stages"] = log.stages;
  const std::string manifest_path = (fs::path(out_dir) / "MANIFEST.json").string();
  write_text(manifest_path, manifest.dump(2) + "\n");
  result.files_written.push_back(manifest_path);
  return result;
}

}  // namespace

GridSpec parse_grid_spec(const std::string& json_text) {
  const json j = parse_json(json_text, "grid spec");
  GridSpec g;
  try {
    g.sigma = j.value("sigma", std::vector<double>{});
    g.clip = j.value("clip", std::vector<double>{});
    g.iters = j.value("iters", std::vector<int64_t>{});
    g.lambda = j.value("lambda", std::vector<double>{});
  } catch (const json::exception& e) {
    throw ConfigError(std::string("grid spec: ") + e.what());
  }
  if (g.sigma.empty() && g.clip.empty() && g.iters.empty() && g.lambda.empty())
    throw ConfigError("grid spec: no parameter lists given");
  return g;
}

std::string run_grid(const RunConfig& base, const GridSpec& grid,
                     const std::string& out_dir) {
  fs::create_directories(out_dir);
  const Dataset data = load_dataset(base.data);

  const std::vector<double> sigmas =
      grid.sigma.empty() ? std::vector<double>{base.mechanism.kind == "dp_sgd"
                                                   ? base.mechanism.sgd.sigma
                                                   : base.mechanism.sigma}
                         : grid.sigma;
  const std::vector<double> clips =
      grid.clip.empty() ? std::vector<double>{base.mechanism.sgd.clip} : grid.clip;
  const std::vector<int64_t> iters =
      grid.iters.empty() ? std::vector<int64_t>{base.mechanism.sgd.iters} : grid.iters;
  const std::vector<double> lambdas =
      grid.lambda.empty() ? std::vector<double>{base.mechanism.lambda} : grid.lambda;

  std::ostringstream csv;
  csv << "mechanism,lambda,sigma,clip,iters,eps2,mia_advantage,rdp_mse_bound,"
         "rdp_prior_limited,kappa,dfil_mean,dfil_max,fil_mse_bound_most_at_risk\n";
  auto emit = [&](const RunConfig& cfg) {
    const AccountOutcome outcome = account_run(cfg, data);
    const PrivacyReport& r = outcome.report;
    csv << r.mechanism << ',' << (cfg.mechanism.kind == "dp_sgd" ? 0.0 : cfg.mechanism.lambda)
        << ',' << (cfg.mechanism.kind == "dp_sgd" ? cfg.mechanism.sgd.sigma
                                                  : cfg.mechanism.sigma)
        << ',' << (cfg.mechanism.kind == "dp_sgd" ? cfg.mechanism.sgd.clip : 0.0) << ','
        << (cfg.mechanism.kind == "dp_sgd" ? cfg.mechanism.sgd.iters : 0) << ','
        << r.eps2 << ',' << r.mia_advantage << ',' << r.rdp_mse_bound << ','
        << (r.rdp_prior_limited ? 1 : 0) << ',' << r.kappa_weight << ',' << r.dfil_mean
        << ',' << r.dfil_max << ',' << r.fil_mse_bound_min << '\n';
  };

  if (base.mechanism.kind == "dp_sgd") {
    for (double s : sigmas)
      for (double c : clips)
        for (int64_t t : iters) {
          RunConfig cfg = base;
          cfg.mechanism.sgd.sigma = s;
          cfg.mechanism.sgd.clip = c;
          cfg.mechanism.sgd.iters = t;
          emit(cfg);
        }
  } else {
    for (double l : lambdas)
      for (double s : sigmas) {
        RunConfig cfg = base;
        cfg.mechanism.lambda = l;
        cfg.mechanism.sigma = s;
        emit(cfg);
      }
  }

  const std::string csv_path = (fs::path(out_dir) / "grid.csv").string();
  write_text(csv_path, csv.str());

  json manifest;
  manifest["created_utc"] = utc_now();
  manifest["seed"] = base.seed;
  manifest["stages"] = json::array({{{"name", "grid"}, {"status", "ok"}}});
  write_text((fs::path(out_dir) / "MANIFEST.json").string(), manifest.dump(2) + "\n");
  return csv_path;
}

}  // namespace reconbound
