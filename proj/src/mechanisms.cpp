#include "reconbound/mechanisms.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "reconbound/errors.hpp"
#include <nlohmann/json.hpp>

namespace reconbound {

double gelu(double x) { return ad::gelu_s(x); }

double gelu_prime(double x) {
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  constexpr double inv_sqrt2pi = 0.3989422804014326779;
  const double phi = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
  return phi + x * inv_sqrt2pi * std::exp(-0.5 * x * x);
}

Tensor smooth_clip(const Tensor& g, double clip) { return smooth_clip_t(g, clip); }

double smooth_clip_factor(double grad_norm, double clip) {
  if (!(clip > 0.0)) throw ConfigError("smooth_clip: clip must be positive");
  return 1.0 / (gelu(grad_norm / clip - 1.0) + 1.0);
}

PrivateSgdResult private_sgd_train(const ModelSpec& spec, const Dataset& data,
                                   const SgdConfig& cfg, const Params& init,
                                   const StepHook& hook) {
  if (cfg.iters <= 0) throw ConfigError("private_sgd_train: iters must be positive");
  if (cfg.batch <= 0 || cfg.batch > data.n())
    throw ConfigError("private_sgd_train: batch size out of range");
  if (!(cfg.sigma >= 0.0)) throw ConfigError("private_sgd_train: negative sigma");
  if (!(cfg.clip > 0.0)) throw ConfigError("private_sgd_train: clip must be positive");
  if (init.w.numel() != spec.param_count())
    throw ConfigError("private_sgd_train: init has wrong parameter count");

  const int64_t p = spec.param_count();
  const double inv_b = 1.0 / static_cast<double>(cfg.batch);
  Rng root(cfg.seed);

  PrivateSgdResult res;
  res.params.w = init.w;
  Tensor momentum = Tensor::zeros({p});
  Tensor sum = Tensor::zeros({p});

  for (int64_t t = 1; t <= cfg.iters; ++t) {
    Rng step_rng = root.substream(static_cast<uint64_t>(t));
    Rng batch_rng = step_rng.substream(0);
    Rng noise_rng = step_rng.substream(1);

    const std::vector<int64_t> batch =
        batch_rng.sample_without_replacement(data.n(), cfg.batch);

    StepTrace trace;
    trace.step = t;
    if (cfg.record_trace) trace.batch = batch;

    sum.fill(0.0);
    for (int64_t idx : batch) {
      const Sample& z = data.samples[static_cast<size_t>(idx)];
      if (hook) hook(t, idx, res.params.w);
      Tensor g = per_sample_grad(spec, res.params.w, z);
      const double gn = norm2(g);
      if (cfg.record_trace) trace.grad_norms.push_back(gn);
      scale_inplace(g, smooth_clip_factor(gn, cfg.clip));
      axpy(1.0, g, sum);
    }
    const double noise_std = cfg.sigma * cfg.clip;
    for (int64_t i = 0; i < p; ++i)
      sum[i] = (sum[i] + noise_std * noise_rng.next_gaussian()) * inv_b;

    for (int64_t i = 0; i < p; ++i) {
      momentum[i] = cfg.momentum * momentum[i] + sum[i];
      res.params.w[i] -= cfg.lr * momentum[i];
    }
    if (!res.params.w.all_finite())
      throw NumericError("private_sgd_train: non-finite weights at step " +
                         std::to_string(t));
    if (cfg.record_trace) res.trace.push_back(std::move(trace));
  }
  return res;
}

OutputPerturbation output_perturbation_train(const ModelSpec& spec, const Dataset& data,
                                             double lambda, double sigma,
                                             double erm_tol) {
  if (!(lambda > 0.0))
    throw ConfigError("output_perturbation_train: lambda must be positive");
  if (!(sigma >= 0.0)) throw ConfigError("output_perturbation_train: negative sigma");
  ErmOptions opts;
  opts.lambda = lambda;
  opts.tol = erm_tol;
  const ErmResult erm = train_erm(spec, data, opts);
  return OutputPerturbation{erm.params, sigma};
}

namespace {

std::string kind_name(ModelKind k) {
  return k == ModelKind::kLogistic ? "logistic" : "tanh_mlp";
}

ModelKind kind_from(const std::string& s) {
  if (s == "logistic") return ModelKind::kLogistic;
  if (s == "tanh_mlp") return ModelKind::kTanhMlp;
  throw DataError("checkpoint: unknown model kind '" + s + "'");
}

}  // namespace

void save_checkpoint(const std::string& path_prefix, const Checkpoint& ckpt) {
  const std::string bin_path = path_prefix + ".bin";
  std::ofstream bin(bin_path, std::ios::binary);
  if (!bin) throw DataError("checkpoint: cannot open " + bin_path);
  for (int64_t i = 0; i < ckpt.params.w.numel(); ++i) {
    uint64_t bits;
    const double v = ckpt.params.w[i];
    std::memcpy(&bits, &v, sizeof bits);
    unsigned char b[8];
    for (int k = 0; k < 8; ++k) b[k] = static_cast<unsigned char>(bits >> (8 * k));
    bin.write(reinterpret_cast<const char*>(b), 8);
  }
  if (!bin) throw DataError("checkpoint: write failed for " + bin_path);
  bin.close();

  nlohmann::json meta;
  meta["format"] = "reconbound-checkpoint-v1";
  meta["model"] = {{"kind", kind_name(ckpt.spec.kind)},
                   {"input_dim", ckpt.spec.input_dim},
                   {"hidden", ckpt.spec.hidden},
                   {"num_classes", ckpt.spec.num_classes}};
  meta["param_count"] = ckpt.params.w.numel();
  meta["step"] = ckpt.step;
  meta["seed"] = ckpt.seed;
  const std::string json_path = path_prefix + ".json";
  std::ofstream js(json_path);
  if (!js) throw DataError("checkpoint: cannot open " + json_path);
  js << meta.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& path_prefix) {
  const std::string json_path = path_prefix + ".json";
  std::ifstream js(json_path);
  if (!js) throw DataError("checkpoint: cannot open " + json_path);
  nlohmann::json meta;
  try {
    js >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: bad sidecar JSON: ") + e.what());
  }
  if (meta.value("format", "") != "reconbound-checkpoint-v1")
    throw DataError("checkpoint: unrecognized format tag");

  Checkpoint ckpt;
  try {
    const auto& m = meta.at("model");
    ckpt.spec.kind = kind_from(m.at("kind").get<std::string>());
    ckpt.spec.input_dim = m.at("input_dim").get<int64_t>();
    ckpt.spec.hidden = m.at("hidden").get<std::vector<int64_t>>();
    ckpt.spec.num_classes = m.at("num_classes").get<int64_t>();
    ckpt.step = meta.at("step").get<int64_t>();
    ckpt.seed = meta.at("seed").get<uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: missing sidecar field: ") + e.what());
  }
  const int64_t expect = meta.at("param_count").get<int64_t>();
  if (expect != ckpt.spec.param_count())
    throw DataError("checkpoint: param_count disagrees with model spec");

  const std::string bin_path = path_prefix + ".bin";
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw DataError("checkpoint: cannot open " + bin_path);
  ckpt.params.w = Tensor::zeros({expect});
  for (int64_t i = 0; i < expect; ++i) {
    unsigned char b[8];
    bin.read(reinterpret_cast<char*>(b), 8);
    if (!bin) throw DataError("checkpoint: truncated weight file " + bin_path);
    uint64_t bits = 0;
    for (int k = 0; k < 8; ++k) bits |= static_cast<uint64_t>(b[k]) << (8 * k);
    double v;
    std::memcpy(&v, &bits, sizeof v);
    ckpt.params.w[i] = v;
  }
  char extra;
  if (bin.read(&extra, 1))
    throw DataError("checkpoint: trailing bytes in " + bin_path);
  return ckpt;
}

}  // namespace reconbound
