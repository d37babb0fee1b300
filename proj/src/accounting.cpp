#include "reconbound/accounting.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "reconbound/errors.hpp"
#include "reconbound/parallel.hpp"
#include <nlohmann/json.hpp>

namespace reconbound {

namespace {

double sigmoid(double a) {
  if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
  const double e = std::exp(a);
  return e / (1.0 + e);
}

constexpr double kTinyNorm = 1e-300;

}  // namespace

// ---------------------------------------------------------------------------
// Closed-form RDP quantities.

double rdp_output_perturbation(int64_t n, double lambda, double sigma) {
  if (n <= 0) throw ConfigError("rdp_output_perturbation: n must be positive");
  if (!(lambda > 0.0) || !(sigma > 0.0))
    throw ConfigError("rdp_output_perturbation: lambda and sigma must be positive");
  const double s = static_cast<double>(n) * lambda * sigma;
  return 4.0 / (s * s);
}

double rdp_subsampled_gaussian_alpha2(double q, double sigma_eff) {
  if (!(q > 0.0) || q > 1.0)
    throw ConfigError("rdp_subsampled_gaussian_alpha2: q must be in (0, 1]");
  if (!(sigma_eff > 0.0))
    throw ConfigError("rdp_subsampled_gaussian_alpha2: sigma must be positive");
  const double x = 1.0 / (sigma_eff * sigma_eff);
  if (x > 500.0) {
    // log(1 + q^2 (e^x - 1)) = x + 2 log q + log1p((1 - q^2) e^{-x} / q^2)
    return x + 2.0 * std::log(q) + std::log1p((1.0 - q * q) * std::exp(-x) / (q * q));
  }
  return std::log1p(q * q * std::expm1(x));
}

double mia_advantage_bound(double eps) {
  if (!(eps >= 0.0)) throw ConfigError("mia_advantage_bound: eps must be nonnegative");
  return std::tanh(0.5 * eps);  // (e^eps - 1) / (e^eps + 1)
}

double mse_lower_bound_rdp(double eps2, const std::vector<double>& diam,
                           const std::vector<double>& gamma,
                           const std::vector<double>& bias) {
  if (!(eps2 > 0.0)) throw ConfigError("mse_lower_bound_rdp: eps must be positive");
  if (diam.empty()) throw ConfigError("mse_lower_bound_rdp: empty prior");
  if (!gamma.empty() && gamma.size() != diam.size())
    throw ConfigError("mse_lower_bound_rdp: gamma size mismatch");
  if (!bias.empty() && bias.size() != diam.size())
    throw ConfigError("mse_lower_bound_rdp: bias size mismatch");
  const double d = static_cast<double>(diam.size());
  double num = 0.0;
  for (size_t i = 0; i < diam.size(); ++i) {
    if (diam[i] < 0.0) throw ConfigError("mse_lower_bound_rdp: negative diameter");
    const double g = gamma.empty() ? 1.0 : gamma[i];
    num += g * g * diam[i] * diam[i];
  }
  double bias_sq = 0.0;
  for (double b : bias) bias_sq += b * b;
  return num / (4.0 * d * std::expm1(eps2)) + bias_sq / d;
}

// ---------------------------------------------------------------------------
// Gaussian DP step bookkeeping.

double step_epsilon_dp(double sigma, double delta_step) {
  if (!(sigma > 0.0)) throw ConfigError("step_epsilon_dp: sigma must be positive");
  if (!(delta_step > 0.0) || delta_step >= 1.0)
    throw ConfigError("step_epsilon_dp: delta must be in (0, 1)");
  return kClipOverhead * 2.0 * std::sqrt(2.0 * std::log(1.25 / delta_step)) / sigma;
}

DeltaBudget delta_budget(int64_t iters, int64_t n, double q, double delta_total) {
  if (iters <= 0 || n <= 0) throw ConfigError("delta_budget: iters and n must be positive");
  if (!(q > 0.0) || q > 1.0) throw ConfigError("delta_budget: q must be in (0, 1]");
  if (delta_total < 0.0) throw ConfigError("delta_budget: negative budget");
  const double total = delta_total > 0.0 ? delta_total : 1.0 / static_cast<double>(n);
  // Spread over the expected n q T participations of the run.
  DeltaBudget out;
  out.delta_step = total / (static_cast<double>(n) * q * static_cast<double>(iters));
  if (out.delta_step > 1e-2) {
    out.delta_step = 1e-2;
    out.clamped = true;
  }
  return out;
}

double kappa(double q, double eps_step) {
  if (!(q > 0.0) || q > 1.0) throw ConfigError("kappa: q must be in (0, 1]");
  if (!(eps_step >= 0.0)) throw ConfigError("kappa: eps must be nonnegative");
  return q / (q + (1.0 - q) * std::exp(-eps_step));
}

// ---------------------------------------------------------------------------
// Per-step FIL estimators.

namespace {

// Action of the clipped-gradient input Jacobian and its transpose for one
// (sample, weights, clip) triple. The forward action applies the clip inside
// dual arithmetic; the transpose combines the unclipped mixed-partial action
// with an analytic correction for the data dependence of the clip factor.
struct ClippedJacobian {
  const LossProgram prog;
  const Tensor& w;
  const Tensor& x;
  double clip;
  Tensor g;        // unclipped gradient at (w, x)
  double r = 0.0;  // ||g||
  double denom = 1.0;
  double corr = 0.0;  // gelu'(r / clip - 1) / clip
  Tensor jt_ghat;     // J^T (g / r)

  ClippedJacobian(const ModelSpec& spec, const Tensor& w_in, const Tensor& x_in,
                  int label, double clip_in)
      : prog(spec, label), w(w_in), x(x_in), clip(clip_in) {
    g = ad::grad_w(prog, w, x);
    r = norm2(g);
    denom = gelu(r / clip - 1.0) + 1.0;
    if (r > kTinyNorm) {
      corr = gelu_prime(r / clip - 1.0) / clip;
      Tensor ghat = g;
      scale_inplace(ghat, 1.0 / r);
      jt_ghat = ad::input_grad_vjp(prog, w, x, ghat);
    }
  }

  Tensor forward(const Tensor& v) const {
    DualTensor gw;
    ad::dual_grads(prog, duals_of(w), duals_of(x, v), &gw, nullptr);
    const DualTensor clipped = smooth_clip_t(gw, clip);
    return tangents_of(clipped);
  }

  Tensor transposed(const Tensor& u) const {
    Tensor jtu = ad::input_grad_vjp(prog, w, x, u);
    scale_inplace(jtu, 1.0 / denom);
    if (r > kTinyNorm) {
      const double gu = dot(g, u);
      axpy(-corr * gu / (denom * denom), jt_ghat, jtu);
    }
    return jtu;
  }
};

}  // namespace

TraceEstimate per_step_fim_trace(const ModelSpec& spec, const Tensor& w,
                                 const Sample& z, double clip, double noise_std,
                                 int coord_samples, Rng& rng) {
  if (!(noise_std > 0.0)) throw ConfigError("per_step_fim_trace: noise must be positive");
  if (coord_samples <= 0) throw ConfigError("per_step_fim_trace: need at least one probe");
  const int64_t d = z.x.numel();
  const LossProgram prog(spec, z.label);
  const double inv_var = 1.0 / (noise_std * noise_std);

  auto column_sq = [&](int64_t j) {
    Tensor e = Tensor::zeros({d});
    e[j] = 1.0;
    DualTensor gw;
    ad::dual_grads(prog, duals_of(w), duals_of(z.x, e), &gw, nullptr);
    const DualTensor clipped = smooth_clip_t(gw, clip);
    double s = 0.0;
    for (int64_t i = 0; i < clipped.numel(); ++i) s += clipped[i].t * clipped[i].t;
    return s;
  };

  TraceEstimate out;
  if (coord_samples >= d) {
    double s = 0.0;
    for (int64_t j = 0; j < d; ++j) s += column_sq(j);
    out.value = s * inv_var;
    out.coords = static_cast<int>(d);
    out.exact = true;
    return out;
  }
  double s = 0.0;
  for (int k = 0; k < coord_samples; ++k) s += column_sq(rng.next_index(d));
  out.value = s * (static_cast<double>(d) / coord_samples) * inv_var;
  out.coords = coord_samples;
  out.exact = false;
  return out;
}

SpectralEstimate per_step_fil_spectral(const ModelSpec& spec, const Tensor& w,
                                       const Sample& z, double clip, double noise_std,
                                       uint64_t seed, int max_iters, double tol) {
  if (!(noise_std > 0.0))
    throw ConfigError("per_step_fil_spectral: noise must be positive");
  const int64_t d = z.x.numel();
  const ClippedJacobian jac(spec, w, z.x, z.label, clip);
  const double inv_var = 1.0 / (noise_std * noise_std);
  LinearOperator op{d, d, [&](const Tensor& v) {
                      Tensor out = jac.transposed(jac.forward(v));
                      scale_inplace(out, inv_var);
                      return out;
                    }};
  const PowerIterationResult pr = power_iteration(op, seed, max_iters, tol);
  SpectralEstimate out;
  out.value = pr.eigenvalue;
  out.converged = pr.converged;
  out.iterations = pr.iterations;
  return out;
}

// ---------------------------------------------------------------------------
// Composition over a training run.

FilAccountResult fil_accountant_run(const ModelSpec& spec, const Dataset& data,
                                    const SgdConfig& cfg,
                                    const AccountingParams& params) {
  if (params.runs <= 0) throw ConfigError("fil_accountant_run: runs must be positive");
  const int64_t n = data.n();
  const int64_t d = data.d();
  if (n == 0 || d == 0) throw ConfigError("fil_accountant_run: empty dataset");

  FilAccountResult res;
  res.q = static_cast<double>(cfg.batch) / static_cast<double>(n);
  res.delta = delta_budget(cfg.iters, n, res.q, cfg.delta_total);
  res.eps_step = step_epsilon_dp(cfg.sigma, res.delta.delta_step);
  res.policy = params.policy;
  res.kappa_weight =
      params.policy == KappaPolicy::kAmplified ? kappa(res.q, res.eps_step) : 1.0;
  res.per_sample.assign(static_cast<size_t>(n), FilEstimate{});
  for (FilEstimate& e : res.per_sample) {
    e.runs = params.runs;
    e.kappa_weight = res.kappa_weight;
    e.has_spectral = params.spectral;
  }

  const double noise_std = cfg.sigma * cfg.clip;
  if (!(noise_std > 0.0))
    throw ConfigError("fil_accountant_run: needs positive noise (sigma * clip)");

  Rng seed_gen(cfg.seed);
  Rng acct_root(params.seed);

  for (int run = 0; run < params.runs; ++run) {
    SgdConfig run_cfg = cfg;
    run_cfg.seed = seed_gen.substream(static_cast<uint64_t>(run)).next_u64();
    run_cfg.record_trace = false;
    Rng init_rng = Rng(run_cfg.seed).substream(0);
    const Params init = init_params(spec, init_rng);
    Rng run_acct = acct_root.substream(static_cast<uint64_t>(run));

    // The hook buffers one step's worth of work so the per-sample estimates
    // can run through parallel_for; estimates only need (w_prev, sample).
    int64_t buf_step = -1;
    Tensor w_snap;
    std::vector<int64_t> buf;
    auto flush = [&]() {
      if (buf.empty()) return;
      Rng step_acct = run_acct.substream(static_cast<uint64_t>(buf_step));
      parallel_for(static_cast<int64_t>(buf.size()), [&](int64_t k) {
        const int64_t idx = buf[static_cast<size_t>(k)];
        const Sample& z = data.samples[static_cast<size_t>(idx)];
        Rng task = step_acct.substream(static_cast<uint64_t>(idx));
        Rng trace_rng = task.substream(0);
        const TraceEstimate te = per_step_fim_trace(
            spec, w_snap, z, cfg.clip, noise_std, params.coord_samples, trace_rng);
        FilEstimate& acc = res.per_sample[static_cast<size_t>(idx)];
        acc.trace_sum += te.value;
        acc.visits += 1;
        if (params.spectral) {
          const uint64_t pseed = task.substream(1).next_u64();
          const SpectralEstimate se =
              per_step_fil_spectral(spec, w_snap, z, cfg.clip, noise_std, pseed,
                                    params.power_iters, params.power_tol);
          acc.spectral_sum += se.value;
        }
      });
      buf.clear();
    };

    StepHook hook = [&](int64_t t, int64_t idx, const Tensor& w_prev) {
      if (t != buf_step) {
        flush();
        buf_step = t;
        w_snap = w_prev;
      }
      buf.push_back(idx);
    };

    PrivateSgdResult train = private_sgd_train(spec, data, run_cfg, init, hook);
    flush();
    if (run == 0) res.final_params = std::move(train.params);
  }
  return res;
}

// ---------------------------------------------------------------------------
// FIL-side bounds.

double mse_lower_bound_fil_trace(double trace, int64_t d) {
  if (d <= 0) throw ConfigError("mse_lower_bound_fil_trace: d must be positive");
  if (trace < 0.0) throw ConfigError("mse_lower_bound_fil_trace: negative trace");
  if (trace == 0.0) return std::numeric_limits<double>::infinity();
  return static_cast<double>(d) / trace;
}

double mse_lower_bound_fil_spectral(double eta_sq) {
  if (eta_sq < 0.0) throw ConfigError("mse_lower_bound_fil_spectral: negative eigenvalue");
  if (eta_sq == 0.0) return std::numeric_limits<double>::infinity();
  return 1.0 / eta_sq;
}

double mse_lower_bound_fil_general(const Tensor& fim, const Tensor& bias_jac,
                                   const Tensor& bias) {
  if (fim.shape().size() != 2 || fim.dim(0) != fim.dim(1))
    throw ConfigError("mse_lower_bound_fil_general: FIM must be square");
  const int64_t d = fim.dim(0);
  Eigen::MatrixXd f(d, d), bj = Eigen::MatrixXd::Zero(d, d);
  for (int64_t i = 0; i < d; ++i)
    for (int64_t j = 0; j < d; ++j) f(i, j) = fim[i * d + j];
  if (bias_jac.numel() > 0) {
    if (bias_jac.shape() != fim.shape())
      throw ConfigError("mse_lower_bound_fil_general: bias Jacobian shape mismatch");
    for (int64_t i = 0; i < d; ++i)
      for (int64_t j = 0; j < d; ++j) bj(i, j) = bias_jac[i * d + j];
  }
  double bias_sq = 0.0;
  for (int64_t i = 0; i < bias.numel(); ++i) bias_sq += bias[i] * bias[i];

  Eigen::LLT<Eigen::MatrixXd> llt(f);
  if (llt.info() != Eigen::Success)
    throw NumericError("mse_lower_bound_fil_general: FIM not positive definite");
  const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(d, d) + bj;
  const Eigen::MatrixXd m = a * llt.solve(a.transpose());
  return (m.trace() + bias_sq) / static_cast<double>(d);
}

double hcrb_gaussian(double delta, double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("hcrb_gaussian: sigma must be positive");
  if (delta < 0.0) throw ConfigError("hcrb_gaussian: negative separation");
  const double x = (delta * delta) / (sigma * sigma);
  // delta^2 / (e^x - 1) = sigma^2 * x / (e^x - 1); series near 0 avoids 0/0.
  if (x < 1e-8) return sigma * sigma * (1.0 - 0.5 * x + x * x / 12.0);
  return sigma * sigma * x / std::expm1(x);
}

// ---------------------------------------------------------------------------
// Output perturbation FIM via the implicit function theorem.

struct OutputPerturbAccountant::Impl {
  ModelSpec spec;
  const Dataset* data = nullptr;
  double lambda = 0.0;
  double sigma = 0.0;
  Tensor w_star;

  // Dense pieces (logistic closed form only).
  bool dense_ready = false;
  Eigen::MatrixXd hinv;
  double hinv_fro2 = 0.0;
  Eigen::VectorXd hinv_w;
  double w_norm2 = 0.0;
};

OutputPerturbAccountant::OutputPerturbAccountant(const ModelSpec& spec,
                                                 const Dataset& data, double lambda,
                                                 const Params& w_star, double sigma)
    : impl_(std::make_unique<Impl>()) {
  if (!(lambda > 0.0)) throw ConfigError("output perturbation accounting: lambda > 0 required");
  if (!(sigma > 0.0)) throw ConfigError("output perturbation accounting: sigma > 0 required");
  impl_->spec = spec;
  impl_->data = &data;
  impl_->lambda = lambda;
  impl_->sigma = sigma;
  impl_->w_star = w_star.w;

  if (spec.kind == ModelKind::kLogistic) {
    const int64_t n = data.n(), d = data.d();
    Eigen::MatrixXd x(n, d);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < d; ++j) x(i, j) = data.samples[static_cast<size_t>(i)].x[j];
    Eigen::Map<const Eigen::VectorXd> w(impl_->w_star.data(), d);
    const Eigen::VectorXd m = x * w;
    Eigen::VectorXd r(n);
    for (int64_t i = 0; i < n; ++i) {
      const double s = sigmoid(m(i));
      r(i) = s * (1.0 - s);
    }
    Eigen::MatrixXd h = x.transpose() * r.asDiagonal() * x / static_cast<double>(n);
    h.diagonal().array() += lambda;
    Eigen::LLT<Eigen::MatrixXd> llt(h);
    if (llt.info() != Eigen::Success)
      throw NumericError("output perturbation accounting: Hessian not positive definite");
    impl_->hinv = llt.solve(Eigen::MatrixXd::Identity(d, d));
    impl_->hinv_fro2 = impl_->hinv.squaredNorm();
    impl_->hinv_w = impl_->hinv * w;
    impl_->w_norm2 = w.squaredNorm();
    impl_->dense_ready = true;
  }
}

OutputPerturbAccountant::~OutputPerturbAccountant() = default;
OutputPerturbAccountant::OutputPerturbAccountant(OutputPerturbAccountant&&) noexcept =
    default;
OutputPerturbAccountant& OutputPerturbAccountant::operator=(
    OutputPerturbAccountant&&) noexcept = default;

OutputPerturbFim OutputPerturbAccountant::per_sample(int64_t index, bool spectral) const {
  if (!impl_->dense_ready)
    throw ConfigError("closed-form output perturbation FIM requires a logistic model");
  const Dataset& data = *impl_->data;
  if (index < 0 || index >= data.n())
    throw ConfigError("output perturbation FIM: index out of range");
  const Sample& z = data.samples[static_cast<size_t>(index)];
  const int64_t d = data.d();
  const double n = static_cast<double>(data.n());

  Eigen::Map<const Eigen::VectorXd> w(impl_->w_star.data(), d);
  Eigen::Map<const Eigen::VectorXd> xv(z.x.data(), d);
  const double a = w.dot(xv);
  const double s = sigmoid(a);
  const double c1 = s - static_cast<double>(z.label);
  const double c2 = s * (1.0 - s);

  // dw*/dx = -(1/n) (c1 Hinv + c2 (Hinv x) w^T); Frobenius norm squared:
  const Eigen::VectorXd u = impl_->hinv * xv;
  const double cross = u.dot(impl_->hinv_w);  // x^T Hinv^2 w
  const double fro2 = c1 * c1 * impl_->hinv_fro2 + 2.0 * c1 * c2 * cross +
                      c2 * c2 * u.squaredNorm() * impl_->w_norm2;

  OutputPerturbFim out;
  const double inv = 1.0 / (n * n * impl_->sigma * impl_->sigma);
  out.trace = fro2 * inv;
  out.dfil = out.trace / static_cast<double>(d);
  if (spectral) {
    const double scale = 1.0 / (n * impl_->sigma);
    auto apply_a = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
      return -scale * (c1 * (impl_->hinv * v) + c2 * u * w.dot(v));
    };
    auto apply_at = [&](const Eigen::VectorXd& y) -> Eigen::VectorXd {
      return -scale * (c1 * (impl_->hinv * y) + c2 * w * u.dot(y));
    };
    LinearOperator op{d, d, [&](const Tensor& v) {
                        Eigen::Map<const Eigen::VectorXd> vv(v.data(), d);
                        const Eigen::VectorXd r = apply_at(apply_a(vv));
                        Tensor t = Tensor::zeros({d});
                        for (int64_t i = 0; i < d; ++i) t[i] = r(i);
                        return t;
                      }};
    out.spectral = power_iteration(op, 0x5EC7 + static_cast<uint64_t>(index), 200, 1e-9)
                       .eigenvalue;
  }
  return out;
}

OutputPerturbFim OutputPerturbAccountant::per_sample_generic(int64_t index) const {
  const Dataset& data = *impl_->data;
  if (index < 0 || index >= data.n())
    throw ConfigError("output perturbation FIM: index out of range");
  const Sample& z = data.samples[static_cast<size_t>(index)];
  const int64_t d = data.d();
  const double n = static_cast<double>(data.n());
  const Tensor& w = impl_->w_star;
  const int64_t p = w.numel();

  // Regularized objective Hessian as a matrix-free operator.
  LinearOperator hess{p, p, [&](const Tensor& v) {
                        Tensor hv = Tensor::zeros({p});
                        for (const Sample& s : data.samples) {
                          const LossProgram prog(impl_->spec, s.label);
                          axpy(1.0, ad::hessian_vec(prog, w, s.x, v), hv);
                        }
                        scale_inplace(hv, 1.0 / n);
                        axpy(impl_->lambda, v, hv);
                        return hv;
                      }};

  const LossProgram prog(impl_->spec, z.label);
  double trace = 0.0;
  for (int64_t j = 0; j < d; ++j) {
    Tensor e = Tensor::zeros({d});
    e[j] = 1.0;
    Tensor col = ad::input_grad_jvp(prog, w, z.x, e);
    scale_inplace(col, 1.0 / n);
    const Tensor q = solve_spd(hess, col);
    trace += dot(q, q);
  }
  OutputPerturbFim out;
  out.trace = trace / (impl_->sigma * impl_->sigma);
  out.dfil = out.trace / static_cast<double>(d);
  return out;
}

McEstimate mc_fim_1d(const std::vector<double>& squared_scores) {
  if (squared_scores.size() < 1000)
    throw ConfigError("mc_fim_1d: need at least 1000 score samples");
  const double n = static_cast<double>(squared_scores.size());
  double mean = 0.0;
  for (double s : squared_scores) mean += s;
  mean /= n;
  double var = 0.0;
  for (double s : squared_scores) var += (s - mean) * (s - mean);
  var /= (n - 1.0);
  McEstimate out;
  out.mean = mean;
  out.stderr_ = std::sqrt(var / n);
  return out;
}

// ---------------------------------------------------------------------------
// Report assembly.

namespace {

nlohmann::json finite_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

std::string fmt_double(double v) {
  if (!std::isfinite(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void fill_sample_stats(PrivacyReport& rep) {
  if (rep.samples.empty()) return;
  std::sort(rep.samples.begin(), rep.samples.end(),
            [](const SampleRisk& a, const SampleRisk& b) { return a.dfil > b.dfil; });
  double sum = 0.0;
  rep.dfil_min = rep.samples.front().dfil;
  rep.dfil_max = rep.samples.front().dfil;
  for (const SampleRisk& s : rep.samples) {
    sum += s.dfil;
    rep.dfil_min = std::min(rep.dfil_min, s.dfil);
    rep.dfil_max = std::max(rep.dfil_max, s.dfil);
  }
  rep.dfil_mean = sum / static_cast<double>(rep.samples.size());
  rep.fil_mse_bound_min = rep.samples.front().mse_bound_trace;
}

}  // namespace

std::string PrivacyReport::to_json() const {
  nlohmann::json j;
  j["mechanism"] = mechanism;
  j["n"] = n;
  j["d"] = d;
  j["prior_mse"] = prior_mse;
  j["rdp"] = {{"eps2", eps2},
              {"mia_advantage", mia_advantage},
              {"mse_bound", finite_or_null(rdp_mse_bound)},
              {"prior_limited", rdp_prior_limited}};
  nlohmann::json fil;
  fil["kappa_policy"] = kappa_policy;
  fil["kappa"] = kappa_weight;
  fil["eps_step"] = eps_step;
  fil["delta_step"] = delta_step;
  fil["delta_clamped"] = delta_clamped;
  fil["dfil_mean"] = dfil_mean;
  fil["dfil_min"] = dfil_min;
  fil["dfil_max"] = dfil_max;
  fil["mse_bound_most_at_risk"] = finite_or_null(fil_mse_bound_min);
  nlohmann::json rows = nlohmann::json::array();
  for (const SampleRisk& s : samples) {
    nlohmann::json row;
    if (unsafe_reveal) row["index"] = s.index;
    row["visits"] = s.visits;
    row["dfil"] = s.dfil;
    row["mse_bound"] = finite_or_null(s.mse_bound_trace);
    row["prior_limited"] = !(s.mse_bound_trace < prior_mse);
    if (s.mse_bound_spectral)
      row["mse_bound_spectral"] = finite_or_null(*s.mse_bound_spectral);
    rows.push_back(std::move(row));
  }
  fil["samples"] = std::move(rows);
  j["fil"] = std::move(fil);
  j["unsafe_reveal"] = unsafe_reveal;
  return j.dump(2);
}

std::string PrivacyReport::to_csv() const {
  std::ostringstream os;
  os << "rank,index,visits,dfil,mse_bound,mse_bound_spectral\n";
  int64_t rank = 0;
  for (const SampleRisk& s : samples) {
    os << rank++ << ',';
    if (unsafe_reveal) os << s.index;
    os << ',' << s.visits << ',' << fmt_double(s.dfil) << ','
       << fmt_double(s.mse_bound_trace) << ',';
    if (s.mse_bound_spectral) os << fmt_double(*s.mse_bound_spectral);
    os << '\n';
  }
  return os.str();
}

PrivacyReport make_report_output_perturbation(const ModelSpec& spec, const Dataset& data,
                                              double lambda, double sigma,
                                              const Params& w_star, bool spectral,
                                              bool unsafe_reveal) {
  PrivacyReport rep;
  rep.mechanism = "output_perturbation";
  rep.n = data.n();
  rep.d = data.d();
  const double diam = data.box.diameter();
  rep.prior_mse = diam * diam / 12.0;
  rep.unsafe_reveal = unsafe_reveal;

  rep.eps2 = rdp_output_perturbation(data.n(), lambda, sigma);
  rep.mia_advantage = mia_advantage_bound(rep.eps2);
  rep.rdp_mse_bound =
      mse_lower_bound_rdp(rep.eps2, std::vector<double>(static_cast<size_t>(rep.d), diam));
  rep.rdp_prior_limited = !(rep.rdp_mse_bound < rep.prior_mse);
  rep.kappa_policy = "none";
  rep.kappa_weight = 1.0;

  const OutputPerturbAccountant acct(spec, data, lambda, w_star, sigma);
  rep.samples.resize(static_cast<size_t>(rep.n));
  parallel_for(rep.n, [&](int64_t i) {
    const OutputPerturbFim fim = acct.per_sample(i, false);
    SampleRisk& row = rep.samples[static_cast<size_t>(i)];
    row.index = i;
    row.visits = 1;
    row.dfil = fim.dfil;
    row.mse_bound_trace = mse_lower_bound_fil_trace(fim.trace, rep.d);
  });
  fill_sample_stats(rep);
  if (spectral) {
    // Spectral refinement only for the most exposed samples; it costs a power
    // iteration per sample.
    const size_t top = std::min<size_t>(10, rep.samples.size());
    for (size_t k = 0; k < top; ++k) {
      SampleRisk& row = rep.samples[k];
      const OutputPerturbFim fim = acct.per_sample(row.index, true);
      if (fim.spectral)
        row.mse_bound_spectral = mse_lower_bound_fil_spectral(*fim.spectral);
    }
  }
  if (!unsafe_reveal)
    for (SampleRisk& row : rep.samples) row.index = -1;
  return rep;
}

PrivacyReport make_report_dpsgd(const ModelSpec& spec, const Dataset& data,
                                const SgdConfig& cfg, const AccountingParams& params,
                                const FilAccountResult& fil, bool unsafe_reveal) {
  PrivacyReport rep;
  rep.mechanism = "dp_sgd";
  rep.n = data.n();
  rep.d = data.d();
  const double diam = data.box.diameter();
  rep.prior_mse = diam * diam / 12.0;
  rep.unsafe_reveal = unsafe_reveal;

  const double per_step =
      rdp_subsampled_gaussian_alpha2(fil.q, cfg.sigma / kClipOverhead);
  rep.eps2 = static_cast<double>(cfg.iters) * per_step;
  rep.mia_advantage = mia_advantage_bound(rep.eps2);
  rep.rdp_mse_bound =
      mse_lower_bound_rdp(rep.eps2, std::vector<double>(static_cast<size_t>(rep.d), diam));
  rep.rdp_prior_limited = !(rep.rdp_mse_bound < rep.prior_mse);

  rep.kappa_policy = fil.policy == KappaPolicy::kAmplified ? "amplified" : "convex";
  rep.kappa_weight = fil.kappa_weight;
  rep.eps_step = fil.eps_step;
  rep.delta_step = fil.delta.delta_step;
  rep.delta_clamped = fil.delta.clamped;

  rep.samples.resize(fil.per_sample.size());
  for (size_t i = 0; i < fil.per_sample.size(); ++i) {
    const FilEstimate& e = fil.per_sample[i];
    SampleRisk& row = rep.samples[i];
    row.index = static_cast<int64_t>(i);
    row.visits = e.visits;
    row.dfil = e.dfil(rep.d);
    row.mse_bound_trace =
        mse_lower_bound_fil_trace(e.kappa_weight * e.trace_mean(), rep.d);
    if (e.has_spectral)
      row.mse_bound_spectral = mse_lower_bound_fil_spectral(e.eta_sq());
  }
  fill_sample_stats(rep);
  if (!unsafe_reveal)
    for (SampleRisk& row : rep.samples) row.index = -1;
  (void)params;
  return rep;
}

}  // namespace reconbound
