#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "reconbound/accounting.hpp"
#include "reconbound/errors.hpp"
#include "reconbound/linalg.hpp"
#include "reconbound/mechanisms.hpp"
#include "reconbound/models.hpp"
#include "reconbound/rng.hpp"

using namespace reconbound;

namespace {

ModelSpec logistic_spec(int64_t d) {
  ModelSpec s;
  s.kind = ModelKind::kLogistic;
  s.input_dim = d;
  return s;
}

Dataset blob_dataset(int64_t n_per_class, int64_t d, uint64_t seed) {
  Dataset data;
  data.box = Box{0.0, 1.0};
  Rng r(seed);
  for (int64_t i = 0; i < n_per_class; ++i) {
    for (int label = 0; label < 2; ++label) {
      Sample z;
      z.x = Tensor::zeros({d});
      const double center = label == 0 ? 0.3 : 0.7;
      for (int64_t j = 0; j < d; ++j)
        z.x[j] = std::clamp(center + 0.1 * r.next_gaussian(), 0.0, 1.0);
      z.label = label;
      data.samples.push_back(std::move(z));
    }
  }
  return data;
}

double gaussian_pdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * M_PI));
}

// The clipped per-sample gradient as a plain function of the features,
// used to build finite-difference Jacobian oracles.
Tensor clipped_grad(const ModelSpec& spec, const Tensor& w, int label, double clip,
                    const Tensor& x) {
  Sample z;
  z.x = x;
  z.label = label;
  Tensor g = per_sample_grad(spec, w, z);
  scale_inplace(g, smooth_clip_factor(norm2(g), clip));
  return g;
}

}  // namespace

TEST_SUITE("accounting") {

TEST_CASE("order-2 renyi constant of the perturbed optimum") {
  CHECK(rdp_output_perturbation(100, 0.1, 0.5) == doctest::Approx(0.16).epsilon(1e-14));
  // scales as the inverse square of each factor
  CHECK(rdp_output_perturbation(200, 0.1, 0.5) ==
        doctest::Approx(0.04).epsilon(1e-14));
  CHECK_THROWS_AS((void)rdp_output_perturbation(0, 0.1, 0.5), ConfigError);
  CHECK_THROWS_AS((void)rdp_output_perturbation(10, -1.0, 0.5), ConfigError);
}

TEST_CASE("subsampled gaussian order-2 renyi matches quadrature") {
  // epsilon_2 = log E_{P0}[(P1/P0)^2] with P0 = N(0, s^2),
  // P1 = (1-q) N(0, s^2) + q N(1, s^2).
  for (const auto& [q, s] : std::vector<std::pair<double, double>>{
           {0.05, 1.2}, {0.2, 0.8}, {0.01, 2.0}}) {
    const auto integrand = [&](double x) {
      const double p0 = gaussian_pdf(x, 0.0, s);
      const double p1 = (1.0 - q) * p0 + q * gaussian_pdf(x, 1.0, s);
      return p1 * p1 / p0;
    };
    const double moment = oracles::integrate(integrand, -14.0 * s, 1.0 + 14.0 * s);
    const double got = rdp_subsampled_gaussian_alpha2(q, s);
    // The integrator's error is absolute, so compare on the moment scale:
    // near-zero epsilons would otherwise inflate the relative error.
    CHECK(oracles::rel_err(std::exp(got), moment) < 1e-10);
  }
  CHECK_THROWS_AS((void)rdp_subsampled_gaussian_alpha2(0.0, 1.0), ConfigError);
  CHECK_THROWS_AS((void)rdp_subsampled_gaussian_alpha2(0.5, 0.0), ConfigError);
}

TEST_CASE("subsampled gaussian renyi survives extreme noise ratios") {
  const double q = 1e-3;
  // Just above the internal switch the direct formula is still representable:
  // both evaluations must agree.
  for (double x : {480.0, 510.0, 560.0}) {
    const double sigma_eff = 1.0 / std::sqrt(x);
    const double direct = std::log1p(q * q * std::expm1(x));
    CHECK(oracles::rel_err(rdp_subsampled_gaussian_alpha2(q, sigma_eff), direct) <
          1e-12);
  }
  // Far beyond double overflow of e^x the asymptote is x + 2 log q.
  const double x = 2000.0;
  const double got = rdp_subsampled_gaussian_alpha2(q, 1.0 / std::sqrt(x));
  CHECK(std::isfinite(got));
  CHECK(oracles::rel_err(got, x + 2.0 * std::log(q)) < 1e-13);
}

TEST_CASE("membership advantage bound is tanh(eps/2)") {
  for (double eps : {0.01, 0.3, 1.0, 2.49, 10.0}) {
    const double want = std::expm1(eps) / (std::exp(eps) + 1.0);
    CHECK(oracles::rel_err(mia_advantage_bound(eps), want) < 1e-13);
    CHECK(oracles::rel_err(mia_advantage_bound(eps), std::tanh(0.5 * eps)) < 1e-13);
  }
  CHECK(mia_advantage_bound(0.0) == 0.0);
  CHECK_THROWS_AS((void)mia_advantage_bound(-0.1), ConfigError);
}

TEST_CASE("renyi mse floor with weights and bias") {
  const std::vector<double> diam{1.0, 2.0, 3.0};
  const double eps = 1.0;
  const double base = (1.0 + 4.0 + 9.0) / (4.0 * 3.0 * std::expm1(1.0));
  CHECK(oracles::rel_err(mse_lower_bound_rdp(eps, diam), base) < 1e-13);

  const std::vector<double> gamma{0.5, 0.5, 0.5};
  CHECK(oracles::rel_err(mse_lower_bound_rdp(eps, diam, gamma), 0.25 * base) < 1e-13);

  const std::vector<double> bias{0.1, 0.1, 0.1};
  CHECK(oracles::rel_err(mse_lower_bound_rdp(eps, diam, {}, bias), base + 0.01) <
        1e-12);

  CHECK_THROWS_AS((void)mse_lower_bound_rdp(0.0, diam), ConfigError);
  CHECK_THROWS_AS((void)mse_lower_bound_rdp(1.0, diam, {0.5}), ConfigError);
  CHECK_THROWS_AS((void)mse_lower_bound_rdp(1.0, {}), ConfigError);
}

TEST_CASE("per-step dp epsilon and the delta budget split") {
  const double sigma = 4.0, delta = 1e-5;
  const double want =
      kClipOverhead * 2.0 * std::sqrt(2.0 * std::log(1.25 / delta)) / sigma;
  CHECK(step_epsilon_dp(sigma, delta) == doctest::Approx(want).epsilon(1e-14));
  CHECK(kClipOverhead == 1.115);

  DeltaBudget b = delta_budget(1000, 10000, 0.01);
  CHECK(!b.clamped);
  CHECK(oracles::rel_err(b.delta_step, 1e-4 / (10000.0 * 0.01 * 1000.0)) < 1e-14);

  b = delta_budget(10, 100, 0.1, 1e-3);
  CHECK(oracles::rel_err(b.delta_step, 1e-3 / 100.0) < 1e-14);

  // Tiny runs exceed the cap and get clamped.
  b = delta_budget(1, 10, 0.5);
  CHECK(b.clamped);
  CHECK(b.delta_step == 1e-2);

  CHECK_THROWS_AS((void)delta_budget(0, 10, 0.5), ConfigError);
  CHECK_THROWS_AS((void)step_epsilon_dp(0.0, 1e-5), ConfigError);
}

TEST_CASE("subsampling weight kappa") {
  CHECK(kappa(0.1, 0.0) == doctest::Approx(0.1).epsilon(1e-14));
  const double q = 0.01, eps = 1.23;
  const double want = q / (q + (1.0 - q) * std::exp(-eps));
  CHECK(oracles::rel_err(kappa(q, eps), want) < 1e-14);
  CHECK(kappa(q, eps) > q);
  CHECK(kappa(q, eps) < 1.0);
  CHECK(kappa(q, 80.0) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(kappa(1.0, 2.0) == 1.0);
}

TEST_CASE("two-point gaussian information floor") {
  // Exact at delta = 0 (the unbiased limit) and continuous near it.
  CHECK(hcrb_gaussian(0.0, 1.5) == doctest::Approx(2.25).epsilon(1e-14));
  const double tiny = hcrb_gaussian(1e-7, 1.0);
  const double direct = 1e-14 / std::expm1(1e-14);
  CHECK(oracles::rel_err(tiny, direct) < 1e-10);
  // General point.
  const double delta = 2.0, sigma = 1.5;
  const double x = delta * delta / (sigma * sigma);
  CHECK(oracles::rel_err(hcrb_gaussian(delta, sigma), delta * delta / std::expm1(x)) <
        1e-13);
  // Monotone decreasing in the separation.
  CHECK(hcrb_gaussian(0.5, 1.0) > hcrb_gaussian(1.0, 1.0));
  CHECK(hcrb_gaussian(1.0, 1.0) > hcrb_gaussian(2.0, 1.0));
  CHECK_THROWS_AS((void)hcrb_gaussian(-1.0, 1.0), ConfigError);
}

TEST_CASE("exact per-step information trace matches a finite-difference jacobian") {
  const int64_t d = 6;
  const ModelSpec spec = logistic_spec(d);
  Rng r(71);
  const Tensor w = r.gaussian_vector(d, 0.6);
  Sample z;
  z.x = r.gaussian_vector(d, 0.5);
  z.label = 1;
  const double clip = 0.8, noise_std = 0.4;

  Rng probe(5);
  const TraceEstimate est =
      per_step_fim_trace(spec, w, z, clip, noise_std, 64, probe);
  CHECK(est.exact);
  CHECK(est.coords == d);

  const Tensor jac = oracles::fd_jacobian(
      [&](const Tensor& x) { return clipped_grad(spec, w, z.label, clip, x); }, z.x);
  double fro = 0.0;
  for (int64_t i = 0; i < jac.numel(); ++i) fro += jac[i] * jac[i];
  CHECK(oracles::rel_err(est.value, fro / (noise_std * noise_std)) < 1e-5);
}

TEST_CASE("sampled trace probes are unbiased") {
  const int64_t d = 6;
  const ModelSpec spec = logistic_spec(d);
  Rng r(73);
  const Tensor w = r.gaussian_vector(d, 0.5);
  Sample z;
  z.x = r.gaussian_vector(d, 0.6);
  z.label = 0;
  const double clip = 1.0, noise_std = 0.5;

  Rng exact_rng(1);
  const double exact =
      per_step_fim_trace(spec, w, z, clip, noise_std, d, exact_rng).value;

  double mean = 0.0;
  const int reps = 400;
  Rng seeds(91);
  for (int k = 0; k < reps; ++k) {
    Rng probe(seeds.next_u64());
    const TraceEstimate est = per_step_fim_trace(spec, w, z, clip, noise_std, 2, probe);
    CHECK(!est.exact);
    CHECK(est.coords == 2);
    mean += est.value;
  }
  mean /= reps;
  CHECK(oracles::rel_err(mean, exact) < 0.12);
}

TEST_CASE("per-step spectral estimate matches a dense eigensolve") {
  const ModelSpec spec = logistic_spec(5);
  Rng r(79);
  const Tensor w = r.gaussian_vector(5, 0.7);
  Sample z;
  z.x = r.gaussian_vector(5, 0.6);
  z.label = 1;
  const double clip = 0.6, noise_std = 0.3;

  const SpectralEstimate est =
      per_step_fil_spectral(spec, w, z, clip, noise_std, 17);
  CHECK(est.converged);

  const Tensor jac = oracles::fd_jacobian(
      [&](const Tensor& x) { return clipped_grad(spec, w, z.label, clip, x); }, z.x);
  const int64_t d = 5;
  Tensor fim = Tensor::zeros({d, d});
  for (int64_t i = 0; i < d; ++i)
    for (int64_t j = 0; j < d; ++j) {
      double s = 0.0;
      for (int64_t k = 0; k < d; ++k) s += jac[k * d + i] * jac[k * d + j];
      fim[i * d + j] = s / (noise_std * noise_std);
    }
  const std::vector<double> evs = symmetric_eigenvalues(fim);
  const double top = *std::max_element(evs.begin(), evs.end());
  CHECK(oracles::rel_err(est.value, top) < 1e-5);

  // The trace dominates the top eigenvalue for a PSD matrix.
  Rng probe(3);
  const double trace = per_step_fim_trace(spec, w, z, clip, noise_std, d, probe).value;
  CHECK(trace >= est.value - 1e-12);
}

TEST_CASE("mlp per-step trace agrees with finite differences too") {
  ModelSpec spec;
  spec.kind = ModelKind::kTanhMlp;
  spec.input_dim = 3;
  spec.hidden = {4};
  spec.num_classes = 2;
  Rng r(83);
  const Tensor w = r.gaussian_vector(spec.param_count(), 0.5);
  Sample z;
  z.x = r.gaussian_vector(3, 0.7);
  z.label = 1;
  const double clip = 0.9, noise_std = 0.6;
  Rng probe(7);
  const TraceEstimate est = per_step_fim_trace(spec, w, z, clip, noise_std, 3, probe);
  CHECK(est.exact);
  const Tensor jac = oracles::fd_jacobian(
      [&](const Tensor& x) { return clipped_grad(spec, w, z.label, clip, x); }, z.x);
  double fro = 0.0;
  for (int64_t i = 0; i < jac.numel(); ++i) fro += jac[i] * jac[i];
  CHECK(oracles::rel_err(est.value, fro / (noise_std * noise_std)) < 1e-5);
}

TEST_CASE("information-to-mse conversions") {
  CHECK(mse_lower_bound_fil_trace(8.0, 4) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(std::isinf(mse_lower_bound_fil_trace(0.0, 4)));
  CHECK(mse_lower_bound_fil_spectral(4.0) == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(std::isinf(mse_lower_bound_fil_spectral(0.0)));
  CHECK_THROWS_AS((void)mse_lower_bound_fil_trace(-1.0, 4), ConfigError);
  CHECK_THROWS_AS((void)mse_lower_bound_fil_trace(1.0, 0), ConfigError);
}

TEST_CASE("biased bound is tight for the linear shrinkage estimator") {
  // Observe o = x + N(0, s^2 I), estimate a*o. The bound must equal the
  // estimator's true risk a^2 s^2 + (a-1)^2 ||x||^2 / d.
  const int64_t d = 4;
  const double a = 0.7, s = 1.3;
  Rng r(101);
  const Tensor x = r.gaussian_vector(d, 2.0);
  Tensor fim = Tensor::zeros({d, d});
  Tensor bias_jac = Tensor::zeros({d, d});
  for (int64_t i = 0; i < d; ++i) {
    fim[i * d + i] = 1.0 / (s * s);
    bias_jac[i * d + i] = a - 1.0;
  }
  Tensor bias = x;
  scale_inplace(bias, a - 1.0);
  const double want = a * a * s * s + (a - 1.0) * (a - 1.0) * dot(x, x) / double(d);
  CHECK(oracles::rel_err(mse_lower_bound_fil_general(fim, bias_jac, bias), want) <
        1e-12);
  // Unbiased special case collapses to the trace bound d / tr(F) only for
  // isotropic F; check the identity-bias route equals tr(F^{-1}) / d.
  const Tensor zero_jac = Tensor::zeros({d, d});
  const Tensor zero_bias = Tensor::zeros({d});
  CHECK(oracles::rel_err(mse_lower_bound_fil_general(fim, zero_jac, zero_bias),
                         s * s) < 1e-12);
  CHECK_THROWS_AS(
      (void)mse_lower_bound_fil_general(Tensor::zeros({d, d}), zero_jac, zero_bias),
      NumericError);
}

TEST_CASE("released-optimum information: closed form, generic solves, retraining") {
  const int64_t d = 5;
  const ModelSpec spec = logistic_spec(d);
  const Dataset data = blob_dataset(15, d, 103);  // n = 30
  const double lambda = 0.1, sigma = 0.3;
  ErmOptions opts;
  opts.lambda = lambda;
  opts.tol = 1e-12;
  const ErmResult erm = train_erm(spec, data, opts);

  const OutputPerturbAccountant acct(spec, data, lambda, erm.params, sigma);
  for (int64_t j : {0, 7, 29}) {
    const OutputPerturbFim closed = acct.per_sample(j);
    const OutputPerturbFim generic = acct.per_sample_generic(j);
    CHECK(oracles::rel_err(closed.trace, generic.trace) < 1e-8);
    CHECK(closed.dfil == doctest::Approx(closed.trace / double(d)).epsilon(1e-12));
  }

  // Independent oracle: differentiate the retrained optimum itself.
  const int64_t target = 3;
  Tensor jac = Tensor::zeros({d, d});  // dw*/dx_target
  const double h = 1e-4;
  for (int64_t k = 0; k < d; ++k) {
    Dataset bumped = data;
    bumped.samples[target].x[k] += h;
    const Tensor wp = train_erm(spec, bumped, opts).params.w;
    bumped.samples[target].x[k] -= 2.0 * h;
    const Tensor wm = train_erm(spec, bumped, opts).params.w;
    for (int64_t i = 0; i < d; ++i) jac[i * d + k] = (wp[i] - wm[i]) / (2.0 * h);
  }
  double fro = 0.0;
  for (int64_t i = 0; i < jac.numel(); ++i) fro += jac[i] * jac[i];
  const double fd_trace = fro / (sigma * sigma);
  const OutputPerturbFim got = acct.per_sample(target, true);
  CHECK(oracles::rel_err(got.trace, fd_trace) < 5e-3);
  REQUIRE(got.spectral.has_value());
  CHECK(*got.spectral <= got.trace + 1e-12);
  CHECK(*got.spectral > 0.0);

  CHECK_THROWS_AS((void)acct.per_sample(-1), ConfigError);
  CHECK_THROWS_AS((void)acct.per_sample(30), ConfigError);
}

TEST_CASE("monte-carlo scalar information estimate") {
  CHECK_THROWS_AS((void)mc_fim_1d(std::vector<double>(999, 1.0)), ConfigError);
  const double sigma = 2.0;
  Rng r(107);
  std::vector<double> sq;
  sq.reserve(4000);
  for (int i = 0; i < 4000; ++i) {
    const double score = (sigma * r.next_gaussian()) / (sigma * sigma);
    sq.push_back(score * score);
  }
  const McEstimate est = mc_fim_1d(sq);
  CHECK(est.stderr_ > 0.0);
  CHECK(std::abs(est.mean - 1.0 / (sigma * sigma)) < 4.0 * est.stderr_);
  // The standard error itself should be near sqrt(2 / sigma^4 / n).
  CHECK(oracles::rel_err(est.stderr_, std::sqrt(2.0 / 4000.0) / (sigma * sigma)) <
        0.15);
}

TEST_CASE("trajectory accountant composes per-visit traces deterministically") {
  const int64_t d = 3;
  const ModelSpec spec = logistic_spec(d);
  const Dataset data = blob_dataset(5, d, 109);  // n = 10
  SgdConfig cfg;
  cfg.iters = 3;
  cfg.batch = 4;
  cfg.sigma = 1.0;
  cfg.clip = 1.0;
  cfg.seed = 2;
  AccountingParams params;
  params.runs = 2;
  params.coord_samples = 3;  // == d, exact sweeps
  params.seed = 11;
  params.policy = KappaPolicy::kAmplified;

  const FilAccountResult res = fil_accountant_run(spec, data, cfg, params);
  REQUIRE(res.per_sample.size() == 10);
  CHECK(res.q == doctest::Approx(0.4).epsilon(1e-14));
  CHECK(res.eps_step > 0.0);
  CHECK(res.delta.delta_step > 0.0);
  CHECK(res.kappa_weight > res.q);
  CHECK(res.kappa_weight < 1.0);
  CHECK(res.final_params.w.numel() == d);

  int64_t visits = 0;
  for (const FilEstimate& e : res.per_sample) {
    visits += e.visits;
    CHECK(e.trace_sum >= 0.0);
    CHECK(e.runs == 2);
    CHECK(e.kappa_weight == doctest::Approx(res.kappa_weight).epsilon(1e-14));
  }
  CHECK(visits == 2 * 3 * 4);  // runs * iters * batch

  // Bitwise reproducible.
  const FilAccountResult res2 = fil_accountant_run(spec, data, cfg, params);
  for (size_t i = 0; i < res.per_sample.size(); ++i) {
    CHECK(res.per_sample[i].trace_sum == res2.per_sample[i].trace_sum);
    CHECK(res.per_sample[i].visits == res2.per_sample[i].visits);
  }

  // Convex policy uses weight exactly one.
  params.policy = KappaPolicy::kConvex;
  const FilAccountResult conv = fil_accountant_run(spec, data, cfg, params);
  CHECK(conv.kappa_weight == 1.0);
  for (size_t i = 0; i < conv.per_sample.size(); ++i) {
    // Same trajectories, same raw sums; only the weight changes.
    CHECK(conv.per_sample[i].trace_sum == res.per_sample[i].trace_sum);
    CHECK(conv.per_sample[i].dfil(d) >= res.per_sample[i].dfil(d));
  }
}

TEST_CASE("accountant results do not depend on the thread count") {
  const int64_t d = 3;
  const ModelSpec spec = logistic_spec(d);
  const Dataset data = blob_dataset(4, d, 113);
  SgdConfig cfg;
  cfg.iters = 2;
  cfg.batch = 3;
  cfg.seed = 4;
  AccountingParams params;
  params.runs = 2;
  params.coord_samples = 2;
  params.spectral = true;

  setenv("RECONBOUND_THREADS", "1", 1);
  const FilAccountResult one = fil_accountant_run(spec, data, cfg, params);
  setenv("RECONBOUND_THREADS", "4", 1);
  const FilAccountResult four = fil_accountant_run(spec, data, cfg, params);
  unsetenv("RECONBOUND_THREADS");
  for (size_t i = 0; i < one.per_sample.size(); ++i) {
    CHECK(one.per_sample[i].trace_sum == four.per_sample[i].trace_sum);
    CHECK(one.per_sample[i].spectral_sum == four.per_sample[i].spectral_sum);
    CHECK(one.per_sample[i].visits == four.per_sample[i].visits);
  }
}

TEST_CASE("reports: values, redaction and byte-stable serialization") {
  const int64_t d = 4;
  const ModelSpec spec = logistic_spec(d);
  const Dataset data = blob_dataset(6, d, 127);  // n = 12
  const double lambda = 0.1, sigma = 0.5;
  ErmOptions opts;
  opts.lambda = lambda;
  opts.tol = 1e-10;
  const ErmResult erm = train_erm(spec, data, opts);

  const PrivacyReport rep = make_report_output_perturbation(
      spec, data, lambda, sigma, erm.params, false, true);
  CHECK(rep.mechanism == "output_perturbation");
  CHECK(rep.n == 12);
  CHECK(rep.d == d);
  CHECK(oracles::rel_err(rep.eps2, rdp_output_perturbation(12, lambda, sigma)) <
        1e-14);
  CHECK(oracles::rel_err(rep.prior_mse, 1.0 / 12.0) < 1e-14);
  CHECK(oracles::rel_err(rep.mia_advantage, std::tanh(0.5 * rep.eps2)) < 1e-13);
  REQUIRE(rep.samples.size() == 12);
  // Revealed indices are a permutation of the dataset.
  std::vector<int64_t> idx;
  for (const SampleRisk& sr : rep.samples) idx.push_back(sr.index);
  std::sort(idx.begin(), idx.end());
  for (int64_t i = 0; i < 12; ++i) CHECK(idx[size_t(i)] == i);
  // Sorted by descending per-dimension information.
  for (size_t i = 1; i < rep.samples.size(); ++i)
    CHECK(rep.samples[i - 1].dfil >= rep.samples[i].dfil);
  CHECK(oracles::rel_err(rep.fil_mse_bound_min, rep.samples.front().mse_bound_trace) <
        1e-14);

  // Redaction strips indices everywhere.
  const PrivacyReport hid = make_report_output_perturbation(
      spec, data, lambda, sigma, erm.params, false, false);
  for (const SampleRisk& sr : hid.samples) CHECK(sr.index == -1);
  CHECK(hid.to_csv().find(",,") != std::string::npos);

  // Deterministic serialization.
  CHECK(rep.to_json() == make_report_output_perturbation(spec, data, lambda, sigma,
                                                         erm.params, false, true)
                             .to_json());
  const std::string csv = rep.to_csv();
  CHECK(csv.rfind("rank,index,visits,dfil,mse_bound,mse_bound_spectral", 0) == 0);
}

TEST_CASE("noisy-sgd report composes the step renyi bound") {
  const int64_t d = 3;
  const ModelSpec spec = logistic_spec(d);
  const Dataset data = blob_dataset(5, d, 131);  // n = 10
  SgdConfig cfg;
  cfg.iters = 3;
  cfg.batch = 4;
  cfg.sigma = 1.5;
  cfg.clip = 1.0;
  cfg.seed = 6;
  AccountingParams params;
  params.runs = 2;
  params.coord_samples = 3;
  const FilAccountResult fil = fil_accountant_run(spec, data, cfg, params);
  const PrivacyReport rep = make_report_dpsgd(spec, data, cfg, params, fil, true);
  CHECK(rep.mechanism == "dp_sgd");
  const double eps_want =
      3.0 * rdp_subsampled_gaussian_alpha2(0.4, cfg.sigma / kClipOverhead);
  CHECK(oracles::rel_err(rep.eps2, eps_want) < 1e-13);
  CHECK(rep.kappa_policy == "amplified");
  CHECK(rep.kappa_weight == doctest::Approx(fil.kappa_weight).epsilon(1e-14));
  CHECK(rep.delta_step == doctest::Approx(fil.delta.delta_step).epsilon(1e-14));
  REQUIRE(rep.samples.size() == 10);
  // json parses and tags the mechanism.
  CHECK(rep.to_json().find("\"mechanism\": \"dp_sgd\"") != std::string::npos);
}

}  // TEST_SUITE("accounting")
