#pragma once

// Privacy accounting on two axes, and their conversion to lower bounds on the
// per-dimension mean squared error of any data reconstruction attack:
//
//  * order-2 Renyi differential privacy (RDP), composed analytically;
//  * Fisher information leakage (FIL), accumulated per released quantity
//    along the realized training trajectory and averaged over reruns.
//
// The FIL accountant treats each noisy gradient step as a Gaussian channel
// whose mean is the smooth-clipped per-sample gradient; its Fisher
// information with respect to one sample's features is J^T J / noise_var for
// J the input Jacobian of that clipped gradient. Subsampling is handled
// either by convexity (weight 1) or by an amplification weight kappa < 1
// that requires a per-step DP guarantee.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "reconbound/linalg.hpp"
#include "reconbound/mechanisms.hpp"
#include "reconbound/models.hpp"
#include "reconbound/rng.hpp"
#include "reconbound/tensor.hpp"

namespace reconbound {

// ---------------------------------------------------------------------------
// Closed-form RDP quantities.

// Order-2 RDP of releasing the regularized ERM optimum of a GLM (unit-norm
// features) plus N(0, sigma^2 I): 4 / (n lambda sigma)^2.
double rdp_output_perturbation(int64_t n, double lambda, double sigma);

// Order-2 RDP of one subsampled Gaussian release with sampling rate q and
// noise-to-sensitivity ratio sigma_eff: log(1 + q^2 (e^{1/sigma_eff^2} - 1)).
double rdp_subsampled_gaussian_alpha2(double q, double sigma_eff);

// Worst-case clip overhead: sup_r r / (gelu(r - 1) + 1), the constant that
// converts a clip threshold into an L2 sensitivity.
inline constexpr double kClipOverhead = 1.115;

// Membership-inference advantage bound (e^eps - 1) / (e^eps + 1) implied by
// (2, eps)-RDP.
double mia_advantage_bound(double eps);

// Per-dimension MSE lower bound from (2, eps)-RDP against a product prior
// supported on per-dimension intervals of the given diameters:
//   sum_i gamma_i^2 diam_i^2 / (4 d (e^eps - 1)) + ||bias||^2 / d.
// gamma defaults to all ones, bias to zero.
double mse_lower_bound_rdp(double eps2, const std::vector<double>& diam,
                           const std::vector<double>& gamma = {},
                           const std::vector<double>& bias = {});

// ---------------------------------------------------------------------------
// Gaussian DP step bookkeeping for noisy SGD.

// Approximate-DP epsilon of one noisy step with noise multiplier sigma:
// 2 * kClipOverhead * sqrt(2 ln(1.25/delta)) / sigma.
double step_epsilon_dp(double sigma, double delta_step);

struct DeltaBudget {
  double delta_step = 0.0;
  bool clamped = false;  // true if the raw budget exceeded the 1e-2 cap
};

// Splits a total failure budget (default 1/n) uniformly over the expected
// n * q * T sample participations of a run.
DeltaBudget delta_budget(int64_t iters, int64_t n, double q, double delta_total = 0.0);

// Subsampling amplification weight q / (q + (1 - q) e^{-eps_step}).
double kappa(double q, double eps_step);

enum class KappaPolicy { kConvex, kAmplified };

// ---------------------------------------------------------------------------
// Per-step FIL estimators.

struct TraceEstimate {
  double value = 0.0;
  int coords = 0;      // coordinate probes used
  bool exact = false;  // full sweep instead of sampling
};

// Trace of the FIM of one noisy-gradient release with respect to the sample's
// features. Probes columns of the clipped-gradient input Jacobian with
// coordinate JVPs; with coord_samples >= d the sweep is exhaustive and exact,
// otherwise coordinates are drawn uniformly with replacement and the sum is
// rescaled by d / m (unbiased).
TraceEstimate per_step_fim_trace(const ModelSpec& spec, const Tensor& w,
                                 const Sample& z, double clip, double noise_std,
                                 int coord_samples, Rng& rng);

struct SpectralEstimate {
  double value = 0.0;  // largest eigenvalue of the per-step FIM
  bool converged = false;
  int iterations = 0;
};

// Largest eigenvalue of the same per-step FIM via matrix-free power iteration
// on J~^T J~ / noise_std^2. The transposed action reuses the forward dual
// sweep plus an analytic correction for the clip factor's own data
// dependence, so no second-order reverse pass is needed.
SpectralEstimate per_step_fil_spectral(const ModelSpec& spec, const Tensor& w,
                                       const Sample& z, double clip, double noise_std,
                                       uint64_t seed, int max_iters = 80,
                                       double tol = 1e-6);

// ---------------------------------------------------------------------------
// Composition over a training run.

struct FilEstimate {
  double trace_sum = 0.0;     // sum of per-step trace estimates over all runs
  double spectral_sum = 0.0;  // sum of per-step spectral estimates over all runs
  int64_t visits = 0;         // total participations across runs
  int runs = 0;
  double kappa_weight = 1.0;
  bool has_spectral = false;

  double trace_mean() const { return runs > 0 ? trace_sum / runs : 0.0; }
  double spectral_mean() const { return runs > 0 ? spectral_sum / runs : 0.0; }
  // Average per-dimension diagonal of the kappa-weighted accumulated FIM.
  double dfil(int64_t d) const {
    return d > 0 ? kappa_weight * trace_mean() / static_cast<double>(d) : 0.0;
  }
  // Upper bound on the top eigenvalue of the accumulated FIM.
  double eta_sq() const { return kappa_weight * spectral_mean(); }
};

struct AccountingParams {
  KappaPolicy policy = KappaPolicy::kAmplified;
  int coord_samples = 50;  // m in the trace estimator
  int runs = 10;           // reruns averaged over mechanism randomness
  bool spectral = false;   // also accumulate per-step spectral norms
  int power_iters = 80;
  double power_tol = 1e-6;
  uint64_t seed = 7;
};

struct FilAccountResult {
  std::vector<FilEstimate> per_sample;  // indexed like the dataset
  double q = 0.0;
  double eps_step = 0.0;
  DeltaBudget delta;
  double kappa_weight = 1.0;
  KappaPolicy policy = KappaPolicy::kAmplified;
  Params final_params;  // from the first accounted run
};

// Runs the private trainer `params.runs` times (independent noise, batches
// and init per run), accumulating each sample's per-step FIM contributions at
// every step it participates in. The returned estimates compose by summation
// along the trajectory; averaging over runs estimates the expectation over
// the mechanism's own randomness.
FilAccountResult fil_accountant_run(const ModelSpec& spec, const Dataset& data,
                                    const SgdConfig& cfg,
                                    const AccountingParams& params);

// ---------------------------------------------------------------------------
// FIL-side bounds.

// Unbiased Cramer-Rao style bound: per-dimension MSE >= d / trace. Returns
// +inf when the trace is zero (perfect privacy).
double mse_lower_bound_fil_trace(double trace, int64_t d);

// Spectral variant: per-dimension MSE >= 1 / eta_sq.
double mse_lower_bound_fil_spectral(double eta_sq);

// Biased estimators, dense small-d case: with bias b(x) and its Jacobian B,
// MSE >= ( tr[(I + B) F^{-1} (I + B)^T] + ||b||^2 ) / d for FIM F.
double mse_lower_bound_fil_general(const Tensor& fim, const Tensor& bias_jac,
                                   const Tensor& bias);

// Hammersley-Chapman-Robbins floor for a Gaussian channel at separation
// delta: delta^2 / (e^{delta^2 / sigma^2} - 1); continuous at delta = 0 where
// it equals sigma^2 (the Cramer-Rao value).
double hcrb_gaussian(double delta, double sigma);

// ---------------------------------------------------------------------------
// Output perturbation FIM via the implicit function theorem.

struct OutputPerturbFim {
  double trace = 0.0;
  double dfil = 0.0;
  std::optional<double> spectral;
};

// Shared precomputation for a dataset/model pair: dense regularized Hessian
// at the ERM optimum, its Cholesky factorization and inverse.
class OutputPerturbAccountant {
 public:
  OutputPerturbAccountant(const ModelSpec& spec, const Dataset& data, double lambda,
                          const Params& w_star, double sigma);
  ~OutputPerturbAccountant();
  OutputPerturbAccountant(OutputPerturbAccountant&&) noexcept;
  OutputPerturbAccountant& operator=(OutputPerturbAccountant&&) noexcept;

  // FIM of the released optimum with respect to sample `index`'s features.
  // Logistic models use a closed-form rank-structured path; `spectral`
  // additionally runs power iteration on the sensitivity map.
  OutputPerturbFim per_sample(int64_t index, bool spectral = false) const;

  // Generic path: d SPD solves against the implicit-function system. Exact
  // for any model; O(d) solves, so intended for small dimensions and as a
  // cross-check of the closed form.
  OutputPerturbFim per_sample_generic(int64_t index) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Monte-Carlo FIM of a scalar release: mean and standard error of squared
// score samples. Demands at least 1000 draws.
struct McEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
};
McEstimate mc_fim_1d(const std::vector<double>& squared_scores);

// ---------------------------------------------------------------------------
// Report assembly.

struct SampleRisk {
  int64_t index = -1;  // -1 when redacted
  int64_t visits = 0;
  double dfil = 0.0;
  double mse_bound_trace = 0.0;
  std::optional<double> mse_bound_spectral;
};

struct PrivacyReport {
  std::string mechanism;
  int64_t n = 0, d = 0;
  double prior_mse = 0.0;  // uniform-prior MSE of the midpoint guess
  // RDP side
  double eps2 = 0.0;
  double mia_advantage = 0.0;
  double rdp_mse_bound = 0.0;
  bool rdp_prior_limited = false;
  // FIL side
  std::string kappa_policy;
  double kappa_weight = 1.0;
  double eps_step = 0.0;
  double delta_step = 0.0;
  bool delta_clamped = false;
  double dfil_mean = 0.0, dfil_min = 0.0, dfil_max = 0.0;
  double fil_mse_bound_min = 0.0;  // most-at-risk sample
  std::vector<SampleRisk> samples;  // sorted by descending dfil
  bool unsafe_reveal = false;

  std::string to_json() const;  // deterministic byte-for-byte given same values
  std::string to_csv() const;   // one row per sample
};

PrivacyReport make_report_output_perturbation(const ModelSpec& spec, const Dataset& data,
                                              double lambda, double sigma,
                                              const Params& w_star,
                                              bool spectral, bool unsafe_reveal);

PrivacyReport make_report_dpsgd(const ModelSpec& spec, const Dataset& data,
                                const SgdConfig& cfg, const AccountingParams& params,
                                const FilAccountResult& fil, bool unsafe_reveal);

}  // namespace reconbound
