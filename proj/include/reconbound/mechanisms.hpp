#pragma once

// Private release mechanisms. Training uses a smooth surrogate of gradient
// clipping so that each released quantity stays differentiable in the data,
// which the Fisher-information accountant requires.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "reconbound/graph.hpp"
#include "reconbound/models.hpp"
#include "reconbound/rng.hpp"
#include "reconbound/tensor.hpp"

namespace reconbound {

// Exact Gaussian-CDF GELU and its derivative.
double gelu(double x);
double gelu_prime(double x);

// Smooth norm clip: g / (gelu(||g|| / clip - 1) + 1). The factor approaches 1
// well below the threshold and ||g|| / clip above it; the worst-case output
// norm is ~1.11522 * clip (attained near ||g|| = 1.5487 * clip), and a zero
// gradient maps to zero with limiting scale 1 / (gelu(-1) + 1).
template <class S>
TensorT<S> smooth_clip_t(const TensorT<S>& g, double clip) {
  if (!(clip > 0.0)) throw ConfigError("smooth_clip: clip must be positive");
  S ss(0.0);
  for (int64_t i = 0; i < g.numel(); ++i) ss += g[i] * g[i];
  using ad::sqrt;
  const S r = sqrt(ss);
  const S denom = ad::gelu_s(r * S(1.0 / clip) - S(1.0)) + S(1.0);
  TensorT<S> out = g;
  const S inv = S(1.0) / denom;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = out[i] * inv;
  return out;
}

Tensor smooth_clip(const Tensor& g, double clip);

// Scale factor 1 / (gelu(||g||/clip - 1) + 1) at a given gradient norm.
double smooth_clip_factor(double grad_norm, double clip);

struct SgdConfig {
  int64_t iters = 0;        // T
  int64_t batch = 0;        // B, drawn without replacement per step
  double sigma = 1.0;       // noise multiplier; step noise is N(0, sigma^2 clip^2 I)
  double clip = 1.0;
  double lr = 0.1;
  double momentum = 0.5;
  double delta_total = 0.0; // total approximate-DP failure budget (0 = derive from n)
  uint64_t seed = 1;
  bool record_trace = true;
};

struct StepTrace {
  int64_t step = 0;
  std::vector<int64_t> batch;       // realized indices, in draw order
  std::vector<double> grad_norms;   // pre-clip per-sample norms
};

// Called for every batch member before the step's update, with the weights
// the gradient is taken at.
using StepHook =
    std::function<void(int64_t step, int64_t sample_index, const Tensor& w_prev)>;

struct PrivateSgdResult {
  Params params;
  std::vector<StepTrace> trace;
};

// Noisy momentum SGD: per-sample gradients at w_{t-1}, smooth-clipped, summed,
// Gaussian noise N(0, sigma^2 clip^2 I) added to the sum, then divided by the
// batch size. Aborts with NumericError if weights or losses go non-finite.
PrivateSgdResult private_sgd_train(const ModelSpec& spec, const Dataset& data,
                                   const SgdConfig& cfg, const Params& init,
                                   const StepHook& hook = nullptr);

// Regularized ERM followed by an isotropic Gaussian release of the optimum.
struct OutputPerturbation {
  Params w_star;
  double sigma = 0.0;

  Tensor sample(Rng& rng) const {
    Tensor out = w_star.w;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += sigma * rng.next_gaussian();
    return out;
  }
};

OutputPerturbation output_perturbation_train(const ModelSpec& spec, const Dataset& data,
                                             double lambda, double sigma,
                                             double erm_tol = 1e-10);

// Flat float64 little-endian weights plus a JSON sidecar describing the model,
// the step the weights were taken at, and the seed of the producing run.
struct Checkpoint {
  ModelSpec spec;
  Params params;
  int64_t step = 0;
  uint64_t seed = 0;
};

void save_checkpoint(const std::string& path_prefix, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path_prefix);

}  // namespace reconbound
