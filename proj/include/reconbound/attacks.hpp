#pragma once

// Reconstruction attacks against released model weights, and the harness that
// turns an attack into an empirical MSE estimate. The GLM attack plays the
// informed adversary: it knows the training recipe and every sample except
// the target's features, and inverts the first-order stationarity condition
// of the regularized ERM objective.

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>

#include "reconbound/models.hpp"
#include "reconbound/rng.hpp"
#include "reconbound/tensor.hpp"

namespace reconbound {

using ReleaseSampler = std::function<Tensor(Rng&)>;
using Reconstructor = std::function<Tensor(const Tensor& release)>;

Tensor clip_to_box(Tensor x, const Box& box);

// Baseline that ignores the release entirely: the prior box midpoint. Its
// expected per-dimension MSE against a uniform prior is diam^2 / 12.
Reconstructor random_guess_attack(const Box& box, int64_t d);

class GlmStationarityAttack {
 public:
  // `data` is the full training set; only the non-target samples, the
  // target's label, n and lambda are used (the adversary does not see the
  // target's features).
  GlmStationarityAttack(const ModelSpec& spec, const Dataset& data,
                        int64_t target_index, double lambda);
  ~GlmStationarityAttack();
  GlmStationarityAttack(GlmStationarityAttack&&) noexcept;

  // Inverts s * x = g_hat where g_hat is the target gradient implied by
  // stationarity at the released weights and s = sigmoid(<h, x>) - y. Root
  // candidates are screened by the residual of that equation after box
  // clipping; exact ties go to the larger-margin solution. If no root
  // exists the box midpoint is returned and the fallback counter bumped.
  Tensor reconstruct(const Tensor& release) const;

  int64_t fallback_count() const { return fallbacks_.load(); }

  Reconstructor as_reconstructor() const {
    return [this](const Tensor& h) { return reconstruct(h); };
  }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  mutable std::atomic<int64_t> fallbacks_{0};
};

struct AttackResult {
  double mse_mean = 0.0;
  double mse_stderr = 0.0;
  int64_t trials = 0;
};

// Draws `trials` independent releases (one RNG substream per trial, so the
// result is identical under any thread count) and reports the mean and
// standard error of per-dimension squared reconstruction error.
AttackResult evaluate_attack(const ReleaseSampler& sampler,
                             const Reconstructor& reconstruct, const Tensor& target_x,
                             int64_t trials, uint64_t seed);

}  // namespace reconbound
