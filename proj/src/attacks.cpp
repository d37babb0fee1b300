#include "reconbound/attacks.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "reconbound/errors.hpp"
#include "reconbound/parallel.hpp"

namespace reconbound {

namespace {

double sigmoid(double a) {
  if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
  const double e = std::exp(a);
  return e / (1.0 + e);
}

// Margin-space root function: a candidate margin m corresponds to the scale
// s = sigmoid(m) - y, and stationarity demands m * s = <h, g_hat>.
double margin_equation(double m, int y) {
  return m * (sigmoid(m) - static_cast<double>(y));
}

}  // namespace

Tensor clip_to_box(Tensor x, const Box& box) {
  for (int64_t i = 0; i < x.numel(); ++i) x[i] = std::clamp(x[i], box.lo, box.hi);
  return x;
}

Reconstructor random_guess_attack(const Box& box, int64_t d) {
  Tensor mid = Tensor::full({d}, box.midpoint());
  return [mid](const Tensor&) { return mid; };
}

struct GlmStationarityAttack::Impl {
  Eigen::MatrixXd x_rest;   // (n-1) x d
  Eigen::VectorXd y_rest;
  int64_t n_total = 0;
  int64_t d = 0;
  int target_label = 0;
  double lambda = 0.0;
  Box box;
};

GlmStationarityAttack::GlmStationarityAttack(const ModelSpec& spec, const Dataset& data,
                                             int64_t target_index, double lambda)
    : impl_(std::make_unique<Impl>()) {
  if (spec.kind != ModelKind::kLogistic)
    throw ConfigError("glm attack: only logistic models are invertible this way");
  if (target_index < 0 || target_index >= data.n())
    throw ConfigError("glm attack: target index out of range");
  if (!(lambda > 0.0)) throw ConfigError("glm attack: lambda must be positive");

  const int64_t n = data.n(), d = data.d();
  impl_->n_total = n;
  impl_->d = d;
  impl_->lambda = lambda;
  impl_->box = data.box;
  impl_->target_label = data.samples[static_cast<size_t>(target_index)].label;
  impl_->x_rest.resize(n - 1, d);
  impl_->y_rest.resize(n - 1);
  int64_t row = 0;
  for (int64_t i = 0; i < n; ++i) {
    if (i == target_index) continue;
    const Sample& z = data.samples[static_cast<size_t>(i)];
    for (int64_t j = 0; j < d; ++j) impl_->x_rest(row, j) = z.x[j];
    impl_->y_rest(row) = z.label;
    ++row;
  }
}

GlmStationarityAttack::~GlmStationarityAttack() = default;
GlmStationarityAttack::GlmStationarityAttack(GlmStationarityAttack&& other) noexcept
    : impl_(std::move(other.impl_)), fallbacks_(other.fallbacks_.load()) {}

Tensor GlmStationarityAttack::reconstruct(const Tensor& release) const {
  const Impl& s = *impl_;
  if (release.numel() != s.d) throw ConfigError("glm attack: release dimension mismatch");
  Eigen::Map<const Eigen::VectorXd> h(release.data(), s.d);

  // Implied target gradient: -n lambda h - sum over the rest of the data.
  Eigen::VectorXd margins = s.x_rest * h;
  Eigen::VectorXd resid(margins.size());
  for (Eigen::Index i = 0; i < margins.size(); ++i)
    resid(i) = sigmoid(margins(i)) - s.y_rest(i);
  Eigen::VectorXd g_hat = -static_cast<double>(s.n_total) * s.lambda * h -
                          s.x_rest.transpose() * resid;

  const double gnorm = g_hat.norm();
  Tensor zero = Tensor::zeros({s.d});
  if (gnorm < 1e-12) return clip_to_box(std::move(zero), s.box);

  const double a = h.dot(g_hat);
  const int y = s.target_label;

  // Solve m (sigmoid(m) - y) = a by scanning a signed log grid of margins for
  // sign changes, then bisecting. Near-tangent minima are kept as candidates
  // even without a sign change.
  std::vector<double> roots;
  auto refine = [&](double lo, double hi) {
    double flo = margin_equation(lo, y) - a;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      const double fm = margin_equation(mid, y) - a;
      if (fm == 0.0) return mid;
      if ((fm < 0.0) == (flo < 0.0)) {
        lo = mid;
        flo = fm;
      } else {
        hi = mid;
      }
    }
    return 0.5 * (lo + hi);
  };

  constexpr int kGrid = 700;
  std::vector<double> grid;
  grid.reserve(2 * kGrid + 1);
  for (int k = kGrid - 1; k >= 0; --k)
    grid.push_back(-std::pow(10.0, -9.0 + 18.0 * k / (kGrid - 1)));
  grid.push_back(0.0);
  for (int k = 0; k < kGrid; ++k)
    grid.push_back(std::pow(10.0, -9.0 + 18.0 * k / (kGrid - 1)));

  double prev_f = margin_equation(grid[0], y) - a;
  for (size_t k = 1; k < grid.size(); ++k) {
    const double f = margin_equation(grid[k], y) - a;
    if ((f <= 0.0 && prev_f > 0.0) || (f >= 0.0 && prev_f < 0.0))
      roots.push_back(refine(grid[k - 1], grid[k]));
    prev_f = f;
  }

  if (roots.empty()) {
    fallbacks_.fetch_add(1);
    return Tensor::full({s.d}, s.box.midpoint());
  }

  // Score candidates by the residual of the stationarity equation after
  // clipping; among (near-)exact solutions prefer the larger margin.
  double best_score = std::numeric_limits<double>::infinity();
  double best_margin = 0.0;
  Tensor best = Tensor::zeros({s.d});
  const double feasible_tol = 1e-6 * std::max(1.0, gnorm);
  bool have_feasible = false;
  bool chosen = false;
  for (double m : roots) {
    const double sc = sigmoid(m) - static_cast<double>(y);
    if (std::abs(sc) < 1e-300) continue;
    Tensor cand = Tensor::zeros({s.d});
    for (int64_t j = 0; j < s.d; ++j) cand[j] = g_hat(j) / sc;
    cand = clip_to_box(std::move(cand), s.box);
    Eigen::Map<const Eigen::VectorXd> cv(cand.data(), s.d);
    const double sc_post = sigmoid(h.dot(cv)) - static_cast<double>(y);
    const double defect = (sc_post * cv - g_hat).norm();
    const bool feasible = defect <= feasible_tol;
    bool better;
    if (feasible && have_feasible)
      better = std::abs(m) > std::abs(best_margin);
    else if (feasible)
      better = true;
    else if (have_feasible)
      better = false;
    else
      better = defect < best_score;
    if (better) {
      best_score = defect;
      best_margin = m;
      best = std::move(cand);
      chosen = true;
    }
    have_feasible = have_feasible || feasible;
  }
  if (!chosen) {
    fallbacks_.fetch_add(1);
    return Tensor::full({s.d}, s.box.midpoint());
  }
  return best;
}

AttackResult evaluate_attack(const ReleaseSampler& sampler,
                             const Reconstructor& reconstruct, const Tensor& target_x,
                             int64_t trials, uint64_t seed) {
  if (trials <= 0) throw ConfigError("evaluate_attack: trials must be positive");
  const int64_t d = target_x.numel();
  Rng root(seed);
  std::vector<double> errs(static_cast<size_t>(trials));
  parallel_for(trials, [&](int64_t t) {
    try {
      Rng trial_rng = root.substream(static_cast<uint64_t>(t));
      const Tensor release = sampler(trial_rng);
      const Tensor guess = reconstruct(release);
      if (guess.numel() != d)
        throw ConfigError("reconstruction dimension mismatch");
      double sq = 0.0;
      for (int64_t j = 0; j < d; ++j) {
        const double diff = guess[j] - target_x[j];
        sq += diff * diff;
      }
      errs[static_cast<size_t>(t)] = sq / static_cast<double>(d);
    } catch (const NumericError& e) {
      throw NumericError("trial " + std::to_string(t) + ": " + e.what());
    } catch (const ConfigError& e) {
      throw ConfigError("trial " + std::to_string(t) + ": " + e.what());
    }
  });
  double mean = 0.0;
  for (double e : errs) mean += e;
  mean /= static_cast<double>(trials);
  double var = 0.0;
  for (double e : errs) var += (e - mean) * (e - mean);
  var = trials > 1 ? var / static_cast<double>(trials - 1) : 0.0;
  AttackResult out;
  out.mse_mean = mean;
  out.mse_stderr = std::sqrt(var / static_cast<double>(trials));
  out.trials = trials;
  return out;
}

}  // namespace reconbound
