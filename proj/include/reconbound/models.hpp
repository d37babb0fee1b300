#pragma once

// Model zoo for the privacy analyses: binary logistic regression and small
// tanh MLPs with a softmax cross-entropy head. Both are smooth in parameters
// and inputs, which the downstream Fisher-information machinery requires.

#include <cstdint>
#include <string>
#include <vector>

#include "reconbound/graph.hpp"
#include "reconbound/rng.hpp"
#include "reconbound/tensor.hpp"

namespace reconbound {

struct Sample {
  Tensor x;
  int label = 0;
};

struct Box {
  double lo = 0.0;
  double hi = 1.0;
  double diameter() const { return hi - lo; }
  double midpoint() const { return 0.5 * (lo + hi); }
};

struct Dataset {
  std::vector<Sample> samples;
  Box box;
  int num_classes = 2;

  int64_t n() const { return static_cast<int64_t>(samples.size()); }
  int64_t d() const { return samples.empty() ? 0 : samples.front().x.numel(); }
};

enum class ModelKind { kLogistic, kTanhMlp };

struct ModelSpec {
  ModelKind kind = ModelKind::kLogistic;
  int64_t input_dim = 0;
  std::vector<int64_t> hidden;  // tanh MLP only
  int64_t num_classes = 2;

  int64_t param_count() const;
  std::vector<int64_t> layer_sizes() const;  // [d, hidden..., K] for the MLP
};

struct Params {
  Tensor w;
};

// Differentiable per-sample loss with the label baked in. Satisfies the
// program contract of reconbound::ad.
class LossProgram {
 public:
  LossProgram(const ModelSpec& spec, int label);

  template <class S>
  int build(ad::GraphT<S>& g, int w_id, int x_id) const {
    if (spec_.kind == ModelKind::kLogistic) {
      // softplus(a) - y * a with a = <w, x>; cross-entropy of sigmoid(a).
      const int a = g.dot(w_id, x_id);
      const int sp = g.softplus_op(a);
      if (label_ == 0) return sp;
      return g.sub(sp, a);
    }
    const std::vector<int64_t> sizes = spec_.layer_sizes();
    int h = x_id;
    int64_t off = 0;
    for (size_t l = 0; l + 1 < sizes.size(); ++l) {
      const int64_t rows = sizes[l + 1], cols = sizes[l];
      int a = g.affine(w_id, off, rows, cols, h);
      off += rows * cols + rows;
      h = (l + 2 < sizes.size()) ? g.tanh_op(a) : a;
    }
    const int lse = g.logsumexp(h);
    const int target = g.pick(h, label_);
    return g.sub(lse, target);
  }

  int label() const { return label_; }

 private:
  ModelSpec spec_;
  int label_ = 0;
};

double per_sample_loss(const ModelSpec& spec, const Tensor& w, const Sample& z);
Tensor per_sample_grad(const ModelSpec& spec, const Tensor& w, const Sample& z);

// Closed forms for logistic regression, used to cross-check the tape.
Tensor logistic_grad_analytic(const Tensor& w, const Sample& z);
// J(i, j) = d(grad_w)_i / d x_j, returned dense {d, d}:
// (sigmoid(a) - y) I + sigmoid(a)(1 - sigmoid(a)) x w^T with a = <w, x>.
Tensor logistic_input_jacobian_analytic(const Tensor& w, const Sample& z);

Params init_params(const ModelSpec& spec, Rng& rng);

struct ErmOptions {
  double lambda = 0.0;   // L2 coefficient on the average-loss objective
  double tol = 1e-8;     // gradient-norm stopping criterion
  int max_iters = 200;   // Newton iterations (logistic) / 20000 GD steps (MLP)
  uint64_t seed = 1;     // MLP initialization
};

struct ErmResult {
  Params params;
  double objective = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
};

// Minimizes (1/n) sum loss + (lambda/2) ||w||^2. Logistic uses Newton-CG and
// is deterministic; the MLP uses backtracking gradient descent from a seeded
// init. Throws NumericError if the gradient tolerance is not reached.
ErmResult train_erm(const ModelSpec& spec, const Dataset& data, const ErmOptions& opts);

// Full regularized objective and its gradient (used by trainers and tests).
double erm_objective(const ModelSpec& spec, const Dataset& data, const Tensor& w,
                     double lambda);
Tensor erm_gradient(const ModelSpec& spec, const Dataset& data, const Tensor& w,
                    double lambda);

double accuracy(const ModelSpec& spec, const Tensor& w, const Dataset& data);

}  // namespace reconbound
