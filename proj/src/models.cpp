#include "reconbound/models.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "reconbound/errors.hpp"
#include "reconbound/linalg.hpp"

namespace reconbound {

namespace {

void check_sample(const ModelSpec& spec, const Sample& z) {
  if (z.x.numel() != spec.input_dim) throw ConfigError("sample dimension mismatch");
  if (z.label < 0 || z.label >= spec.num_classes)
    throw ConfigError("sample label out of range");
}

Eigen::MatrixXd design_matrix(const Dataset& data) {
  const int64_t n = data.n(), d = data.d();
  Eigen::MatrixXd x(n, d);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < d; ++j) x(i, j) = data.samples[static_cast<size_t>(i)].x[j];
  return x;
}

double sigmoid(double a) {
  if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
  const double e = std::exp(a);
  return e / (1.0 + e);
}

ErmResult train_logistic_newton(const Dataset& data, const ErmOptions& opts) {
  const int64_t n = data.n(), d = data.d();
  const Eigen::MatrixXd x = design_matrix(data);
  Eigen::VectorXd y(n);
  for (int64_t i = 0; i < n; ++i) y(i) = data.samples[static_cast<size_t>(i)].label;

  Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
  const double inv_n = 1.0 / static_cast<double>(n);

  auto objective = [&](const Eigen::VectorXd& wv) {
    const Eigen::VectorXd m = x * wv;
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      const double a = m(i);
      const double sp = a > 0.0 ? a + std::log1p(std::exp(-a)) : std::log1p(std::exp(a));
      s += sp - y(i) * a;
    }
    return s * inv_n + 0.5 * opts.lambda * wv.squaredNorm();
  };

  ErmResult res;
  double gnorm = 0.0;
  for (int it = 0; it < opts.max_iters; ++it) {
    const Eigen::VectorXd m = x * w;
    Eigen::VectorXd s(n), r(n);
    for (int64_t i = 0; i < n; ++i) {
      s(i) = sigmoid(m(i));
      r(i) = s(i) * (1.0 - s(i));
    }
    const Eigen::VectorXd grad = x.transpose() * (s - y) * inv_n + opts.lambda * w;
    gnorm = grad.norm();
    res.iterations = it;
    if (gnorm <= opts.tol) break;

    LinearOperator hess{d, d, [&](const Tensor& v) {
                          Eigen::Map<const Eigen::VectorXd> vv(v.data(), d);
                          Eigen::VectorXd xv = x * vv;
                          xv.array() *= r.array();
                          Eigen::VectorXd hv =
                              x.transpose() * xv * inv_n + opts.lambda * vv;
                          Tensor out = Tensor::zeros({d});
                          for (int64_t j = 0; j < d; ++j) out[j] = hv(j);
                          return out;
                        }};
    Tensor rhs = Tensor::zeros({d});
    for (int64_t j = 0; j < d; ++j) rhs[j] = -grad(j);
    CgOptions cg;
    cg.tol = std::min(1e-10, 1e-4 * gnorm);
    const Tensor step = solve_spd(hess, rhs, cg);
    Eigen::Map<const Eigen::VectorXd> p(step.data(), d);

    // Backtracking keeps Newton robust far from the optimum. Once the
    // predicted Armijo decrease falls below the objective's rounding noise
    // the test is meaningless and would reject perfectly good steps, so the
    // full Newton step is taken unguarded (the objective is strictly convex
    // and the iterate is already in the quadratic-convergence region).
    const double f0 = objective(w);
    const double slope = grad.dot(p);
    const double noise_floor =
        8.0 * std::numeric_limits<double>::epsilon() * (std::abs(f0) + 1.0);
    double t = 1.0;
    Eigen::VectorXd w_next = w + t * p;
    if (-1e-4 * slope > noise_floor) {
      while (objective(w_next) > f0 + 1e-4 * t * slope && t > 1e-8) {
        t *= 0.5;
        w_next = w + t * p;
      }
    }
    w = w_next;
  }
  if (gnorm > opts.tol) {
    // One more gradient evaluation to report the final norm accurately.
    const Eigen::VectorXd m = x * w;
    Eigen::VectorXd s(n);
    for (int64_t i = 0; i < n; ++i) s(i) = sigmoid(m(i));
    const Eigen::VectorXd grad = x.transpose() * (s - y) * inv_n + opts.lambda * w;
    gnorm = grad.norm();
    if (gnorm > opts.tol)
      throw NumericError("train_erm: Newton did not reach gradient tolerance");
  }

  res.params.w = Tensor::zeros({d});
  for (int64_t j = 0; j < d; ++j) res.params.w[j] = w(j);
  res.objective = objective(w);
  res.grad_norm = gnorm;
  return res;
}

ErmResult train_mlp_gd(const ModelSpec& spec, const Dataset& data,
                       const ErmOptions& opts) {
  Rng rng(opts.seed);
  Params p = init_params(spec, rng);
  Tensor w = p.w;
  const int max_iters = std::max(opts.max_iters, 20000);

  double f = erm_objective(spec, data, w, opts.lambda);
  Tensor g = erm_gradient(spec, data, w, opts.lambda);
  double gnorm = norm2(g);
  double step = 0.5;
  int it = 0;
  for (; it < max_iters && gnorm > opts.tol; ++it) {
    // Armijo backtracking with a mildly adaptive initial step.
    double t = step;
    const double gg = gnorm * gnorm;
    for (;;) {
      Tensor w_try = w;
      axpy(-t, g, w_try);
      const double f_try = erm_objective(spec, data, w_try, opts.lambda);
      if (f_try <= f - 1e-4 * t * gg || t < 1e-12) {
        w = std::move(w_try);
        f = f_try;
        break;
      }
      t *= 0.5;
    }
    step = std::min(1.0, t * 2.0);
    g = erm_gradient(spec, data, w, opts.lambda);
    gnorm = norm2(g);
  }
  if (gnorm > opts.tol)
    throw NumericError("train_erm: gradient descent did not reach tolerance");
  ErmResult res;
  res.params.w = std::move(w);
  res.objective = f;
  res.grad_norm = gnorm;
  res.iterations = it;
  return res;
}

}  // namespace

int64_t ModelSpec::param_count() const {
  if (kind == ModelKind::kLogistic) return input_dim;
  const std::vector<int64_t> sizes = layer_sizes();
  int64_t p = 0;
  for (size_t l = 0; l + 1 < sizes.size(); ++l) p += sizes[l + 1] * sizes[l] + sizes[l + 1];
  return p;
}

std::vector<int64_t> ModelSpec::layer_sizes() const {
  std::vector<int64_t> sizes{input_dim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(num_classes);
  return sizes;
}

LossProgram::LossProgram(const ModelSpec& spec, int label) : spec_(spec), label_(label) {
  if (spec.kind == ModelKind::kLogistic && spec.num_classes != 2)
    throw ConfigError("logistic model is binary");
  if (label < 0 || label >= spec.num_classes) throw ConfigError("label out of range");
}

double per_sample_loss(const ModelSpec& spec, const Tensor& w, const Sample& z) {
  check_sample(spec, z);
  return ad::loss_value(LossProgram(spec, z.label), w, z.x);
}

Tensor per_sample_grad(const ModelSpec& spec, const Tensor& w, const Sample& z) {
  check_sample(spec, z);
  return ad::grad_w(LossProgram(spec, z.label), w, z.x);
}

Tensor logistic_grad_analytic(const Tensor& w, const Sample& z) {
  const double a = dot(w, z.x);
  const double s = sigmoid(a) - static_cast<double>(z.label);
  Tensor g = z.x;
  scale_inplace(g, s);
  return g;
}

Tensor logistic_input_jacobian_analytic(const Tensor& w, const Sample& z) {
  const int64_t d = w.numel();
  const double a = dot(w, z.x);
  const double sg = sigmoid(a);
  const double diag = sg - static_cast<double>(z.label);
  const double curv = sg * (1.0 - sg);
  Tensor j = Tensor::zeros({d, d});
  for (int64_t i = 0; i < d; ++i) {
    j[i * d + i] = diag;
    for (int64_t k = 0; k < d; ++k) j[i * d + k] += curv * z.x[i] * w[k];
  }
  return j;
}

Params init_params(const ModelSpec& spec, Rng& rng) {
  Params p;
  p.w = Tensor::zeros({spec.param_count()});
  if (spec.kind == ModelKind::kLogistic) {
    const double b = 1.0 / std::sqrt(static_cast<double>(spec.input_dim));
    for (int64_t i = 0; i < p.w.numel(); ++i) p.w[i] = rng.uniform(-b, b);
    return p;
  }
  const std::vector<int64_t> sizes = spec.layer_sizes();
  int64_t off = 0;
  for (size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int64_t rows = sizes[l + 1], cols = sizes[l];
    const double b = 1.0 / std::sqrt(static_cast<double>(cols));
    for (int64_t i = 0; i < rows * cols; ++i) p.w[off + i] = rng.uniform(-b, b);
    off += rows * cols + rows;  // biases stay zero
  }
  return p;
}

double erm_objective(const ModelSpec& spec, const Dataset& data, const Tensor& w,
                     double lambda) {
  double s = 0.0;
  for (const Sample& z : data.samples) s += per_sample_loss(spec, w, z);
  return s / static_cast<double>(data.n()) + 0.5 * lambda * dot(w, w);
}

Tensor erm_gradient(const ModelSpec& spec, const Dataset& data, const Tensor& w,
                    double lambda) {
  Tensor g = Tensor::zeros(w.shape());
  for (const Sample& z : data.samples) axpy(1.0, per_sample_grad(spec, w, z), g);
  scale_inplace(g, 1.0 / static_cast<double>(data.n()));
  axpy(lambda, w, g);
  return g;
}

ErmResult train_erm(const ModelSpec& spec, const Dataset& data, const ErmOptions& opts) {
  if (data.n() == 0) throw ConfigError("train_erm: empty dataset");
  if (data.d() != spec.input_dim) throw ConfigError("train_erm: dimension mismatch");
  if (opts.lambda < 0.0) throw ConfigError("train_erm: negative regularization");
  if (spec.kind == ModelKind::kLogistic) return train_logistic_newton(data, opts);
  return train_mlp_gd(spec, data, opts);
}

double accuracy(const ModelSpec& spec, const Tensor& w, const Dataset& data) {
  if (data.n() == 0) return 0.0;
  int64_t hits = 0;
  if (spec.kind == ModelKind::kLogistic) {
    for (const Sample& z : data.samples) {
      const int pred = dot(w, z.x) > 0.0 ? 1 : 0;
      hits += (pred == z.label);
    }
    return static_cast<double>(hits) / static_cast<double>(data.n());
  }
  for (const Sample& z : data.samples) {
    ad::Graph g;
    const int wi = g.input(w);
    const int xi = g.input(z.x);
    const std::vector<int64_t> sizes = spec.layer_sizes();
    int h = xi;
    int64_t off = 0;
    for (size_t l = 0; l + 1 < sizes.size(); ++l) {
      const int64_t rows = sizes[l + 1], cols = sizes[l];
      int a = g.affine(wi, off, rows, cols, h);
      off += rows * cols + rows;
      h = (l + 2 < sizes.size()) ? g.tanh_op(a) : a;
    }
    const Tensor& logits = g.val(h);
    int64_t arg = 0;
    for (int64_t k = 1; k < logits.numel(); ++k)
      if (logits[k] > logits[arg]) arg = k;
    hits += (arg == z.label);
  }
  return static_cast<double>(hits) / static_cast<double>(data.n());
}

}  // namespace reconbound
