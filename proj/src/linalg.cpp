#include "reconbound/linalg.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>

#include "reconbound/errors.hpp"

namespace reconbound {

namespace {

Eigen::Map<const Eigen::VectorXd> as_eigen(const Tensor& t) {
  return {t.data(), static_cast<Eigen::Index>(t.numel())};
}

Eigen::MatrixXd dense_from(const Tensor& m) {
  if (m.shape().size() != 2) throw ConfigError("dense matrix must be rank 2");
  const int64_t r = m.dim(0), c = m.dim(1);
  Eigen::MatrixXd out(r, c);
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) out(i, j) = m[i * c + j];
  return out;
}

}  // namespace

LinearOperator LinearOperator::identity(int64_t d) {
  return {d, d, [](const Tensor& v) { return v; }};
}

LinearOperator LinearOperator::scaled_identity(int64_t d, double c) {
  return {d, d, [c](const Tensor& v) {
            Tensor out = v;
            scale_inplace(out, c);
            return out;
          }};
}

LinearOperator LinearOperator::from_dense(const Tensor& m) {
  if (m.shape().size() != 2) throw ConfigError("from_dense: need rank-2 tensor");
  const int64_t r = m.dim(0), c = m.dim(1);
  return {r, c, [m, r, c](const Tensor& v) {
            if (v.numel() != c) throw ConfigError("operator input length mismatch");
            Tensor out = Tensor::zeros({r});
            for (int64_t i = 0; i < r; ++i) {
              double s = 0.0;
              for (int64_t j = 0; j < c; ++j) s += m[i * c + j] * v[j];
              out[i] = s;
            }
            return out;
          }};
}

PowerIterationResult power_iteration(const LinearOperator& op, uint64_t seed,
                                     int max_iters, double tol, int restarts) {
  if (op.rows != op.cols || op.rows <= 0)
    throw ConfigError("power_iteration: operator must be square and nonempty");
  const int64_t d = op.rows;
  Rng root(seed);

  PowerIterationResult best;
  bool have_best = false;
  for (int r = 0; r < restarts; ++r) {
    Rng stream = root.substream(static_cast<uint64_t>(r));
    Tensor v = stream.gaussian_vector(d);
    double nv = norm2(v);
    if (nv == 0.0) {
      v[0] = 1.0;
      nv = 1.0;
    }
    scale_inplace(v, 1.0 / nv);

    PowerIterationResult cur;
    double lambda_prev = 0.0;
    for (int it = 1; it <= max_iters; ++it) {
      Tensor av = op(v);
      if (!av.all_finite()) throw NumericError("power_iteration: non-finite matvec");
      const double lambda = dot(v, av);
      const double an = norm2(av);
      cur.iterations = it;
      if (an == 0.0) {
        // Operator annihilates the probe: eigenvalue estimate 0.
        cur.eigenvalue = 0.0;
        cur.eigenvector = v;
        cur.converged = true;
        break;
      }
      scale_inplace(av, 1.0 / an);
      v = std::move(av);
      if (it > 1 &&
          std::abs(lambda - lambda_prev) <= tol * std::max(1.0, std::abs(lambda))) {
        cur.eigenvalue = lambda;
        cur.eigenvector = v;
        cur.converged = true;
        break;
      }
      lambda_prev = lambda;
      cur.eigenvalue = lambda;
      cur.eigenvector = v;
    }
    if (!have_best || cur.eigenvalue > best.eigenvalue) {
      best = cur;
      have_best = true;
    }
  }
  return best;
}

Tensor solve_spd(const LinearOperator& op, const Tensor& b, const CgOptions& opts) {
  if (op.rows != op.cols) throw ConfigError("solve_spd: operator must be square");
  if (b.numel() != op.cols) throw ConfigError("solve_spd: rhs length mismatch");
  const int64_t d = b.numel();
  const double bnorm = norm2(b);
  if (bnorm == 0.0) return Tensor::zeros({d});

  const bool precond = opts.jacobi.has_value();
  auto apply_m = [&](const Tensor& r) {
    if (!precond) return r;
    Tensor z = r;
    const Tensor& diag = *opts.jacobi;
    for (int64_t i = 0; i < d; ++i) {
      if (diag[i] <= 0.0) throw NumericError("solve_spd: nonpositive preconditioner diagonal");
      z[i] /= diag[i];
    }
    return z;
  };

  Tensor x = Tensor::zeros({d});
  Tensor r = b;
  Tensor z = apply_m(r);
  Tensor p = z;
  double rz = dot(r, z);
  const int max_iters = opts.max_iters > 0 ? opts.max_iters : static_cast<int>(10 * d);

  for (int it = 0; it < max_iters; ++it) {
    if (norm2(r) <= opts.tol * bnorm) break;
    Tensor ap = op(p);
    const double pap = dot(p, ap);
    if (!(pap > 0.0)) throw NumericError("solve_spd: operator not positive definite");
    const double alpha = rz / pap;
    axpy(alpha, p, x);
    axpy(-alpha, ap, r);
    z = apply_m(r);
    const double rz_new = dot(r, z);
    const double beta = rz_new / rz;
    rz = rz_new;
    for (int64_t i = 0; i < d; ++i) p[i] = z[i] + beta * p[i];
  }
  if (norm2(r) > 1e-8 * bnorm)
    throw NumericError("solve_spd: conjugate gradients did not converge");
  return x;
}

Tensor cholesky_solve(const Tensor& h, const Tensor& b) {
  Eigen::MatrixXd hm = dense_from(h);
  if (hm.rows() != hm.cols() || hm.rows() != as_eigen(b).size())
    throw ConfigError("cholesky_solve: dimension mismatch");
  Eigen::LLT<Eigen::MatrixXd> llt(hm);
  if (llt.info() != Eigen::Success)
    throw NumericError("cholesky_solve: matrix is not positive definite");
  Eigen::VectorXd x = llt.solve(as_eigen(b));
  Tensor out = Tensor::zeros({b.numel()});
  for (int64_t i = 0; i < b.numel(); ++i) out[i] = x(i);
  return out;
}

std::vector<double> symmetric_eigenvalues(const Tensor& m) {
  Eigen::MatrixXd a = dense_from(m);
  if (a.rows() != a.cols()) throw ConfigError("symmetric_eigenvalues: need square matrix");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  if (es.info() != Eigen::Success)
    throw NumericError("symmetric_eigenvalues: eigensolver failed");
  std::vector<double> out(static_cast<size_t>(a.rows()));
  for (Eigen::Index i = 0; i < a.rows(); ++i) out[static_cast<size_t>(i)] = es.eigenvalues()(i);
  return out;
}

}  // namespace reconbound
