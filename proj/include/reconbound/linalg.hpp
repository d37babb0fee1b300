#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "reconbound/rng.hpp"
#include "reconbound/tensor.hpp"

namespace reconbound {

// Matrix-free linear map on flat vectors.
struct LinearOperator {
  int64_t rows = 0;
  int64_t cols = 0;
  std::function<Tensor(const Tensor&)> apply;

  Tensor operator()(const Tensor& v) const { return apply(v); }

  static LinearOperator identity(int64_t d);
  static LinearOperator scaled_identity(int64_t d, double c);
  static LinearOperator from_dense(const Tensor& m);  // shape {r, c}, row-major
};

struct PowerIterationResult {
  double eigenvalue = 0.0;
  Tensor eigenvector;
  int iterations = 0;
  bool converged = false;
};

// Dominant eigenvalue of a symmetric PSD operator. Runs from two seeded
// random starts and keeps the larger estimate; convergence is a relative
// Rayleigh-quotient test.
PowerIterationResult power_iteration(const LinearOperator& op, uint64_t seed,
                                     int max_iters = 500, double tol = 1e-10,
                                     int restarts = 2);

struct CgOptions {
  double tol = 1e-10;      // relative residual target
  int max_iters = 0;       // 0 means 10 * dimension
  std::optional<Tensor> jacobi;  // diagonal preconditioner, if known
};

// Conjugate gradients for SPD systems. Throws NumericError on breakdown or
// if the relative residual never reaches 1e-8.
Tensor solve_spd(const LinearOperator& op, const Tensor& b, const CgOptions& opts = {});

// Dense SPD solve (Cholesky). `h` is {d, d} row-major. Throws NumericError if
// the factorization fails.
Tensor cholesky_solve(const Tensor& h, const Tensor& b);

// Dense symmetric eigenvalues in ascending order (for small matrices).
std::vector<double> symmetric_eigenvalues(const Tensor& m);

}  // namespace reconbound
