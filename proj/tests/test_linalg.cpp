#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "reconbound/errors.hpp"
#include "reconbound/linalg.hpp"
#include "reconbound/rng.hpp"
#include "reconbound/tensor.hpp"

using namespace reconbound;

namespace {

// Random symmetric positive definite {d, d} matrix M^T M + ridge I.
Tensor random_spd(int64_t d, uint64_t seed, double ridge = 0.1) {
  Rng r(seed);
  Tensor m = r.gaussian_vector(d * d);
  Tensor a = Tensor::zeros({d, d});
  for (int64_t i = 0; i < d; ++i)
    for (int64_t j = 0; j < d; ++j) {
      double s = 0.0;
      for (int64_t k = 0; k < d; ++k) s += m[k * d + i] * m[k * d + j];
      a[i * d + j] = s + (i == j ? ridge : 0.0);
    }
  return a;
}

}  // namespace

TEST_SUITE("linalg") {

TEST_CASE("power iteration finds the dominant eigenvalue of a diagonal") {
  const Tensor a = Tensor({3, 3}, {1.0, 0.0, 0.0,
                                   0.0, 5.0, 0.0,
                                   0.0, 0.0, 2.0});
  const PowerIterationResult res =
      power_iteration(LinearOperator::from_dense(a), 3);
  CHECK(res.converged);
  CHECK(res.eigenvalue == doctest::Approx(5.0).epsilon(1e-8));
  // The eigenvector concentrates on the middle coordinate.
  CHECK(std::abs(res.eigenvector[1]) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("power iteration agrees with a dense eigensolve") {
  const int64_t d = 12;
  const Tensor a = random_spd(d, 77);
  const PowerIterationResult res =
      power_iteration(LinearOperator::from_dense(a), 5);
  const std::vector<double> evs = symmetric_eigenvalues(a);
  const double top = *std::max_element(evs.begin(), evs.end());
  CHECK(res.converged);
  CHECK(oracles::rel_err(res.eigenvalue, top) < 1e-7);
}

TEST_CASE("power iteration on the zero operator converges to zero") {
  const PowerIterationResult res =
      power_iteration(LinearOperator::scaled_identity(4, 0.0), 11);
  CHECK(res.converged);
  CHECK(res.eigenvalue == 0.0);
}

TEST_CASE("conjugate gradients matches the dense cholesky solve") {
  const int64_t d = 10;
  const Tensor a = random_spd(d, 19, 0.5);
  Rng r(23);
  const Tensor b = r.gaussian_vector(d);
  const Tensor x_cg = solve_spd(LinearOperator::from_dense(a), b);
  const Tensor x_ch = cholesky_solve(a, b);
  CHECK(oracles::max_rel_diff(x_cg, x_ch) < 1e-7);
  // Residual check against the definition.
  Tensor res = LinearOperator::from_dense(a)(x_cg);
  axpy(-1.0, b, res);
  CHECK(norm2(res) <= 1e-8 * norm2(b) * 10.0);
}

TEST_CASE("jacobi preconditioning does not change the solution") {
  const int64_t d = 8;
  Tensor a = random_spd(d, 29, 0.2);
  // Make the diagonal badly scaled so the preconditioner has work to do.
  for (int64_t i = 0; i < d; ++i) {
    const double s = std::pow(10.0, double(i % 4));
    for (int64_t j = 0; j < d; ++j) {
      a[i * d + j] *= s;
      a[j * d + i] *= s;
    }
  }
  Rng r(31);
  const Tensor b = r.gaussian_vector(d);
  Tensor diag = Tensor::zeros({d});
  for (int64_t i = 0; i < d; ++i) diag[i] = a[i * d + i];
  CgOptions opts;
  opts.jacobi = diag;
  const Tensor x_pre = solve_spd(LinearOperator::from_dense(a), b, opts);
  const Tensor x_ch = cholesky_solve(a, b);
  CHECK(oracles::max_rel_diff(x_pre, x_ch) < 1e-6);
}

TEST_CASE("indefinite operators are rejected") {
  const Tensor a = Tensor({2, 2}, {1.0, 0.0, 0.0, -1.0});
  const Tensor b = Tensor::vector({0.0, 1.0});
  CHECK_THROWS_AS((void)solve_spd(LinearOperator::from_dense(a), b), NumericError);
}

TEST_CASE("symmetric eigenvalues of a known 2x2") {
  const Tensor a = Tensor({2, 2}, {2.0, 1.0, 1.0, 2.0});
  std::vector<double> evs = symmetric_eigenvalues(a);
  std::sort(evs.begin(), evs.end());
  REQUIRE(evs.size() == 2);
  CHECK(evs[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(evs[1] == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("scaled identity operator") {
  const LinearOperator op = LinearOperator::scaled_identity(3, -2.5);
  const Tensor v = Tensor::vector({1.0, -2.0, 0.5});
  const Tensor out = op(v);
  CHECK(out[0] == doctest::Approx(-2.5));
  CHECK(out[1] == doctest::Approx(5.0));
  CHECK(out[2] == doctest::Approx(-1.25));
}

}  // TEST_SUITE("linalg")
