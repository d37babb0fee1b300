#include <cmath>
#include <cstdlib>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "reconbound/attacks.hpp"
#include "reconbound/errors.hpp"
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

}  // namespace

TEST_SUITE("attacks") {

TEST_CASE("box clipping and the midpoint baseline") {
  const Box box{0.0, 1.0};
  const Tensor clipped = clip_to_box(Tensor::vector({-1.0, 0.5, 2.0}), box);
  CHECK(clipped[0] == 0.0);
  CHECK(clipped[1] == 0.5);
  CHECK(clipped[2] == 1.0);
  const Reconstructor guess = random_guess_attack(box, 3);
  const Tensor g = guess(Tensor::vector({9.0, 9.0, 9.0}));
  for (int64_t i = 0; i < 3; ++i) CHECK(g[i] == 0.5);
}

TEST_CASE("noiseless releases are inverted exactly for both labels") {
  const int64_t d = 4;
  const ModelSpec spec = logistic_spec(d);
  const Dataset data = blob_dataset(4, d, 211);  // n = 8
  const double lambda = 1e-2;
  ErmOptions opts;
  opts.lambda = lambda;
  opts.tol = 1e-12;
  const ErmResult erm = train_erm(spec, data, opts);

  for (int64_t target : {0, 1}) {  // labels 0 and 1 by construction
    const GlmStationarityAttack attack(spec, data, target, lambda);
    const Tensor rec = attack.reconstruct(erm.params.w);
    REQUIRE(rec.numel() == d);
    double mse = 0.0;
    for (int64_t i = 0; i < d; ++i) {
      const double e = rec[i] - data.samples[size_t(target)].x[i];
      mse += e * e;
    }
    mse /= double(d);
    CHECK(mse < 1e-12);
    CHECK(attack.fallback_count() == 0);
  }
}

TEST_CASE("an all-zero target is recovered") {
  const int64_t d = 3;
  const ModelSpec spec = logistic_spec(d);
  Dataset data = blob_dataset(4, d, 223);
  data.samples[2].x = Tensor::zeros({d});
  data.samples[2].label = 1;
  const double lambda = 0.05;
  ErmOptions opts;
  opts.lambda = lambda;
  opts.tol = 1e-12;
  const ErmResult erm = train_erm(spec, data, opts);
  const GlmStationarityAttack attack(spec, data, 2, lambda);
  const Tensor rec = attack.reconstruct(erm.params.w);
  CHECK(norm2(rec) < 1e-5);
}

TEST_CASE("infeasible margin equations fall back to the prior midpoint") {
  // With the remaining sample at the origin and label 0, stationarity at
  // h = e1 demands m (sigmoid(m) - 1) = -1, below the attainable minimum
  // ~-0.2785, so no root exists for a label-1 target.
  const int64_t d = 3;
  Dataset data;
  data.box = Box{0.0, 1.0};
  Sample target;
  target.x = Tensor::full({d}, 0.3);
  target.label = 1;
  Sample rest;
  rest.x = Tensor::zeros({d});
  rest.label = 0;
  data.samples = {target, rest};

  const ModelSpec spec = logistic_spec(d);
  const GlmStationarityAttack attack(spec, data, 0, 0.5);
  Tensor release = Tensor::zeros({d});
  release[0] = 1.0;
  const Tensor rec = attack.reconstruct(release);
  for (int64_t i = 0; i < d; ++i) CHECK(rec[i] == 0.5);
  CHECK(attack.fallback_count() == 1);
}

TEST_CASE("attack evaluation is deterministic and thread-count independent") {
  const int64_t d = 3;
  const Tensor target = Tensor::full({d}, 0.4);
  const Box box{0.0, 1.0};
  const ReleaseSampler sampler = [&](Rng& r) {
    Tensor out = target;
    for (int64_t i = 0; i < d; ++i) out[i] += 0.3 * r.next_gaussian();
    return out;
  };
  const Reconstructor rec = [&](const Tensor& h) { return clip_to_box(h, box); };

  const AttackResult a = evaluate_attack(sampler, rec, target, 64, 5);
  const AttackResult b = evaluate_attack(sampler, rec, target, 64, 5);
  CHECK(a.mse_mean == b.mse_mean);
  CHECK(a.mse_stderr == b.mse_stderr);
  CHECK(a.trials == 64);

  setenv("RECONBOUND_THREADS", "1", 1);
  const AttackResult one = evaluate_attack(sampler, rec, target, 64, 5);
  setenv("RECONBOUND_THREADS", "4", 1);
  const AttackResult four = evaluate_attack(sampler, rec, target, 64, 5);
  unsetenv("RECONBOUND_THREADS");
  CHECK(one.mse_mean == four.mse_mean);
  CHECK(one.mse_stderr == four.mse_stderr);
  CHECK(a.mse_mean == one.mse_mean);

  const AttackResult other = evaluate_attack(sampler, rec, target, 64, 6);
  CHECK(a.mse_mean != other.mse_mean);
}

TEST_CASE("standard error shrinks like the square root of the trial count") {
  const int64_t d = 4;
  const Tensor target = Tensor::full({d}, 0.5);
  const Box box{0.0, 1.0};
  const ReleaseSampler sampler = [&](Rng& r) {
    Tensor out = target;
    for (int64_t i = 0; i < d; ++i) out[i] += 0.2 * r.next_gaussian();
    return out;
  };
  const Reconstructor rec = [&](const Tensor& h) { return clip_to_box(h, box); };
  const AttackResult small = evaluate_attack(sampler, rec, target, 100, 31);
  const AttackResult large = evaluate_attack(sampler, rec, target, 10000, 31);
  CHECK(small.mse_stderr > 0.0);
  const double ratio = small.mse_stderr / large.mse_stderr;
  CHECK(ratio > 7.0);
  CHECK(ratio < 13.0);
  // Both estimate the same quantity.
  CHECK(std::abs(small.mse_mean - large.mse_mean) <
        4.0 * (small.mse_stderr + large.mse_stderr));
}

TEST_CASE("near-noiseless attack crushes the prior baseline") {
  const int64_t d = 3;
  const ModelSpec spec = logistic_spec(d);
  const Dataset data = blob_dataset(5, d, 227);  // n = 10
  const double lambda = 1e-2, sigma = 1e-5;
  const OutputPerturbation mech =
      output_perturbation_train(spec, data, lambda, sigma, 1e-12);
  const int64_t target = 4;
  const GlmStationarityAttack attack(spec, data, target, lambda);
  const AttackResult res =
      evaluate_attack([&](Rng& r) { return mech.sample(r); },
                      attack.as_reconstructor(),
                      data.samples[size_t(target)].x, 20, 17);
  CHECK(res.mse_mean < 1e-6);
  // Midpoint guessing on the same prior is hopeless by comparison.
  const AttackResult base =
      evaluate_attack([&](Rng& r) { return mech.sample(r); },
                      random_guess_attack(data.box, d),
                      data.samples[size_t(target)].x, 20, 17);
  CHECK(res.mse_mean < 1e-3 * base.mse_mean);
}

TEST_CASE("failures inside a trial carry the trial index") {
  const Tensor target = Tensor::full({2}, 0.5);
  const ReleaseSampler sampler = [&](Rng&) { return target; };
  const Reconstructor boom = [](const Tensor&) -> Tensor {
    throw NumericError("boom");
  };
  CHECK_THROWS_WITH_AS((void)evaluate_attack(sampler, boom, target, 1, 3),
                       "trial 0: boom", NumericError);

  const Reconstructor wrong_shape = [](const Tensor&) {
    return Tensor::vector({1.0});
  };
  CHECK_THROWS_WITH_AS((void)evaluate_attack(sampler, wrong_shape, target, 1, 3),
                       "trial 0: reconstruction dimension mismatch", ConfigError);
}

}  // TEST_SUITE("attacks")
