#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "qu/mathkernel.hpp"

#include <cmath>
#include <random>

using namespace qu;

namespace {

Distribution random_dist(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.01, 1.0);
  Distribution d(n);
  double sum = 0.0;
  for (auto& x : d) {
    x = u(rng);
    sum += x;
  }
  for (auto& x : d) x /= sum;
  return d;
}

}  // namespace

TEST_CASE("distribution validation") {
  check_distribution({0.5, 0.5});
  check_distribution({1.0});
  CHECK_THROWS_AS(check_distribution({}), NotADistribution);
  CHECK_THROWS_AS(check_distribution({0.5, 0.4}), NotADistribution);
  CHECK_THROWS_AS(check_distribution({1.2, -0.2}), NotADistribution);
}

TEST_CASE("cross entropy: closed forms, additivity, zero-probability error") {
  CHECK(cross_entropy({0, 1}, {{1.0, 0.0}, {0.0, 1.0}}) == 0.0);
  CHECK(cross_entropy({2}, {{0.25, 0.25, 0.25, 0.25}}) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));
  // Two examples concatenated equal the sum of per-example losses.
  std::vector<Distribution> ex1{{0.7, 0.3}}, ex2{{0.2, 0.8}};
  double separate = cross_entropy({0}, ex1) + cross_entropy({1}, ex2);
  double joint = cross_entropy({0, 1}, {{0.7, 0.3}, {0.2, 0.8}});
  CHECK(joint == doctest::Approx(separate).epsilon(1e-15));
  CHECK_THROWS_AS(cross_entropy({1}, {{1.0, 0.0}}), ZeroProbabilityTarget);
  CHECK_THROWS_AS(cross_entropy({5}, {{1.0, 0.0}}), std::invalid_argument);
  CHECK_THROWS_AS(cross_entropy({0, 0}, {{1.0, 0.0}}), std::invalid_argument);
}

TEST_CASE("kl divergence: closed forms and the zero-mass convention") {
  CHECK(kl_divergence({0.3, 0.7}, {0.3, 0.7}) == 0.0);
  CHECK(kl_divergence({0.5, 0.5}, {0.25, 0.75}) ==
        doctest::Approx(0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0))
            .epsilon(1e-12));
  CHECK(kl_divergence({1.0, 0.0}, {0.5, 0.5}) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK_THROWS_AS(kl_divergence({0.5, 0.5}, {1.0, 0.0}), SupportViolation);
  CHECK_THROWS_AS(kl_divergence({0.5, 0.5}, {0.5, 0.3, 0.2}),
                  std::invalid_argument);
}

TEST_CASE("gibbs inequality across random pairs, oracle agreement") {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 10000; ++i) {
    int n = 2 + static_cast<int>(i % 7);
    Distribution p = random_dist(rng, n), q = random_dist(rng, n);
    double kl = kl_divergence(p, q);
    double oracle = 0.0;
    for (int j = 0; j < n; ++j) oracle += p[j] * std::log(p[j] / q[j]);
    CHECK(std::fabs(kl - oracle) <= 1e-12);
    CHECK(kl >= -1e-15);
    CHECK(kl_divergence(p, p) <= 1e-12);
  }
}

TEST_CASE("total loss composes sft and averaged kd") {
  CHECK(total_loss(1.0, {0.5}, {0.0}) == 1.0);
  CHECK(total_loss(1.0, {0.25, 0.75}, {1.0}) == 1.5);
  CHECK(total_loss(2.0, {0.3, 0.6, 0.9}, {}) ==
        doctest::Approx(2.0 + 0.5 * 0.6));  // default lambda 0.5
  CHECK_THROWS_AS(total_loss(1.0, {}, {1.0}), std::invalid_argument);
  CHECK_THROWS_AS(total_loss(1.0, {0.5}, {-1.0}), std::invalid_argument);

  // Affine in lambda with slope mean(kd), via finite differences.
  std::vector<double> kd{0.2, 0.4, 0.9};
  double mean = (0.2 + 0.4 + 0.9) / 3.0;
  double base = total_loss(1.3, kd, {0.0});
  for (double lam : {0.5, 1.0, 2.0})
    CHECK(total_loss(1.3, kd, {lam}) ==
          doctest::Approx(base + lam * mean).epsilon(1e-15));
  // Monotone non-decreasing in lambda when mean(kd) >= 0.
  CHECK(total_loss(1.3, kd, {2.0}) >= total_loss(1.3, kd, {1.0}));
}

TEST_CASE("prop A.1: argmin agreement and constant offset on toy problems") {
  MultiTaskProblem p;
  p.primary = [](const std::vector<double>& t) { return (t[0] - 1) * (t[0] - 1); };
  p.aux = {{[](const std::vector<double>& t) { return (t[0] + 1) * (t[0] + 1); },
            1.0, 0.37}};
  p.theta0 = {0.0};
  auto rep = lagrangian_equivalence_check(p, {{-2.0}, {2.0}, 1e-3});
  CHECK(rep.passed);
  CHECK(rep.argmin_penalized[0] == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(rep.expected_offset == doctest::Approx(-0.37));
  CHECK(rep.max_offset_error <= 1e-12);

  // Zero weights degenerate to the primary argmin.
  MultiTaskProblem zero = p;
  zero.aux[0].weight = 0.0;
  auto rep0 = lagrangian_equivalence_check(zero, {{-2.0}, {2.0}, 1e-3});
  CHECK(rep0.passed);
  CHECK(rep0.argmin_penalized[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(rep0.expected_offset == 0.0);
}

TEST_CASE("prop A.1 holds on a randomized convex family, 1-D and 2-D") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 20; ++i) {
    double a = u(rng), b = u(rng), lam = std::fabs(u(rng)) + 0.1, eps = u(rng);
    MultiTaskProblem p;
    p.primary = [a](const std::vector<double>& t) {
      return (t[0] - a) * (t[0] - a);
    };
    p.aux = {{[b](const std::vector<double>& t) {
                return 2.0 * (t[0] - b) * (t[0] - b);
              },
              lam, eps}};
    p.theta0 = {0.0};
    CHECK(lagrangian_equivalence_check(p, {{-2.0}, {2.0}, 1e-3}).passed);
  }
  for (int i = 0; i < 5; ++i) {
    double a = u(rng), b = u(rng), lam = std::fabs(u(rng)) + 0.1, eps = u(rng);
    MultiTaskProblem p;
    p.primary = [a](const std::vector<double>& t) {
      return (t[0] - a) * (t[0] - a) + t[1] * t[1];
    };
    p.aux = {{[b](const std::vector<double>& t) {
                return (t[1] - b) * (t[1] - b) + 0.5 * t[0] * t[0];
              },
              lam, eps}};
    p.theta0 = {0.0, 0.0};
    CHECK(lagrangian_equivalence_check(p, {{-1.0, -1.0}, {1.0, 1.0}, 2e-2}).passed);
  }
}

TEST_CASE("non-finite losses are rejected") {
  MultiTaskProblem p;
  p.primary = [](const std::vector<double>& t) { return 1.0 / (t[0] - t[0]); };
  p.theta0 = {0.0};
  CHECK_THROWS_AS(lagrangian_equivalence_check(p, {{-1.0}, {1.0}, 0.5}),
                  NonFiniteLoss);
}

TEST_CASE("finite-difference hessians match analytic ones on quadratics") {
  LossFn f = [](const std::vector<double>& t) {
    return 2.0 * t[0] * t[0] + 3.0 * t[1] * t[1] + t[0] * t[1];
  };
  auto H = estimate_hessian(f, {0.3, -0.2});
  CHECK(H[0][0] == doctest::Approx(4.0).epsilon(1e-6));
  CHECK(H[1][1] == doctest::Approx(6.0).epsilon(1e-6));
  CHECK(H[0][1] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(H[1][0] == H[0][1]);
}

TEST_CASE("cor A.2: zero remainder on quadratics, quartic decay on cosh") {
  MultiTaskProblem quad;
  quad.primary = [](const std::vector<double>&) { return 0.0; };
  quad.aux = {{[](const std::vector<double>& t) { return 3.0 * t[0] * t[0]; },
               1.0, 0.0}};
  quad.theta0 = {0.0};
  auto qrep = quadratic_regularizer_check(quad, {0.5, 0.25});
  for (const auto& e : qrep.errors) CHECK(e.max_error <= 1e-10);

  MultiTaskProblem ch;
  ch.primary = [](const std::vector<double>&) { return 0.0; };
  ch.aux = {{[](const std::vector<double>& t) { return std::cosh(t[0]) - 1.0; },
             1.0, 0.0}};
  ch.theta0 = {0.0};
  auto crep = quadratic_regularizer_check(ch, {0.4, 0.2, 0.1});
  REQUIRE(crep.decay_ratios.size() == 2);
  for (double r : crep.decay_ratios) {
    CHECK(r >= 0.0625 * 0.7);
    CHECK(r <= 0.0625 * 1.3);
    CHECK(r <= 1.0 / 8.0);  // at least 8x decay per halving
  }
}

TEST_CASE("cor A.2 rejects non-stationary expansion points") {
  MultiTaskProblem p;
  p.primary = [](const std::vector<double>&) { return 0.0; };
  p.aux = {{[](const std::vector<double>& t) { return t[0]; }, 1.0, 0.0}};
  p.theta0 = {0.0};
  CHECK_THROWS_AS(quadratic_regularizer_check(p, {0.1}), std::invalid_argument);
}

TEST_CASE("assembled penalty hessian PSD implies non-negative penalty") {
  MultiTaskProblem p;
  p.primary = [](const std::vector<double>&) { return 0.0; };
  p.aux = {{[](const std::vector<double>& t) { return t[0] * t[0] + t[1] * t[1]; },
            0.7, 0.0},
           {[](const std::vector<double>& t) { return (t[0] + t[1]) * (t[0] + t[1]); },
            0.3, 0.0}};
  p.theta0 = {0.0, 0.0};
  LossFn penalty = [&p](const std::vector<double>& t) {
    return p.aux[0].weight * p.aux[0].loss(t) + p.aux[1].weight * p.aux[1].loss(t);
  };
  auto H = estimate_hessian(penalty, p.theta0);
  CHECK(min_eigenvalue(H) >= -1e-6);
  // Spot check: the quadratic form is non-negative at random points.
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> t{u(rng), u(rng)};
    CHECK(penalty(t) >= 0.0);
  }
  // A saddle penalty shows a negative eigenvalue.
  LossFn saddle = [](const std::vector<double>& t) { return t[0] * t[0] - t[1] * t[1]; };
  CHECK(min_eigenvalue(estimate_hessian(saddle, {0.0, 0.0})) < -0.5);
}
