#pragma once

#include "qu/json.hpp"

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace qu {

struct ZeroProbabilityTarget : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct SupportViolation : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct NotADistribution : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct NonFiniteLoss : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct HessianEstimateUnstable : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Distribution = std::vector<double>;

/// Entries non-negative, summing to 1 within 1e-9.
void check_distribution(const Distribution& p);

/// -sum_i log P(y_i | x_i): one probability row per target position,
/// positions summed. Natural log (nats).
double cross_entropy(const std::vector<int>& targets,
                     const std::vector<Distribution>& probs);

/// sum_j P_j ln(P_j / Q_j), with 0*ln(0/q) = 0.
double kl_divergence(const Distribution& p, const Distribution& q);

struct DistillConfig {
  double lambda = 0.5;  // imitation weight; no canonical value exists
};

/// sft + lambda * mean(kd): the KD term carries its 1/N average inside.
double total_loss(double sft, const std::vector<double>& kd_per_example,
                  const DistillConfig& cfg);

using LossFn = std::function<double(const std::vector<double>&)>;

struct AuxiliaryTask {
  LossFn loss;
  double weight = 0.0;  // lambda_k >= 0
  double budget = 0.0;  // epsilon_k
};

struct MultiTaskProblem {
  LossFn primary;
  std::vector<AuxiliaryTask> aux;
  std::vector<double> theta0;
};

struct GridSpec {
  std::vector<double> lo, hi;
  double step = 1e-3;
};

struct EquivalenceReport {
  std::vector<double> argmin_constrained;
  std::vector<double> argmin_penalized;
  bool argmin_agrees = false;
  double expected_offset = 0.0;  // -sum lambda_k epsilon_k
  double max_offset_error = 0.0;
  bool offset_constant = false;
  bool passed = false;
};

/// Grid minimization of the relaxed objective L0 + sum lambda_k (L_k - eps_k)
/// against the penalized objective L0 + sum lambda_k L_k. The two must share
/// an argmin and differ by the same constant at every grid point.
EquivalenceReport lagrangian_equivalence_check(const MultiTaskProblem& p,
                                               const GridSpec& grid);

struct RadiusError {
  double radius = 0.0;
  double max_error = 0.0;  // E(r)
};

struct QuadraticReport {
  std::vector<RadiusError> errors;  // one per requested radius
  std::vector<double> decay_ratios;  // E(r_{i+1}) / E(r_i) for halving radii
  bool passed = false;
};

/// Remainder of the second-order expansion around theta0 with no first-order
/// term: E(r) = max over the sphere of radius r of
/// |L(theta) - L(theta0) - 1/2 d^T H d|. Rejects problems whose gradient at
/// theta0 is not ~0, since the expansion assumes it.
QuadraticReport quadratic_regularizer_check(const MultiTaskProblem& p,
                                            const std::vector<double>& radii);

/// Central finite-difference Hessian at theta0.
std::vector<std::vector<double>> estimate_hessian(const LossFn& f,
                                                  const std::vector<double>& theta0,
                                                  double h = 1e-4);

/// Smallest eigenvalue via cyclic Jacobi; used for the PSD penalty check.
double min_eigenvalue(std::vector<std::vector<double>> m);

}  // namespace qu
