#include "qu/mathkernel.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace qu {

void check_distribution(const Distribution& p) {
  if (p.empty()) throw NotADistribution("empty distribution");
  double sum = 0.0;
  for (double x : p) {
    if (!(x >= 0.0)) throw NotADistribution("negative probability");
    sum += x;
  }
  if (std::fabs(sum - 1.0) > 1e-9) throw NotADistribution("probabilities do not sum to 1");
}

double cross_entropy(const std::vector<int>& targets,
                     const std::vector<Distribution>& probs) {
  if (targets.size() != probs.size())
    throw std::invalid_argument("one distribution per target position required");
  double loss = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    check_distribution(probs[i]);
    int t = targets[i];
    if (t < 0 || static_cast<std::size_t>(t) >= probs[i].size())
      throw std::invalid_argument("target id outside vocabulary");
    double p = probs[i][t];
    if (p <= 0.0) throw ZeroProbabilityTarget("target token has probability 0");
    loss -= std::log(p);
  }
  return loss;
}

double kl_divergence(const Distribution& p, const Distribution& q) {
  check_distribution(p);
  check_distribution(q);
  if (p.size() != q.size()) throw std::invalid_argument("distribution lengths differ");
  double kl = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (p[j] == 0.0) continue;  // 0 * ln(0/q) = 0
    if (q[j] <= 0.0) throw SupportViolation("P puts mass where Q has none");
    kl += p[j] * std::log(p[j] / q[j]);
  }
  return kl;
}

double total_loss(double sft, const std::vector<double>& kd_per_example,
                  const DistillConfig& cfg) {
  if (kd_per_example.empty()) throw std::invalid_argument("empty KD list");
  if (cfg.lambda < 0.0) throw std::invalid_argument("lambda must be >= 0");
  double mean = 0.0;
  for (double kd : kd_per_example) mean += kd;
  mean /= static_cast<double>(kd_per_example.size());
  return sft + cfg.lambda * mean;
}

namespace {

double finite_or_throw(double x) {
  if (!std::isfinite(x)) throw NonFiniteLoss("loss evaluated to a non-finite value");
  return x;
}

// Odometer walk over the grid; calls fn with each point.
void for_each_grid_point(const GridSpec& grid,
                         const std::function<void(const std::vector<double>&)>& fn) {
  if (grid.lo.size() != grid.hi.size() || grid.lo.empty())
    throw std::invalid_argument("grid bounds malformed");
  if (!(grid.step > 0.0)) throw std::invalid_argument("grid step must be > 0");
  std::size_t dims = grid.lo.size();
  std::vector<long long> steps(dims);
  for (std::size_t d = 0; d < dims; ++d) {
    if (grid.hi[d] < grid.lo[d]) throw std::invalid_argument("grid bounds inverted");
    steps[d] = static_cast<long long>(std::floor((grid.hi[d] - grid.lo[d]) / grid.step + 1e-9));
  }
  std::vector<long long> idx(dims, 0);
  std::vector<double> theta(dims);
  while (true) {
    for (std::size_t d = 0; d < dims; ++d) theta[d] = grid.lo[d] + idx[d] * grid.step;
    fn(theta);
    std::size_t d = 0;
    while (d < dims && ++idx[d] > steps[d]) idx[d++] = 0;
    if (d == dims) break;
  }
}

}  // namespace

EquivalenceReport lagrangian_equivalence_check(const MultiTaskProblem& p,
                                               const GridSpec& grid) {
  EquivalenceReport report;
  for (const auto& task : p.aux) {
    if (task.weight < 0.0) throw std::invalid_argument("aux weight must be >= 0");
    report.expected_offset -= task.weight * task.budget;
  }
  double best_relaxed = 0.0, best_penalized = 0.0;
  bool first = true;
  double max_err = 0.0;
  for_each_grid_point(grid, [&](const std::vector<double>& theta) {
    double l0 = finite_or_throw(p.primary(theta));
    double relaxed = l0, penalized = l0;
    for (const auto& task : p.aux) {
      double lk = finite_or_throw(task.loss(theta));
      relaxed += task.weight * (lk - task.budget);
      penalized += task.weight * lk;
    }
    max_err = std::max(max_err, std::fabs((relaxed - penalized) - report.expected_offset));
    if (first || relaxed < best_relaxed) {
      best_relaxed = relaxed;
      report.argmin_constrained = theta;
    }
    if (first || penalized < best_penalized) {
      best_penalized = penalized;
      report.argmin_penalized = theta;
    }
    first = false;
  });
  report.max_offset_error = max_err;
  double tol = 1e-12 * std::max(1.0, std::fabs(report.expected_offset));
  report.offset_constant = max_err <= tol;
  report.argmin_agrees = report.argmin_constrained == report.argmin_penalized;
  report.passed = report.offset_constant && report.argmin_agrees;
  return report;
}

std::vector<std::vector<double>> estimate_hessian(const LossFn& f,
                                                  const std::vector<double>& theta0,
                                                  double h) {
  std::size_t n = theta0.size();
  std::vector<std::vector<double>> H(n, std::vector<double>(n, 0.0));
  auto at = [&](std::vector<double> theta) { return finite_or_throw(f(theta)); };
  double f0 = at(theta0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      double v;
      if (i == j) {
        auto tp = theta0, tm = theta0;
        tp[i] += h;
        tm[i] -= h;
        v = (at(tp) - 2.0 * f0 + at(tm)) / (h * h);
      } else {
        auto tpp = theta0, tpm = theta0, tmp = theta0, tmm = theta0;
        tpp[i] += h; tpp[j] += h;
        tpm[i] += h; tpm[j] -= h;
        tmp[i] -= h; tmp[j] += h;
        tmm[i] -= h; tmm[j] -= h;
        v = (at(tpp) - at(tpm) - at(tmp) + at(tmm)) / (4.0 * h * h);
      }
      H[i][j] = H[j][i] = v;
    }
  }
  return H;
}

double min_eigenvalue(std::vector<std::vector<double>> m) {
  std::size_t n = m.size();
  if (n == 0) throw std::invalid_argument("empty matrix");
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += m[i][j] * m[i][j];
    if (off < 1e-24) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::fabs(m[p][q]) < 1e-18) continue;
        double phi = 0.5 * std::atan2(2.0 * m[p][q], m[q][q] - m[p][p]);
        double c = std::cos(phi), s = std::sin(phi);
        for (std::size_t k = 0; k < n; ++k) {
          double mkp = m[k][p], mkq = m[k][q];
          m[k][p] = c * mkp - s * mkq;
          m[k][q] = s * mkp + c * mkq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          double mpk = m[p][k], mqk = m[q][k];
          m[p][k] = c * mpk - s * mqk;
          m[q][k] = s * mpk + c * mqk;
        }
      }
  }
  double lo = m[0][0];
  for (std::size_t i = 1; i < n; ++i) lo = std::min(lo, m[i][i]);
  return lo;
}

QuadraticReport quadratic_regularizer_check(const MultiTaskProblem& p,
                                            const std::vector<double>& radii) {
  if (p.aux.empty()) throw std::invalid_argument("no auxiliary tasks");
  if (radii.empty()) throw std::invalid_argument("no radii supplied");
  std::size_t n = p.theta0.size();
  LossFn penalty = [&p](const std::vector<double>& theta) {
    double v = 0.0;
    for (const auto& task : p.aux) v += task.weight * task.loss(theta);
    return v;
  };

  // The expansion has no first-order term, so it only applies at a
  // stationary point of the penalty.
  double gnorm = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto tp = p.theta0, tm = p.theta0;
    tp[i] += 1e-6;
    tm[i] -= 1e-6;
    double g = (finite_or_throw(penalty(tp)) - finite_or_throw(penalty(tm))) / 2e-6;
    gnorm += g * g;
  }
  if (std::sqrt(gnorm) > 1e-6)
    throw std::invalid_argument("penalty gradient at theta0 is not zero");

  auto H = estimate_hessian(penalty, p.theta0, 1e-4);
  auto H2 = estimate_hessian(penalty, p.theta0, 5e-5);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double scale = std::max({1.0, std::fabs(H[i][j]), std::fabs(H2[i][j])});
      if (std::fabs(H[i][j] - H2[i][j]) / scale > 1e-3)
        throw HessianEstimateUnstable("finite-difference Hessian disagrees across steps");
    }

  // Deterministic direction set: axes plus fixed pseudo-random unit vectors.
  std::vector<std::vector<double>> dirs;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> d(n, 0.0);
    d[i] = 1.0;
    dirs.push_back(d);
    d[i] = -1.0;
    dirs.push_back(d);
  }
  std::mt19937_64 rng(12345);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int s = 0; s < 128; ++s) {
    std::vector<double> d(n);
    double norm = 0.0;
    for (auto& x : d) {
      x = normal(rng);
      norm += x * x;
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) continue;
    for (auto& x : d) x /= norm;
    dirs.push_back(d);
  }

  double f0 = finite_or_throw(penalty(p.theta0));
  QuadraticReport report;
  for (double r : radii) {
    double worst = 0.0;
    for (const auto& d : dirs) {
      std::vector<double> theta = p.theta0;
      double quad = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        theta[i] += r * d[i];
        for (std::size_t j = 0; j < n; ++j) quad += r * d[i] * H[i][j] * r * d[j];
      }
      double model = f0 + 0.5 * quad;
      worst = std::max(worst, std::fabs(finite_or_throw(penalty(theta)) - model));
    }
    report.errors.push_back({r, worst});
  }
  for (std::size_t i = 0; i + 1 < report.errors.size(); ++i) {
    double prev = report.errors[i].max_error;
    report.decay_ratios.push_back(prev > 0.0 ? report.errors[i + 1].max_error / prev
                                             : 0.0);
  }
  report.passed = true;
  return report;
}

}  // namespace qu
