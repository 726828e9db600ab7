#pragma once

#include <cstddef>
#include <optional>
#include <utility>

#include "onestep/core.hpp"

namespace onestep {

struct EstimateResult {
  double theta_star = 0.0;
  double theta_hat = 0.0;
  double denominator = 0.0;  // Newton denominator actually used
  std::optional<double> d_star;
  std::optional<std::pair<double, double>> ci;
};

/// Relative cutoff applied to every Newton denominator: |den| must exceed
/// kDegeneracyTolerance * (1 + sum of absolute denominator terms).
inline constexpr double kDegeneracyTolerance = 1e-12;

/// theta* - sum M_i(theta*) / sum M_i'(theta*).
EstimateResult one_step(const EstimatingFamily& fam, double theta_star, const Sample& s);

/// Newton step on sum h_i(theta*) M_i(t) = 0 with weights frozen at theta*.
EstimateResult one_step_weighted(const EstimatingFamily& fam, const WeightFamily& wf,
                                 double theta_star, const Sample& s);

/// Classical one-step for M_i = h_i(t) M~_i(t); needs h_i'.
EstimateResult one_step_factorized(const EstimatingFamily& fam, const WeightFamily& wf,
                                   double theta_star, const Sample& s);

struct Studentized {
  double d_star = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};

/// Data-only normaliser d* (numerator at theta*, denominator at theta**) and
/// the interval theta** -+ z_{1-alpha/2} / |d*|.
Studentized studentize(const EstimatingFamily& fam, const WeightFamily& wf, double theta_star,
                       double theta_hat, const Sample& s, double alpha);

Studentized studentize_unweighted(const EstimatingFamily& fam, double theta_star,
                                  double theta_hat, const Sample& s, double alpha);

/// Copies d* and the interval into an estimate.
EstimateResult attach(EstimateResult r, const Studentized& st);

/// h_i^o = E M_i' / E M_i^2 evaluated at theta and frozen in t.
WeightFamily optimal_weights(const MomentProvider& mp, double theta, std::size_t n);

struct Efficiency {
  double ratio = 1.0;       // (I_h / J_h^2) / (I_o / J_o^2)
  double bound = 1.0;       // 1 + (sqrt(H/h) - 1)^2 / (2 sqrt(H/h))
  double spread = 1.0;      // H/h
  double sharp_bound = 1.0; // (H + h)^2 / (4 H h), attained for two-point designs
};

Efficiency efficiency_ratio(const WeightFamily& wf, const MomentProvider& mp, double theta,
                            std::size_t n);

struct NewtonResult {
  double root = 0.0;
  int iterations = 0;
};

/// Damped Newton on sum h_i(theta_start) M_i(t, x_i) = 0 (weights frozen at
/// the start). Steps are halved (up to 50 times) until the iterate stays in
/// the domain and |score| decreases.
NewtonResult newton_solve(const EstimatingFamily& fam, const WeightFamily& wf,
                          double theta_start, const Sample& s, int max_iter, double tol);

}  // namespace onestep
