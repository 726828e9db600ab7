#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "onestep/core.hpp"
#include "onestep/estimators.hpp"

namespace onestep {

/// Variance-weight function w_i(t) (Var eps_i = sigma^2 / w_i(t)) with an
/// optional analytic derivative.
struct VarianceWeights {
  IndexedFunction value;
  IndexedFunction derivative;  // may be empty

  static VarianceWeights unit();
  /// Constant lift of known per-observation weights.
  static VarianceWeights known(std::vector<double> w);
  /// w_i(t) = 1 + t^2 for every i.
  static VarianceWeights one_plus_square();
};

/// X_i = f_i(theta) + eps_i with Var eps_i = sigma^2 / w_i(theta).
struct RegressionModel {
  IndexedFunction f;
  IndexedFunction f_prime;
  IndexedFunction f_second;  // may be empty
  VarianceWeights w;
  double sigma = 1.0;
  Interval domain;

  double mean(std::size_t i, double t) const;
  double slope(std::size_t i, double t) const;
  double curvature(std::size_t i, double t) const;
  double weight(std::size_t i, double t) const;
  /// Analytic w_i' when available, else a central difference with step
  /// 1e-6 * (1 + |t|).
  double weight_derivative(std::size_t i, double t) const;
};

/// Scalar function g(t) with first and second derivatives.
struct ScalarFunction {
  std::function<double(double)> value;
  std::function<double(double)> derivative;
  std::function<double(double)> second;

  static ScalarFunction zero();
  static ScalarFunction square();
  static ScalarFunction exponential();
};

RegressionModel linear_model(std::vector<double> a, VarianceWeights w, double sigma = 1.0);
/// f_i(t) = sqrt(1 + a_i t); needs 1 + a_i t > 0.
RegressionModel sqrt_model(std::vector<double> a, VarianceWeights w, double sigma = 1.0);
/// f_i(t) = a_i t + b_i g(t).
RegressionModel plinear_model(std::vector<double> a, std::vector<double> b, ScalarFunction g,
                              VarianceWeights w, double sigma = 1.0);
/// Michaelis-Menten f_i(t) = a_i / (1 + b_i t); needs 1 + b_i t > 0.
RegressionModel mm_model(std::vector<double> a, std::vector<double> b, VarianceWeights w,
                         double sigma = 1.0);

struct Families {
  EstimatingFamily fam;
  WeightFamily wf;
};

/// M_i = x - f_i(t), h_i = w_i(t) f_i'(t).
Families to_families(const RegressionModel& model);

/// Indexed function g_i(t) with derivative.
struct IndexedScalar {
  IndexedFunction value;
  IndexedFunction derivative;
};

/// M_i = g_i(t)(x - f_i(t)), h_i = w_i(t) f_i'(t) / g_i(t).
Families generalized_families(const RegressionModel& model, IndexedScalar g);

/// g_i(t) = 1 + b_i t, which makes the Michaelis-Menten equation linear in t.
IndexedScalar mm_linearizer(std::vector<double> b);

/// E M_i^2 = g_i^2 sigma^2 / w_i and E M_i' = -g_i f_i' for the families
/// above (g = 1 when omitted).
MomentProvider regression_moments(const RegressionModel& model);
MomentProvider regression_moments(const RegressionModel& model, IndexedScalar g);
/// Moments for the unweighted least-squares equation sum f_i'(x - f_i) = 0.
MomentProvider lse_moments(const RegressionModel& model);
/// h_i = f_i'(t), M_i = x - f_i(t).
Families lse_families(const RegressionModel& model);

EstimateResult lse_one_step(const RegressionModel& model, double theta_star, const Sample& s);
EstimateResult weighted_one_step(const RegressionModel& model, double theta_star,
                                 const Sample& s);
double asymptotic_variance(const RegressionModel& model, double theta, std::size_t n);

enum class ContrastKind { sum_zero, b_orthogonal };

struct Contrasts {
  std::vector<double> c;
  ContrastKind kind = ContrastKind::sum_zero;
};

/// Throws ConstraintError when c violates its constraint against s.
void check_contrasts(const Contrasts& c, const Sample& s);

Contrasts default_contrasts(const Sample& s, ContrastKind kind);

double preliminary_sqrt(const Contrasts& c, const Sample& s);
double preliminary_plinear(const Contrasts& c, const Sample& s);
double preliminary_mm(const std::vector<double>& c, const Sample& s);

EstimateResult plinear_one_step(const ScalarFunction& g, double theta_star, const Sample& s,
                                const VarianceWeights& w);
EstimateResult mm_one_step(const RegressionModel& model, double theta_star, const Sample& s);
/// Ratio form of the explicit Michaelis-Menten estimator.
double mm_closed_form(const RegressionModel& model, double theta_star, const Sample& s);
/// Same estimator written as theta* minus a Newton-like correction.
double mm_closed_form_correction(const RegressionModel& model, double theta_star,
                                 const Sample& s);

}  // namespace onestep
