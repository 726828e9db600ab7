#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "onestep/errors.hpp"

namespace onestep {

/// Open interval (lo, hi); either bound may be infinite.
struct Interval {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();

  static Interval whole() { return {}; }
  bool contains(double t) const { return t > lo && t < hi; }
  Interval intersect(const Interval& other) const;
};

/// Exact floating-point summation (Shewchuk partials, correctly rounded).
///
/// The returned value is the exact sum rounded once, so it does not depend on
/// the order in which terms were added. Two accumulators can be merged without
/// losing that property, which is what the parallel reductions rely on.
class ExactSum {
 public:
  void add(double x);
  void merge(const ExactSum& other);
  double value() const;

 private:
  std::vector<double> partials_;
};

double exact_sum(std::span<const double> xs);

/// Observed responses plus the per-observation constants of a design.
class Sample {
 public:
  Sample(std::vector<double> x, std::vector<double> a,
         std::optional<std::vector<double>> b = std::nullopt,
         std::optional<std::vector<double>> w_known = std::nullopt);

  std::size_t size() const { return x_.size(); }
  std::span<const double> x() const { return x_; }
  std::span<const double> a() const { return a_; }
  bool has_b() const { return b_.has_value(); }
  bool has_known_weights() const { return w_.has_value(); }
  /// Throws invalid_input when the sample carries no b column.
  std::span<const double> b() const;
  /// Known variance weight of observation i, 1 when the sample has none.
  double known_weight(std::size_t i) const { return w_ ? (*w_)[i] : 1.0; }
  const std::optional<std::vector<double>>& known_weights() const { return w_; }

  /// Same design, different responses.
  Sample with_responses(std::vector<double> x) const;

 private:
  std::vector<double> x_;
  std::vector<double> a_;
  std::optional<std::vector<double>> b_;
  std::optional<std::vector<double>> w_;
};

using IndexedFunction = std::function<double(std::size_t, double)>;
using IndexedEstimatingFunction = std::function<double(std::size_t, double, double)>;

/// M_i(t, x) and its t-derivative on a parameter domain.
struct EstimatingFamily {
  IndexedEstimatingFunction m;
  IndexedEstimatingFunction m_prime;
  Interval domain;

  double value(std::size_t i, double t, double x) const;
  double derivative(std::size_t i, double t, double x) const;
};

/// Weight functions h_i(t), optionally with their derivatives.
struct WeightFamily {
  IndexedFunction h;
  IndexedFunction h_prime;  // empty when no derivative is available
  Interval domain;
  /// Set when h_prime relies on numerical differentiation somewhere.
  bool h_prime_numerical = false;

  bool has_derivative() const { return static_cast<bool>(h_prime); }
  double value(std::size_t i, double t) const;
  double derivative(std::size_t i, double t) const;
};

/// h_i(t) = 1 on the whole line.
WeightFamily unit_weights();

/// Moments E M_i^2(theta, X_i) and E M_i'(theta, X_i).
struct MomentProvider {
  IndexedFunction e_m2;
  IndexedFunction e_mprime;
};

struct ScoreSums {
  double num = 0.0;  // sum h_i(t) M_i(t, x_i)
  double den = 0.0;  // sum h_i(t) M_i'(t, x_i)
  double den_abs = 0.0;  // sum |h_i(t) M_i'(t, x_i)|, the scale of den
};

ScoreSums score_sums(const EstimatingFamily& fam, const WeightFamily& wf, double t,
                     const Sample& s);

struct AsymptoticMoments {
  double i_nh = 0.0;
  double j_nh = 0.0;

  /// I/J^2, the normalising variance of the limit law.
  double variance() const { return i_nh / (j_nh * j_nh); }
};

AsymptoticMoments asymptotic_moments(const MomentProvider& mp, const WeightFamily& wf,
                                     double theta, std::size_t n);

namespace detail {

inline double require_finite(double v, const char* what) {
  if (!std::isfinite(v)) {
    throw Error(Errc::non_finite, std::string("non-finite value in ") + what);
  }
  return v;
}

void require_in_domain(const Interval& domain, double t);

}  // namespace detail

}  // namespace onestep
