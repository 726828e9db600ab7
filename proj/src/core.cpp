#include "onestep/core.hpp"

#include <algorithm>
#include <sstream>
#include <utility>

namespace onestep {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_input: return "InvalidInput";
    case Errc::domain: return "DomainError";
    case Errc::non_finite: return "NonFiniteError";
    case Errc::degenerate: return "DegenerateError";
    case Errc::degenerate_denominator: return "DegenerateDenominator";
    case Errc::missing_derivative: return "MissingDerivative";
    case Errc::zero_variance: return "ZeroVariance";
    case Errc::sign_mismatch: return "SignMismatch";
    case Errc::no_convergence: return "NoConvergence";
    case Errc::division_by_zero: return "DivisionByZero";
    case Errc::constraint: return "ConstraintError";
    case Errc::config: return "ConfigError";
    case Errc::empty_input: return "EmptyInput";
  }
  return "Error";
}

Interval Interval::intersect(const Interval& other) const {
  return {std::max(lo, other.lo), std::min(hi, other.hi)};
}

namespace detail {

void require_in_domain(const Interval& domain, double t) {
  if (!domain.contains(t)) {
    std::ostringstream msg;
    msg << "parameter " << t << " outside (" << domain.lo << ", " << domain.hi << ")";
    throw Error(Errc::domain, msg.str());
  }
}

}  // namespace detail

// Shewchuk's non-overlapping partials; value() rounds the exact sum once,
// including the half-way correction step.
void ExactSum::add(double x) {
  std::size_t kept = 0;
  for (double y : partials_) {
    if (std::abs(x) < std::abs(y)) std::swap(x, y);
    const double hi = x + y;
    const double lo = y - (hi - x);
    if (lo != 0.0) partials_[kept++] = lo;
    x = hi;
  }
  partials_.resize(kept);
  partials_.push_back(x);
}

void ExactSum::merge(const ExactSum& other) {
  for (double p : other.partials_) add(p);
}

double ExactSum::value() const {
  std::size_t n = partials_.size();
  if (n == 0) return 0.0;
  double hi = partials_[--n];
  double lo = 0.0;
  while (n > 0) {
    const double x = hi;
    const double y = partials_[--n];
    hi = x + y;
    const double yr = hi - x;
    lo = y - yr;
    if (lo != 0.0) break;
  }
  if (n > 0 && ((lo < 0.0 && partials_[n - 1] < 0.0) || (lo > 0.0 && partials_[n - 1] > 0.0))) {
    const double y = lo * 2.0;
    const double x = hi + y;
    const double yr = x - hi;
    if (y == yr) hi = x;
  }
  return hi;
}

double exact_sum(std::span<const double> xs) {
  ExactSum acc;
  for (double v : xs) acc.add(v);
  return acc.value();
}

namespace {

void check_column(const std::vector<double>& v, std::size_t n, const char* name) {
  if (v.size() != n) {
    throw Error(Errc::invalid_input, std::string("column ") + name + " has length " +
                                         std::to_string(v.size()) + ", expected " +
                                         std::to_string(n));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(v[i])) {
      throw Error(Errc::invalid_input, std::string("column ") + name + " has a non-finite entry at row " +
                                           std::to_string(i + 1));
    }
  }
}

}  // namespace

Sample::Sample(std::vector<double> x, std::vector<double> a,
               std::optional<std::vector<double>> b,
               std::optional<std::vector<double>> w_known)
    : x_(std::move(x)), a_(std::move(a)), b_(std::move(b)), w_(std::move(w_known)) {
  const std::size_t n = x_.size();
  if (n == 0) throw Error(Errc::invalid_input, "sample must contain at least one observation");
  check_column(x_, n, "x");
  check_column(a_, n, "a");
  if (b_) check_column(*b_, n, "b");
  if (w_) {
    check_column(*w_, n, "w");
    for (std::size_t i = 0; i < n; ++i) {
      if (!((*w_)[i] > 0.0)) {
        throw Error(Errc::invalid_input,
                    "known weight w must be positive, row " + std::to_string(i + 1));
      }
    }
  }
}

std::span<const double> Sample::b() const {
  if (!b_) throw Error(Errc::invalid_input, "sample has no b column");
  return *b_;
}

Sample Sample::with_responses(std::vector<double> x) const {
  return Sample(std::move(x), a_, b_, w_);
}

double EstimatingFamily::value(std::size_t i, double t, double x) const {
  detail::require_in_domain(domain, t);
  return detail::require_finite(m(i, t, x), "M_i");
}

double EstimatingFamily::derivative(std::size_t i, double t, double x) const {
  detail::require_in_domain(domain, t);
  return detail::require_finite(m_prime(i, t, x), "M_i'");
}

double WeightFamily::value(std::size_t i, double t) const {
  detail::require_in_domain(domain, t);
  return detail::require_finite(h(i, t), "h_i");
}

double WeightFamily::derivative(std::size_t i, double t) const {
  if (!h_prime) throw Error(Errc::missing_derivative, "weight family has no derivative");
  detail::require_in_domain(domain, t);
  return detail::require_finite(h_prime(i, t), "h_i'");
}

WeightFamily unit_weights() {
  return {[](std::size_t, double) { return 1.0; }, [](std::size_t, double) { return 0.0; },
          Interval::whole()};
}

ScoreSums score_sums(const EstimatingFamily& fam, const WeightFamily& wf, double t,
                     const Sample& s) {
  detail::require_in_domain(fam.domain.intersect(wf.domain), t);
  ExactSum num;
  ExactSum den;
  ExactSum den_abs;
  const auto x = s.x();
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double h = wf.value(i, t);
    num.add(detail::require_finite(h * fam.value(i, t, x[i]), "h_i M_i"));
    const double d = detail::require_finite(h * fam.derivative(i, t, x[i]), "h_i M_i'");
    den.add(d);
    den_abs.add(std::abs(d));
  }
  return {detail::require_finite(num.value(), "score numerator"),
          detail::require_finite(den.value(), "score denominator"),
          detail::require_finite(den_abs.value(), "score denominator")};
}

AsymptoticMoments asymptotic_moments(const MomentProvider& mp, const WeightFamily& wf,
                                     double theta, std::size_t n) {
  if (n == 0) throw Error(Errc::invalid_input, "n must be at least 1");
  ExactSum i_acc;
  ExactSum j_acc;
  for (std::size_t i = 0; i < n; ++i) {
    const double h = wf.value(i, theta);
    const double m2 = detail::require_finite(mp.e_m2(i, theta), "E M_i^2");
    if (m2 < 0.0) throw Error(Errc::invalid_input, "E M_i^2 must be non-negative");
    i_acc.add(h * h * m2);
    j_acc.add(h * detail::require_finite(mp.e_mprime(i, theta), "E M_i'"));
  }
  AsymptoticMoments out{i_acc.value(), j_acc.value()};
  if (out.i_nh == 0.0) throw Error(Errc::degenerate, "I_{n,h} vanishes");
  if (out.j_nh == 0.0) throw Error(Errc::degenerate, "J_{n,h} vanishes");
  return out;
}

}  // namespace onestep
