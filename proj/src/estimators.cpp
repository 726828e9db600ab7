#include "onestep/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "onestep/normal.hpp"

namespace onestep {

namespace {

void require_nondegenerate(double den, double scale, const char* what) {
  if (!(std::abs(den) > kDegeneracyTolerance * (1.0 + scale))) {
    throw Error(Errc::degenerate_denominator, std::string(what) + " is numerically zero");
  }
}

void require_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(Errc::invalid_input, "alpha must lie in (0, 1)");
}

}  // namespace

EstimateResult one_step(const EstimatingFamily& fam, double theta_star, const Sample& s) {
  return one_step_weighted(fam, unit_weights(), theta_star, s);
}

EstimateResult one_step_weighted(const EstimatingFamily& fam, const WeightFamily& wf,
                                 double theta_star, const Sample& s) {
  const ScoreSums sums = score_sums(fam, wf, theta_star, s);
  require_nondegenerate(sums.den, sums.den_abs, "weighted score derivative");
  EstimateResult r;
  r.theta_star = theta_star;
  r.denominator = sums.den;
  r.theta_hat = detail::require_finite(theta_star - sums.num / sums.den, "one-step update");
  return r;
}

EstimateResult one_step_factorized(const EstimatingFamily& fam, const WeightFamily& wf,
                                   double theta_star, const Sample& s) {
  if (!wf.has_derivative()) {
    throw Error(Errc::missing_derivative, "factorized one-step needs h_i'");
  }
  const ScoreSums sums = score_sums(fam, wf, theta_star, s);
  ExactSum extra;
  ExactSum extra_abs;
  const auto x = s.x();
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double term =
        detail::require_finite(wf.derivative(i, theta_star) * fam.value(i, theta_star, x[i]),
                               "h_i' M_i");
    extra.add(term);
    extra_abs.add(std::abs(term));
  }
  ExactSum den;
  den.add(sums.den);
  den.add(extra.value());
  EstimateResult r;
  r.theta_star = theta_star;
  r.denominator = den.value();
  require_nondegenerate(r.denominator, sums.den_abs + extra_abs.value(),
                        "factorized Newton denominator");
  r.theta_hat = detail::require_finite(theta_star - sums.num / r.denominator, "one-step update");
  return r;
}

Studentized studentize(const EstimatingFamily& fam, const WeightFamily& wf, double theta_star,
                       double theta_hat, const Sample& s, double alpha) {
  require_alpha(alpha);
  const ScoreSums at_star = score_sums(fam, wf, theta_star, s);

  const Interval domain = fam.domain.intersect(wf.domain);
  detail::require_in_domain(domain, theta_hat);
  ExactSum squares;
  ExactSum scale;
  const auto x = s.x();
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double h = wf.value(i, theta_hat);
    const double hm = h * fam.value(i, theta_hat, x[i]);
    squares.add(detail::require_finite(hm * hm, "h_i^2 M_i^2"));
    scale.add(std::abs(h * x[i]));
  }
  const double root = std::sqrt(squares.value());
  // Residuals at rounding level mean the fit is exact and d* is meaningless.
  if (!(root > kDegeneracyTolerance * (1.0 + scale.value()))) {
    throw Error(Errc::degenerate_denominator, "studentizer variance sum is numerically zero");
  }
  Studentized out;
  out.d_star = detail::require_finite(at_star.den / root, "d*");
  const double half = normal_quantile(1.0 - alpha / 2.0) / std::abs(out.d_star);
  out.ci_lo = theta_hat - half;
  out.ci_hi = theta_hat + half;
  return out;
}

Studentized studentize_unweighted(const EstimatingFamily& fam, double theta_star,
                                  double theta_hat, const Sample& s, double alpha) {
  return studentize(fam, unit_weights(), theta_star, theta_hat, s, alpha);
}

EstimateResult attach(EstimateResult r, const Studentized& st) {
  r.d_star = st.d_star;
  r.ci = std::pair{st.ci_lo, st.ci_hi};
  return r;
}

WeightFamily optimal_weights(const MomentProvider& mp, double theta, std::size_t n) {
  std::vector<double> h(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double m2 = detail::require_finite(mp.e_m2(i, theta), "E M_i^2");
    if (m2 == 0.0) {
      throw Error(Errc::zero_variance, "E M_i^2 vanishes at index " + std::to_string(i));
    }
    h[i] = detail::require_finite(mp.e_mprime(i, theta), "E M_i'") / m2;
  }
  WeightFamily wf;
  wf.h = [h = std::move(h)](std::size_t i, double) { return h.at(i); };
  wf.h_prime = [](std::size_t, double) { return 0.0; };
  wf.domain = Interval::whole();
  return wf;
}

// I/J^2 is unchanged by h -> -h, so a family whose every weight has the sign
// opposite to h^o is accepted and compared after flipping it.
Efficiency efficiency_ratio(const WeightFamily& wf, const MomentProvider& mp, double theta,
                            std::size_t n) {
  if (n == 0) throw Error(Errc::invalid_input, "n must be at least 1");
  ExactSum i_acc;
  ExactSum j_acc;
  ExactSum info;
  double orientation = 0.0;
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double h = wf.value(i, theta);
    const double m2 = detail::require_finite(mp.e_m2(i, theta), "E M_i^2");
    const double mp1 = detail::require_finite(mp.e_mprime(i, theta), "E M_i'");
    if (m2 <= 0.0) throw Error(Errc::zero_variance, "E M_i^2 must be positive");
    i_acc.add(h * h * m2);
    j_acc.add(h * mp1);
    if (mp1 == 0.0) continue;
    info.add(mp1 * mp1 / m2);
    double ratio = h / (mp1 / m2);
    if (orientation == 0.0 && ratio != 0.0) orientation = ratio > 0.0 ? 1.0 : -1.0;
    ratio *= orientation;
    if (!(ratio > 0.0)) {
      throw Error(Errc::sign_mismatch,
                  "sign of h_i differs from the optimal weight at index " + std::to_string(i));
    }
    lo = std::min(lo, ratio);
    hi = std::max(hi, ratio);
  }
  if (orientation == 0.0) throw Error(Errc::degenerate, "no index with E M_i' != 0");
  const double j = j_acc.value();
  if (j == 0.0) throw Error(Errc::degenerate, "J_{n,h} vanishes");

  Efficiency e;
  e.ratio = (i_acc.value() / (j * j)) * info.value();
  e.spread = hi / lo;
  const double root = std::sqrt(e.spread);
  e.bound = 1.0 + (root - 1.0) * (root - 1.0) / (2.0 * root);
  e.sharp_bound = (hi + lo) * (hi + lo) / (4.0 * hi * lo);
  return e;
}

NewtonResult newton_solve(const EstimatingFamily& fam, const WeightFamily& wf,
                          double theta_start, const Sample& s, int max_iter, double tol) {
  detail::require_in_domain(fam.domain.intersect(wf.domain), theta_start);
  const std::size_t n = s.size();
  const auto x = s.x();
  std::vector<double> frozen(n);
  for (std::size_t i = 0; i < n; ++i) frozen[i] = wf.value(i, theta_start);

  auto score = [&](double t) {
    ExactSum acc;
    for (std::size_t i = 0; i < n; ++i) {
      acc.add(detail::require_finite(frozen[i] * fam.value(i, t, x[i]), "h_i M_i"));
    }
    return acc.value();
  };
  auto slope = [&](double t, double& scale) {
    ExactSum acc;
    ExactSum abs_acc;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = detail::require_finite(frozen[i] * fam.derivative(i, t, x[i]), "h_i M_i'");
      acc.add(d);
      abs_acc.add(std::abs(d));
    }
    scale = abs_acc.value();
    return acc.value();
  };

  double t = theta_start;
  double f = score(t);
  for (int it = 0; it <= max_iter; ++it) {
    if (std::abs(f) <= tol) return {t, it};
    if (it == max_iter) break;
    double scale = 0.0;
    const double d = slope(t, scale);
    require_nondegenerate(d, scale, "Newton slope");
    const double step = f / d;

    bool accepted = false;
    double lambda = 1.0;
    for (int halving = 0; halving <= 50; ++halving, lambda *= 0.5) {
      const double candidate = t - lambda * step;
      if (!fam.domain.contains(candidate)) continue;
      double fc = 0.0;
      try {
        fc = score(candidate);
      } catch (const Error& e) {
        if (e.code() == Errc::domain || e.code() == Errc::non_finite) continue;
        throw;
      }
      if (std::abs(fc) < std::abs(f)) {
        t = candidate;
        f = fc;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  throw Error(Errc::no_convergence, "Newton iteration did not reach the score tolerance");
}

}  // namespace onestep
