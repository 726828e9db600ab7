#include "onestep/regression.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace onestep {

namespace {

using Column = std::shared_ptr<const std::vector<double>>;

Column share(std::vector<double> v) {
  return std::make_shared<const std::vector<double>>(std::move(v));
}

void require_size(std::span<const double> v, std::size_t n, const char* what) {
  if (v.size() != n) {
    throw Error(Errc::invalid_input, std::string(what) + " length does not match the sample");
  }
}

void require_nondegenerate(double den, double scale, const char* what) {
  if (!(std::abs(den) > kDegeneracyTolerance * (1.0 + scale))) {
    throw Error(Errc::degenerate_denominator, std::string(what) + " is numerically zero");
  }
}

// Largest open interval on which 1 + k_i t > 0 for every i.
Interval positivity_domain(const std::vector<double>& k) {
  Interval d;
  for (double v : k) {
    if (v > 0.0) d.lo = std::max(d.lo, -1.0 / v);
    if (v < 0.0) d.hi = std::min(d.hi, -1.0 / v);
  }
  return d;
}

double positive_base(double k, double t, const char* model) {
  const double u = 1.0 + k * t;
  if (!(u > 0.0)) {
    throw Error(Errc::domain, std::string(model) + " model needs 1 + k_i t > 0");
  }
  return u;
}

double mm_base(std::span<const double> b, std::size_t i, double t) {
  return positive_base(b[i], t, "Michaelis-Menten");
}

}  // namespace

VarianceWeights VarianceWeights::unit() {
  return {[](std::size_t, double) { return 1.0; }, [](std::size_t, double) { return 0.0; }};
}

VarianceWeights VarianceWeights::known(std::vector<double> w) {
  for (double v : w) {
    if (!(v > 0.0) || !std::isfinite(v)) throw Error(Errc::invalid_input, "known weights must be positive");
  }
  auto col = share(std::move(w));
  return {[col](std::size_t i, double) { return col->at(i); },
          [](std::size_t, double) { return 0.0; }};
}

VarianceWeights VarianceWeights::one_plus_square() {
  return {[](std::size_t, double t) { return 1.0 + t * t; },
          [](std::size_t, double t) { return 2.0 * t; }};
}

double RegressionModel::mean(std::size_t i, double t) const {
  detail::require_in_domain(domain, t);
  return detail::require_finite(f(i, t), "f_i");
}

double RegressionModel::slope(std::size_t i, double t) const {
  detail::require_in_domain(domain, t);
  return detail::require_finite(f_prime(i, t), "f_i'");
}

double RegressionModel::curvature(std::size_t i, double t) const {
  if (!f_second) throw Error(Errc::missing_derivative, "model has no second derivative");
  detail::require_in_domain(domain, t);
  return detail::require_finite(f_second(i, t), "f_i''");
}

double RegressionModel::weight(std::size_t i, double t) const {
  detail::require_in_domain(domain, t);
  const double v = detail::require_finite(w.value(i, t), "w_i");
  if (!(v > 0.0)) throw Error(Errc::domain, "variance weight must be positive");
  return v;
}

double RegressionModel::weight_derivative(std::size_t i, double t) const {
  detail::require_in_domain(domain, t);
  if (w.derivative) return detail::require_finite(w.derivative(i, t), "w_i'");
  const double step = 1e-6 * (1.0 + std::abs(t));
  return detail::require_finite((w.value(i, t + step) - w.value(i, t - step)) / (2.0 * step),
                                "w_i' (central difference)");
}

ScalarFunction ScalarFunction::zero() {
  auto z = [](double) { return 0.0; };
  return {z, z, z};
}

ScalarFunction ScalarFunction::square() {
  return {[](double t) { return t * t; }, [](double t) { return 2.0 * t; },
          [](double) { return 2.0; }};
}

ScalarFunction ScalarFunction::exponential() {
  auto e = [](double t) { return std::exp(t); };
  return {e, e, e};
}

RegressionModel linear_model(std::vector<double> a, VarianceWeights w, double sigma) {
  auto ca = share(std::move(a));
  RegressionModel m;
  m.f = [ca](std::size_t i, double t) { return (*ca)[i] * t; };
  m.f_prime = [ca](std::size_t i, double) { return (*ca)[i]; };
  m.f_second = [](std::size_t, double) { return 0.0; };
  m.w = std::move(w);
  m.sigma = sigma;
  return m;
}

RegressionModel sqrt_model(std::vector<double> a, VarianceWeights w, double sigma) {
  RegressionModel m;
  m.domain = positivity_domain(a);
  auto ca = share(std::move(a));
  m.f = [ca](std::size_t i, double t) { return std::sqrt(positive_base((*ca)[i], t, "square-root")); };
  m.f_prime = [ca](std::size_t i, double t) {
    return (*ca)[i] / (2.0 * std::sqrt(positive_base((*ca)[i], t, "square-root")));
  };
  m.f_second = [ca](std::size_t i, double t) {
    const double u = positive_base((*ca)[i], t, "square-root");
    return -(*ca)[i] * (*ca)[i] / (4.0 * u * std::sqrt(u));
  };
  m.w = std::move(w);
  m.sigma = sigma;
  return m;
}

RegressionModel plinear_model(std::vector<double> a, std::vector<double> b, ScalarFunction g,
                              VarianceWeights w, double sigma) {
  if (a.size() != b.size()) throw Error(Errc::invalid_input, "a and b lengths differ");
  auto ca = share(std::move(a));
  auto cb = share(std::move(b));
  auto cg = std::make_shared<const ScalarFunction>(std::move(g));
  RegressionModel m;
  m.f = [ca, cb, cg](std::size_t i, double t) { return (*ca)[i] * t + (*cb)[i] * cg->value(t); };
  m.f_prime = [ca, cb, cg](std::size_t i, double t) {
    return (*ca)[i] + (*cb)[i] * cg->derivative(t);
  };
  if (cg->second) {
    m.f_second = [cb, cg](std::size_t i, double t) { return (*cb)[i] * cg->second(t); };
  }
  m.w = std::move(w);
  m.sigma = sigma;
  return m;
}

RegressionModel mm_model(std::vector<double> a, std::vector<double> b, VarianceWeights w,
                         double sigma) {
  if (a.size() != b.size()) throw Error(Errc::invalid_input, "a and b lengths differ");
  RegressionModel m;
  m.domain = positivity_domain(b);
  auto ca = share(std::move(a));
  auto cb = share(std::move(b));
  m.f = [ca, cb](std::size_t i, double t) { return (*ca)[i] / mm_base(*cb, i, t); };
  m.f_prime = [ca, cb](std::size_t i, double t) {
    const double u = mm_base(*cb, i, t);
    return -((*ca)[i] * (*cb)[i]) / (u * u);
  };
  m.f_second = [ca, cb](std::size_t i, double t) {
    const double u = mm_base(*cb, i, t);
    return 2.0 * (*ca)[i] * (*cb)[i] * (*cb)[i] / (u * u * u);
  };
  m.w = std::move(w);
  m.sigma = sigma;
  return m;
}

Families to_families(const RegressionModel& model) {
  auto mdl = std::make_shared<const RegressionModel>(model);
  Families out;
  out.fam.m = [mdl](std::size_t i, double t, double x) { return x - mdl->mean(i, t); };
  out.fam.m_prime = [mdl](std::size_t i, double t, double) { return -mdl->slope(i, t); };
  out.fam.domain = model.domain;
  out.wf.h = [mdl](std::size_t i, double t) { return mdl->weight(i, t) * mdl->slope(i, t); };
  if (model.f_second) {
    out.wf.h_prime = [mdl](std::size_t i, double t) {
      return mdl->weight_derivative(i, t) * mdl->slope(i, t) +
             mdl->weight(i, t) * mdl->curvature(i, t);
    };
    out.wf.h_prime_numerical = !model.w.derivative;
  }
  out.wf.domain = model.domain;
  return out;
}

Families generalized_families(const RegressionModel& model, IndexedScalar g) {
  auto mdl = std::make_shared<const RegressionModel>(model);
  auto cg = std::make_shared<const IndexedScalar>(std::move(g));
  Families out;
  out.fam.m = [mdl, cg](std::size_t i, double t, double x) {
    return cg->value(i, t) * (x - mdl->mean(i, t));
  };
  out.fam.m_prime = [mdl, cg](std::size_t i, double t, double x) {
    return cg->derivative(i, t) * (x - mdl->mean(i, t)) - cg->value(i, t) * mdl->slope(i, t);
  };
  out.fam.domain = model.domain;
  out.wf.h = [mdl, cg](std::size_t i, double t) {
    const double gi = cg->value(i, t);
    if (gi == 0.0) throw Error(Errc::division_by_zero, "g_i(t) vanishes");
    return mdl->weight(i, t) * mdl->slope(i, t) / gi;
  };
  out.wf.domain = model.domain;
  return out;
}

IndexedScalar mm_linearizer(std::vector<double> b) {
  auto cb = share(std::move(b));
  return {[cb](std::size_t i, double t) { return 1.0 + (*cb)[i] * t; },
          [cb](std::size_t i, double) { return (*cb)[i]; }};
}

MomentProvider regression_moments(const RegressionModel& model) {
  auto mdl = std::make_shared<const RegressionModel>(model);
  return {[mdl](std::size_t i, double t) { return mdl->sigma * mdl->sigma / mdl->weight(i, t); },
          [mdl](std::size_t i, double t) { return -mdl->slope(i, t); }};
}

MomentProvider regression_moments(const RegressionModel& model, IndexedScalar g) {
  auto mdl = std::make_shared<const RegressionModel>(model);
  auto cg = std::make_shared<const IndexedScalar>(std::move(g));
  return {[mdl, cg](std::size_t i, double t) {
            const double gi = cg->value(i, t);
            return gi * gi * mdl->sigma * mdl->sigma / mdl->weight(i, t);
          },
          [mdl, cg](std::size_t i, double t) { return -cg->value(i, t) * mdl->slope(i, t); }};
}

MomentProvider lse_moments(const RegressionModel& model) { return regression_moments(model); }

Families lse_families(const RegressionModel& model) {
  RegressionModel unweighted = model;
  unweighted.w = VarianceWeights::unit();
  return to_families(unweighted);
}

EstimateResult lse_one_step(const RegressionModel& model, double theta_star, const Sample& s) {
  if (!model.f_second) throw Error(Errc::missing_derivative, "least-squares one-step needs f_i''");
  const auto x = s.x();
  ExactSum num;
  ExactSum den;
  ExactSum scale;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double r = x[i] - model.mean(i, theta_star);
    const double d1 = model.slope(i, theta_star);
    const double d2 = model.curvature(i, theta_star);
    num.add(detail::require_finite(r * d1, "residual term"));
    den.add(detail::require_finite(d1 * d1, "slope term"));
    den.add(detail::require_finite(-(r * d2), "curvature term"));
    scale.add(d1 * d1);
    scale.add(std::abs(r * d2));
  }
  EstimateResult out;
  out.theta_star = theta_star;
  out.denominator = den.value();
  require_nondegenerate(out.denominator, scale.value(), "least-squares Newton denominator");
  out.theta_hat = detail::require_finite(theta_star + num.value() / out.denominator, "update");
  return out;
}

EstimateResult weighted_one_step(const RegressionModel& model, double theta_star,
                                 const Sample& s) {
  const auto x = s.x();
  ExactSum num;
  ExactSum den;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double slope = model.slope(i, theta_star);
    const double wd = model.weight(i, theta_star) * slope;
    num.add(detail::require_finite(wd * (x[i] - model.mean(i, theta_star)), "score term"));
    den.add(detail::require_finite(wd * slope, "information term"));
  }
  EstimateResult out;
  out.theta_star = theta_star;
  out.denominator = den.value();
  require_nondegenerate(out.denominator, out.denominator, "weighted information sum");
  out.theta_hat = detail::require_finite(theta_star + num.value() / out.denominator, "update");
  return out;
}

double asymptotic_variance(const RegressionModel& model, double theta, std::size_t n) {
  ExactSum info;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = model.slope(i, theta);
    info.add(model.weight(i, theta) * d * d);
  }
  const double total = info.value();
  if (total == 0.0) throw Error(Errc::degenerate, "sum of w_i f_i'^2 vanishes");
  return model.sigma * model.sigma / total;
}

void check_contrasts(const Contrasts& c, const Sample& s) {
  require_size(c.c, s.size(), "contrast vector");
  ExactSum sum;
  ExactSum scale;
  if (c.kind == ContrastKind::sum_zero) {
    for (double v : c.c) {
      sum.add(v);
      scale.add(std::abs(v));
    }
  } else {
    const auto b = s.b();
    for (std::size_t i = 0; i < c.c.size(); ++i) {
      sum.add(c.c[i] * b[i]);
      scale.add(std::abs(c.c[i] * b[i]));
    }
  }
  if (std::abs(sum.value()) > 1e-12 * scale.value()) {
    throw Error(Errc::constraint, c.kind == ContrastKind::sum_zero
                                      ? "contrasts must sum to zero"
                                      : "contrasts must be orthogonal to b");
  }
}

Contrasts default_contrasts(const Sample& s, ContrastKind kind) {
  const std::size_t n = s.size();
  if (n < 2) throw Error(Errc::invalid_input, "default contrasts need at least two observations");
  const auto a = s.a();
  std::vector<double> c(a.begin(), a.end());
  if (kind == ContrastKind::sum_zero) {
    const double mean = exact_sum(a) / static_cast<double>(n);
    for (double& v : c) v -= mean;
  } else {
    const auto b = s.b();
    ExactSum ab;
    ExactSum bb;
    for (std::size_t i = 0; i < n; ++i) {
      ab.add(a[i] * b[i]);
      bb.add(b[i] * b[i]);
    }
    if (bb.value() == 0.0) throw Error(Errc::degenerate_denominator, "b is identically zero");
    const double coef = ab.value() / bb.value();
    for (std::size_t i = 0; i < n; ++i) c[i] -= coef * b[i];
  }
  double amax = 0.0;
  double cmax = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    amax = std::max(amax, std::abs(a[i]));
    cmax = std::max(cmax, std::abs(c[i]));
  }
  if (!(cmax > 1e-10 * amax)) {
    throw Error(Errc::degenerate_denominator, "covariates admit no nondegenerate contrast");
  }
  for (double& v : c) v /= cmax;
  return {std::move(c), kind};
}

double preliminary_sqrt(const Contrasts& c, const Sample& s) {
  if (c.kind != ContrastKind::sum_zero) throw Error(Errc::constraint, "square-root preliminary needs sum-zero contrasts");
  check_contrasts(c, s);
  const auto x = s.x();
  const auto a = s.a();
  ExactSum num;
  ExactSum den;
  ExactSum scale;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double cw = c.c[i] * s.known_weight(i);
    num.add(cw * (x[i] * x[i] - 1.0));
    den.add(cw * a[i]);
    scale.add(std::abs(cw * a[i]));
  }
  require_nondegenerate(den.value(), scale.value(), "sum c_i w_i a_i");
  return num.value() / den.value();
}

double preliminary_plinear(const Contrasts& c, const Sample& s) {
  if (c.kind != ContrastKind::b_orthogonal) throw Error(Errc::constraint, "partially linear preliminary needs b-orthogonal contrasts");
  check_contrasts(c, s);
  const auto x = s.x();
  const auto a = s.a();
  ExactSum num;
  ExactSum den;
  ExactSum scale;
  for (std::size_t i = 0; i < s.size(); ++i) {
    num.add(c.c[i] * x[i]);
    den.add(c.c[i] * a[i]);
    scale.add(std::abs(c.c[i] * a[i]));
  }
  require_nondegenerate(den.value(), scale.value(), "sum c_i a_i");
  return num.value() / den.value();
}

double preliminary_mm(const std::vector<double>& c, const Sample& s) {
  require_size(c, s.size(), "contrast vector");
  const auto x = s.x();
  const auto a = s.a();
  const auto b = s.b();
  ExactSum num;
  ExactSum den;
  ExactSum scale;
  for (std::size_t i = 0; i < s.size(); ++i) {
    num.add(c[i] * (a[i] - x[i]));
    den.add(c[i] * b[i] * x[i]);
    scale.add(std::abs(c[i] * b[i] * x[i]));
  }
  require_nondegenerate(den.value(), scale.value(), "sum c_i b_i x_i");
  return num.value() / den.value();
}

EstimateResult plinear_one_step(const ScalarFunction& g, double theta_star, const Sample& s,
                                const VarianceWeights& w) {
  const auto x = s.x();
  const auto a = s.a();
  const auto b = s.b();
  const double gv = detail::require_finite(g.value(theta_star), "g");
  const double gd = detail::require_finite(g.derivative(theta_star), "g'");
  ExactSum num;
  ExactSum den;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double slope = a[i] + b[i] * gd;
    const double wi = detail::require_finite(w.value(i, theta_star), "w_i");
    if (!(wi > 0.0)) throw Error(Errc::domain, "variance weight must be positive");
    const double wd = wi * slope;
    num.add(detail::require_finite(wd * (x[i] - (a[i] * theta_star + b[i] * gv)), "score term"));
    den.add(detail::require_finite(wd * slope, "information term"));
  }
  EstimateResult out;
  out.theta_star = theta_star;
  out.denominator = den.value();
  require_nondegenerate(out.denominator, out.denominator, "weighted information sum");
  out.theta_hat = detail::require_finite(theta_star + num.value() / out.denominator, "update");
  return out;
}

EstimateResult mm_one_step(const RegressionModel& model, double theta_star, const Sample& s) {
  const auto x = s.x();
  const auto a = s.a();
  const auto b = s.b();
  ExactSum num;
  ExactSum den;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double u = mm_base(b, i, theta_star);
    const double wi = model.weight(i, theta_star);
    const double g = wi * ((a[i] * b[i]) / (u * u));
    num.add(detail::require_finite((x[i] - a[i] / u) * g, "score term"));
    den.add(detail::require_finite(g * ((a[i] * b[i]) / (u * u)), "information term"));
  }
  EstimateResult out;
  out.theta_star = theta_star;
  out.denominator = den.value();
  require_nondegenerate(out.denominator, out.denominator, "weighted information sum");
  out.theta_hat = detail::require_finite(theta_star - num.value() / out.denominator, "update");
  return out;
}

double mm_closed_form(const RegressionModel& model, double theta_star, const Sample& s) {
  const auto x = s.x();
  const auto a = s.a();
  const auto b = s.b();
  ExactSum num;
  ExactSum den;
  ExactSum scale;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double u = mm_base(b, i, theta_star);
    const double k = a[i] * b[i] * model.weight(i, theta_star) / (u * u * u);
    num.add(detail::require_finite(k * (a[i] - x[i]), "numerator term"));
    den.add(detail::require_finite(k * b[i] * x[i], "denominator term"));
    scale.add(std::abs(k * b[i] * x[i]));
  }
  require_nondegenerate(den.value(), scale.value(), "closed-form denominator");
  return num.value() / den.value();
}

double mm_closed_form_correction(const RegressionModel& model, double theta_star,
                                 const Sample& s) {
  const auto x = s.x();
  const auto a = s.a();
  const auto b = s.b();
  ExactSum num;
  ExactSum den;
  ExactSum scale;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double u = mm_base(b, i, theta_star);
    const double wi = model.weight(i, theta_star);
    num.add(detail::require_finite((x[i] - a[i] / u) * wi * a[i] * b[i] / (u * u), "score term"));
    const double d = wi * a[i] * b[i] * b[i] * x[i] / (u * u * u);
    den.add(detail::require_finite(d, "denominator term"));
    scale.add(std::abs(d));
  }
  require_nondegenerate(den.value(), scale.value(), "closed-form denominator");
  return theta_star - num.value() / den.value();
}

}  // namespace onestep
