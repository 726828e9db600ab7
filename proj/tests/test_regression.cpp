#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "onestep/estimators.hpp"
#include "onestep/regression.hpp"
#include "oracle_values.hpp"

using namespace onestep;

namespace {

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::invalid_input;
}

double rel(double a, double b) { return std::abs(a - b) / std::max(1e-300, std::abs(b)); }

double central(const std::function<double(double)>& f, double t, double eps = 1e-6) {
  return (f(t + eps) - f(t - eps)) / (2 * eps);
}

IndexedScalar unit_g() {
  return {[](std::size_t, double) { return 1.0; }, [](std::size_t, double) { return 0.0; }};
}

struct Draw {
  std::mt19937_64 rng;
  explicit Draw(unsigned seed) : rng(seed) {}
  double operator()(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  std::vector<double> vec(std::size_t n, double lo, double hi) {
    std::vector<double> v(n);
    for (double& e : v) e = (*this)(lo, hi);
    return v;
  }
};

std::vector<double> noiseless(const RegressionModel& m, std::size_t n, double theta) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = m.mean(i, theta);
  return x;
}

}  // namespace

TEST_CASE("to_families") {
  const auto lin = to_families(linear_model({1.0, 2.0}, VarianceWeights::unit()));
  CHECK(lin.fam.value(1, 0.5, 3.0) == 2.0);
  CHECK(lin.fam.derivative(1, 0.5, 3.0) == -2.0);
  CHECK(lin.wf.value(1, 0.5) == 2.0);

  const auto sq = sqrt_model({1.0, 3.0}, VarianceWeights::unit());
  const auto f = to_families(sq);
  for (double t : {0.0, 0.5, 2.0}) {
    for (std::size_t i = 0; i < 2; ++i) CHECK(f.wf.value(i, t) == sq.slope(i, t));
  }
  CHECK(code_of([&] { f.fam.value(1, -0.5, 1.0); }) == Errc::domain);
  CHECK(code_of([&] { f.wf.value(1, -0.5); }) == Errc::domain);
  CHECK(code_of([&] { sq.mean(1, -1.0 / 3.0); }) == Errc::domain);
  CHECK_FALSE(f.wf.h_prime_numerical);
}

TEST_CASE("model derivatives match finite differences") {
  Draw d(1);
  const std::vector<double> a = d.vec(6, 0.5, 2.5);
  const std::vector<double> b = d.vec(6, 0.2, 1.2);
  const std::vector<RegressionModel> models = {
      linear_model(a, VarianceWeights::one_plus_square()),
      sqrt_model(a, VarianceWeights::known(d.vec(6, 0.5, 2.0))),
      plinear_model(a, b, ScalarFunction::square(), VarianceWeights::one_plus_square()),
      plinear_model(a, b, ScalarFunction::exponential(), VarianceWeights::unit()),
      mm_model(a, b, VarianceWeights::one_plus_square()),
      mm_model(a, b, VarianceWeights::unit())};
  for (const auto& m : models) {
    const auto fam = to_families(m);
    REQUIRE(fam.wf.has_derivative());
    for (double t : {0.3, 1.0, 1.7}) {
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double fd1 = central([&](double s) { return m.mean(i, s); }, t);
        CHECK(std::abs(m.slope(i, t) - fd1) <= 1e-5 * (1 + std::abs(m.slope(i, t))));
        const double fd2 = central([&](double s) { return m.slope(i, s); }, t);
        CHECK(std::abs(m.curvature(i, t) - fd2) <= 1e-5 * (1 + std::abs(m.curvature(i, t))));
        const double hp = fam.wf.derivative(i, t);
        const double fdh = central([&](double s) { return fam.wf.value(i, s); }, t);
        CHECK(std::abs(hp - fdh) <= 1e-5 * (1 + std::abs(hp)));
      }
    }
  }
}

TEST_CASE("numerical w' is flagged") {
  VarianceWeights w;
  w.value = [](std::size_t, double t) { return 2.0 + std::sin(t); };
  const auto m = mm_model({2.0, 3.0}, {1.0, 2.0}, w);
  const auto f = to_families(m);
  CHECK(f.wf.h_prime_numerical);
  CHECK(m.weight_derivative(0, 0.4) == doctest::Approx(std::cos(0.4)).epsilon(1e-8));
  const double fdh = central([&](double s) { return f.wf.value(1, s); }, 0.4);
  CHECK(f.wf.derivative(1, 0.4) == doctest::Approx(fdh).epsilon(1e-6));
}

TEST_CASE("generalized_families") {
  const auto m = mm_model({2.0, 3.0, 1.5}, {1.0, 2.0, 0.5}, VarianceWeights::one_plus_square());
  const auto base = to_families(m);
  const auto g1 = generalized_families(m, unit_g());
  for (double t : {0.2, 1.1}) {
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(g1.fam.value(i, t, 0.8) == base.fam.value(i, t, 0.8));
      CHECK(g1.fam.derivative(i, t, 0.8) == base.fam.derivative(i, t, 0.8));
      CHECK(g1.wf.value(i, t) == base.wf.value(i, t));
    }
  }

  // n = 2 by hand: with g_i = 1 + b_i t the equation sum k_i (a_i - x_i (1 + b_i t)) = 0,
  // k_i = w_i a_i b_i / u_i^3 at theta*, is linear in t.
  const std::vector<double> a = {2.0, 3.0};
  const std::vector<double> b = {1.0, 2.0};
  const std::vector<double> x = {1.1, 0.9};
  const double ts = 0.8;
  const auto mm = mm_model(a, b, VarianceWeights::unit());
  const Sample s(x, a, b);
  double p = 0.0;
  double q = 0.0;
  for (std::size_t i = 0; i < 2; ++i) {
    const double u = 1 + b[i] * ts;
    const double k = a[i] * b[i] / (u * u * u);
    p += k * (a[i] - x[i]);
    q += k * x[i] * b[i];
  }
  const auto lin = generalized_families(mm, mm_linearizer(b));
  const double via_step = one_step_weighted(lin.fam, lin.wf, ts, s).theta_hat;
  CHECK(rel(mm_closed_form(mm, ts, s), p / q) <= 1e-14);
  CHECK(rel(via_step, p / q) <= 1e-13);

  IndexedScalar vanishing{[](std::size_t, double t) { return t - 1.0; },
                          [](std::size_t, double) { return 1.0; }};
  const auto bad = generalized_families(mm, vanishing);
  CHECK(code_of([&] { bad.wf.value(0, 1.0); }) == Errc::division_by_zero);
}

TEST_CASE("lse_one_step") {
  const auto sq = sqrt_model({1.0, 3.0}, VarianceWeights::unit());
  const Sample s({1.40, 2.05}, {1.0, 3.0});
  CHECK(rel(lse_one_step(sq, 0.9, s).theta_hat, oracle::kLseSqrt) <= 1e-14);
  CHECK(lse_one_step(sq, 1.0, Sample(noiseless(sq, 2, 1.0), {1.0, 3.0})).theta_hat == 1.0);

  Draw d(2);
  for (int rep = 0; rep < 50; ++rep) {
    const auto a = d.vec(5, -2.0, 2.0);
    const auto lin = linear_model(a, VarianceWeights::unit());
    const Sample ls(d.vec(5, -3.0, 3.0), a);
    const double t = d(-5.0, 5.0);
    CHECK(rel(lse_one_step(lin, t, ls).theta_hat, weighted_one_step(lin, t, ls).theta_hat) <= 1e-14);
  }
  RegressionModel no_second = sq;
  no_second.f_second = nullptr;
  CHECK(code_of([&] { lse_one_step(no_second, 0.9, s); }) == Errc::missing_derivative);
}

TEST_CASE("weighted_one_step on the square-root model") {
  Draw d(3);
  for (int rep = 0; rep < 500; ++rep) {
    const std::size_t n = 2 + rep % 10;
    const auto a = d.vec(n, 0.1, 3.0);
    const auto w = d.vec(n, 0.2, 4.0);
    const auto x = d.vec(n, 0.5, 3.0);
    const double ts = d(0.0, 2.0);
    const auto m = sqrt_model(a, VarianceWeights::known(w));
    const double got = weighted_one_step(m, ts, Sample(x, a, std::nullopt, w)).theta_hat;
    long double num = 0.0L;
    long double den = 0.0L;
    for (std::size_t i = 0; i < n; ++i) {
      const long double u = 1.0L + static_cast<long double>(a[i]) * ts;
      num += (x[i] / std::sqrt(u) - 1.0L) * w[i] * a[i];
      den += static_cast<long double>(w[i]) * a[i] * a[i] / u;
    }
    CHECK(rel(got, static_cast<double>(ts + 2.0L * num / den)) <= 1e-13);
  }
  const auto lin = linear_model({1.0, 2.0}, VarianceWeights::unit());
  CHECK(weighted_one_step(lin, 0.0, Sample({1.0, 3.0}, {1.0, 2.0})).theta_hat ==
        doctest::Approx(1.4).epsilon(1e-15));
}

TEST_CASE("asymptotic_variance") {
  const auto sq = sqrt_model({1.0, 3.0}, VarianceWeights::unit());
  const double v = asymptotic_variance(sq, 1.0, 2);
  CHECK(rel(v, oracle::kSqrtAsymptoticVariance) <= 1e-15);
  // 4 sigma^2 / sum w a^2 / (1 + theta a).
  CHECK(rel(v, 4.0 / (1.0 / 2.0 + 9.0 / 4.0)) <= 1e-15);
  RegressionModel loud = sq;
  loud.sigma = 2.0;
  CHECK(asymptotic_variance(loud, 1.0, 2) == 4.0 * v);
  const auto flat = linear_model({0.0, 0.0}, VarianceWeights::unit());
  CHECK(code_of([&] { asymptotic_variance(flat, 1.0, 2); }) == Errc::degenerate);
}

TEST_CASE("preliminary_sqrt") {
  const Sample s({std::sqrt(2.0), 2.0}, {1.0, 3.0}, std::nullopt, std::vector<double>{1.0, 1.0});
  CHECK(preliminary_sqrt({{-1.0, 1.0}, ContrastKind::sum_zero}, s) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(code_of([&] { preliminary_sqrt({{1.0, 1.0}, ContrastKind::sum_zero}, s); }) ==
        Errc::constraint);
  const Sample noisy({1.2, 1.55, 1.9}, {0.5, 1.5, 2.5}, std::nullopt,
                     std::vector<double>{1.0, 2.0, 0.5});
  CHECK(rel(preliminary_sqrt(default_contrasts(noisy, ContrastKind::sum_zero), noisy),
            oracle::kPrelimSqrt) <= 1e-14);
  CHECK(code_of([&] { preliminary_sqrt({{-1.0, 1.0}, ContrastKind::sum_zero}, Sample({1.0, 1.0}, {2.0, 2.0})); }) ==
        Errc::degenerate_denominator);
}

TEST_CASE("preliminary_plinear") {
  const double g = 7.5;  // g(theta0) is arbitrary; it cancels
  const Sample s({1.0 * 2 + g, 2.0 * 2 + g}, {1.0, 2.0}, std::vector<double>{1.0, 1.0});
  CHECK(preliminary_plinear({{-1.0, 1.0}, ContrastKind::b_orthogonal}, s) == 2.0);
  const Sample same_a({1.0, 2.0}, {1.0, 1.0}, std::vector<double>{1.0, 1.0});
  CHECK(code_of([&] { preliminary_plinear({{-1.0, 1.0}, ContrastKind::b_orthogonal}, same_a); }) ==
        Errc::degenerate_denominator);
  const Sample noisy({1.6, 3.1, 5.2}, {1.0, 2.0, 3.0}, std::vector<double>{0.5, 1.0, 2.0});
  const auto c = default_contrasts(noisy, ContrastKind::b_orthogonal);
  CHECK(c.c[0] == doctest::Approx(oracle::kPlinearContrast0).epsilon(1e-15));
  CHECK(c.c[1] == doctest::Approx(oracle::kPlinearContrast1).epsilon(1e-15));
  CHECK(c.c[2] == doctest::Approx(oracle::kPlinearContrast2).epsilon(1e-15));
  CHECK(rel(preliminary_plinear(c, noisy), oracle::kPrelimPlinear) <= 1e-14);
}

TEST_CASE("plinear_one_step") {
  const std::vector<double> a = {1.0, 2.0, 3.0};
  const std::vector<double> b = {0.5, 1.0, 2.0};
  const Sample s({1.6, 3.1, 5.2}, a, b);
  const auto g = ScalarFunction::square();
  CHECK(rel(plinear_one_step(g, 0.95, s, VarianceWeights::unit()).theta_hat,
            oracle::kPlinearOneStepUnit) <= 1e-14);
  CHECK(rel(plinear_one_step(g, 0.95, s, VarianceWeights::known({1.0, 2.0, 0.5})).theta_hat,
            oracle::kPlinearOneStepKnown) <= 1e-14);

  const auto m = plinear_model(a, b, g, VarianceWeights::unit());
  CHECK(plinear_one_step(g, 1.0, Sample(noiseless(m, 3, 1.0), a, b), VarianceWeights::unit()).theta_hat == 1.0);

  const auto zero = ScalarFunction::zero();
  const auto lin = linear_model(a, VarianceWeights::known({1.0, 2.0, 0.5}));
  CHECK(rel(plinear_one_step(zero, 0.3, s, VarianceWeights::known({1.0, 2.0, 0.5})).theta_hat,
            weighted_one_step(lin, 0.3, s).theta_hat) <= 1e-15);
}

TEST_CASE("preliminary_mm") {
  const Sample s({1.0, 1.0}, {2.0, 3.0}, std::vector<double>{1.0, 2.0});
  CHECK(preliminary_mm({1.0, 1.0}, s) == 1.0);
  CHECK(code_of([&] { preliminary_mm({0.0, 0.0}, s); }) == Errc::degenerate_denominator);
  const Sample noisy({1.1, 0.9}, {2.0, 3.0}, std::vector<double>{1.0, 2.0});
  CHECK(rel(preliminary_mm({1.0, 1.0}, noisy), oracle::kMmPairStar) <= 1e-15);
  for (double c : {-3.0, 0.01, 12.5}) {
    CHECK(rel(preliminary_mm({c, 2 * c}, noisy), preliminary_mm({1.0, 2.0}, noisy)) <= 1e-15);
  }
}

TEST_CASE("mm_one_step and closed forms") {
  const Sample s({1.1, 0.9}, {2.0, 3.0}, std::vector<double>{1.0, 2.0});
  const auto m = mm_model({2.0, 3.0}, {1.0, 2.0}, VarianceWeights::unit());
  const double ts = preliminary_mm({1.0, 1.0}, s);
  const auto r = mm_one_step(m, ts, s);
  CHECK(rel(r.theta_hat, oracle::kMmPairHat) <= 1e-14);
  CHECK(rel(mm_closed_form(m, ts, s), oracle::kMmPairClosed) <= 1e-14);
  CHECK(rel(mm_closed_form_correction(m, ts, s), oracle::kMmPairClosed) <= 1e-13);
  const auto f = to_families(m);
  CHECK(rel(one_step_weighted(f.fam, f.wf, ts, s).theta_hat, oracle::kMmPairHat) <= 1e-14);

  const Sample exact({1.0, 1.0}, {2.0, 3.0}, std::vector<double>{1.0, 2.0});
  CHECK(mm_one_step(m, 1.0, exact).theta_hat == 1.0);
  CHECK(mm_closed_form(m, 1.0, exact) == 1.0);
  CHECK(code_of([&] { mm_one_step(m, -0.6, s); }) == Errc::domain);
}

TEST_CASE("default_contrasts") {
  const auto c = default_contrasts(Sample({0.0, 0.0, 0.0}, {1.0, 2.0, 3.0}), ContrastKind::sum_zero);
  CHECK(c.c == std::vector<double>{-1.0, 0.0, 1.0});
  const auto p = default_contrasts(Sample({0.0, 0.0}, {1.0, 2.0}, std::vector<double>{1.0, 1.0}),
                                   ContrastKind::b_orthogonal);
  CHECK(p.c == std::vector<double>{-1.0, 1.0});
  CHECK(code_of([] {
          default_contrasts(Sample({0.0, 0.0}, {1.0, 2.0}, std::vector<double>{1.0, 2.0}),
                            ContrastKind::b_orthogonal);
        }) == Errc::degenerate_denominator);
  CHECK(code_of([] { default_contrasts(Sample({0.0}, {1.0}), ContrastKind::sum_zero); }) ==
        Errc::invalid_input);
}

TEST_CASE("adapter coherence on random instances") {
  Draw d(4);
  for (int rep = 0; rep < 300; ++rep) {
    const std::size_t n = 2 + rep % 15;
    const auto a = d.vec(n, 0.5, 2.5);
    const auto b = d.vec(n, 0.2, 1.2);
    const auto x = d.vec(n, 0.3, 2.0);
    const auto wk = d.vec(n, 0.3, 3.0);
    const double ts = d(0.2, 2.0);
    const Sample s(x, a, b, wk);

    for (const auto& w : {VarianceWeights::known(wk), VarianceWeights::one_plus_square()}) {
      const auto mm = mm_model(a, b, w);
      const auto fm = to_families(mm);
      CHECK(rel(mm_one_step(mm, ts, s).theta_hat,
                one_step_weighted(fm.fam, fm.wf, ts, s).theta_hat) <= 1e-14);

      const auto g = ScalarFunction::square();
      const auto pl = plinear_model(a, b, g, w);
      const auto fp = to_families(pl);
      CHECK(rel(plinear_one_step(g, ts, s, w).theta_hat,
                one_step_weighted(fp.fam, fp.wf, ts, s).theta_hat) <= 1e-14);
    }
    const auto lin = linear_model(a, VarianceWeights::unit());
    const auto fl = to_families(lin);
    CHECK(rel(lse_one_step(lin, ts, s).theta_hat,
              one_step_weighted(fl.fam, fl.wf, ts, s).theta_hat) <= 1e-14);
  }
}

TEST_CASE("noiseless exactness") {
  Draw d(5);
  for (std::size_t n : {2u, 10u, 100u}) {
    const auto a = d.vec(n, 0.5, 2.5);
    const auto b = d.vec(n, 0.2, 1.2);
    const auto wk = d.vec(n, 0.5, 2.0);
    const double theta = d(0.5, 1.5);
    const auto sq = sqrt_model(a, VarianceWeights::known(wk));
    const Sample ss(noiseless(sq, n, theta), a, b, wk);
    CHECK(std::abs(preliminary_sqrt(default_contrasts(ss, ContrastKind::sum_zero), ss) - theta) <= 1e-10);
    CHECK(weighted_one_step(sq, theta, ss).theta_hat == theta);

    const auto pl = plinear_model(a, b, ScalarFunction::square(), VarianceWeights::one_plus_square());
    const Sample ps(noiseless(pl, n, theta), a, b);
    if (n > 2) {
      CHECK(std::abs(preliminary_plinear(default_contrasts(ps, ContrastKind::b_orthogonal), ps) - theta) <= 1e-10);
    }
    CHECK(weighted_one_step(pl, theta, ps).theta_hat == theta);

    const auto mm = mm_model(a, b, VarianceWeights::one_plus_square());
    const Sample ms(noiseless(mm, n, theta), a, b);
    CHECK(std::abs(preliminary_mm(std::vector<double>(n, 1.0), ms) - theta) <= 1e-10);
    CHECK(std::abs(preliminary_mm(d.vec(n, 0.1, 1.0), ms) - theta) <= 1e-10);
    CHECK(mm_one_step(mm, theta, ms).theta_hat == theta);
    CHECK(std::abs(mm_closed_form(mm, theta, ms) - theta) <= 1e-10);
  }
}

TEST_CASE("optimal weights align with the quasi-likelihood weights") {
  Draw d(6);
  const std::size_t n = 12;
  const auto a = d.vec(n, 0.5, 2.5);
  const auto b = d.vec(n, 0.2, 1.2);
  const std::vector<RegressionModel> models = {
      mm_model(a, b, VarianceWeights::one_plus_square(), 0.3),
      sqrt_model(a, VarianceWeights::known(d.vec(n, 0.5, 2.0)), 0.1),
      plinear_model(a, b, ScalarFunction::square(), VarianceWeights::unit(), 2.0)};
  for (const auto& m : models) {
    const double theta = 0.9;
    const auto mp = regression_moments(m);
    const auto ho = optimal_weights(mp, theta, n);
    const auto f = to_families(m);
    const double k = ho.value(0, theta) / f.wf.value(0, theta);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(ho.value(i, theta) == doctest::Approx(k * f.wf.value(i, theta)).epsilon(1e-14));
      CHECK(ho.value(i, theta) ==
            doctest::Approx(-m.weight(i, theta) * m.slope(i, theta) / (m.sigma * m.sigma)).epsilon(1e-14));
    }
    CHECK(std::abs(efficiency_ratio(f.wf, mp, theta, n).ratio - 1.0) <= 1e-12);
  }
}
