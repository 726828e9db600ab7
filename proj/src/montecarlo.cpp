#include "onestep/montecarlo.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>

#include "onestep/estimators.hpp"
#include "onestep/normal.hpp"

namespace onestep {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view s, const std::pair<std::string_view, Enum> (&table)[N],
                const char* what) {
  for (const auto& [name, value] : table) {
    if (name == s) return value;
  }
  throw Error(Errc::config, std::string("unknown ") + what + " '" + std::string(s) + "'");
}

constexpr std::pair<std::string_view, ModelId> kModels[] = {
    {"sqrt", ModelId::sqrt}, {"plinear", ModelId::plinear}, {"mm", ModelId::mm},
    {"custom-linear", ModelId::custom_linear}};
constexpr std::pair<std::string_view, Pipeline> kPipelines[] = {
    {"one_step_weighted", Pipeline::one_step_weighted},
    {"one_step_factorized", Pipeline::one_step_factorized},
    {"lse_one_step", Pipeline::lse_one_step},
    {"mm_closed_form", Pipeline::mm_closed_form},
    {"newton_oracle", Pipeline::newton_oracle}};
constexpr std::pair<std::string_view, NoiseShape> kNoise[] = {
    {"gaussian", NoiseShape::gaussian},
    {"scaled-uniform", NoiseShape::scaled_uniform},
    {"scaled-laplace", NoiseShape::scaled_laplace}};
constexpr std::pair<std::string_view, CovariateSpec> kCovariates[] = {
    {"grid", CovariateSpec::grid}, {"grid-unit", CovariateSpec::grid_unit}};

template <typename Enum, std::size_t N>
std::string_view name_of(Enum v, const std::pair<std::string_view, Enum> (&table)[N]) {
  for (const auto& [name, value] : table) {
    if (value == v) return name;
  }
  return "?";
}

// Estimating/weight families and moments the pipeline's normalisations use.
struct PipelineFamilies {
  Families families;
  MomentProvider moments;
};

PipelineFamilies pipeline_families(const SimConfig& cfg, const Scenario& sc) {
  switch (cfg.pipeline) {
    case Pipeline::lse_one_step:
      return {lse_families(sc.model), lse_moments(sc.model)};
    case Pipeline::mm_closed_form:
      return {generalized_families(sc.model, mm_linearizer(sc.b)),
              regression_moments(sc.model, mm_linearizer(sc.b))};
    default:
      return {to_families(sc.model), regression_moments(sc.model)};
  }
}

double pipeline_estimate(const SimConfig& cfg, const Scenario& sc, const Families& f,
                         double theta_star, const Sample& s) {
  switch (cfg.pipeline) {
    case Pipeline::one_step_weighted:
      return one_step_weighted(f.fam, f.wf, theta_star, s).theta_hat;
    case Pipeline::one_step_factorized:
      return one_step_factorized(f.fam, f.wf, theta_star, s).theta_hat;
    case Pipeline::lse_one_step:
      return lse_one_step(sc.model, theta_star, s).theta_hat;
    case Pipeline::mm_closed_form:
      return mm_closed_form(sc.model, theta_star, s);
    case Pipeline::newton_oracle:
      return newton_solve(f.fam, f.wf, theta_star, s, 100, 1e-11 * static_cast<double>(s.size()))
          .root;
  }
  throw Error(Errc::config, "unknown pipeline");
}

double sample_variance(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return kNaN;
  ExactSum acc;
  for (double x : v) acc.add((x - mean) * (x - mean));
  return acc.value() / static_cast<double>(v.size() - 1);
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return kNaN;
  return exact_sum(v) / static_cast<double>(v.size());
}

}  // namespace

std::string_view to_string(ModelId m) { return name_of(m, kModels); }
std::string_view to_string(Pipeline p) { return name_of(p, kPipelines); }
std::string_view to_string(NoiseShape s) { return name_of(s, kNoise); }
std::string_view to_string(CovariateSpec c) { return name_of(c, kCovariates); }
ModelId parse_model(std::string_view s) { return parse_enum(s, kModels, "model"); }
Pipeline parse_pipeline(std::string_view s) { return parse_enum(s, kPipelines, "pipeline"); }
NoiseShape parse_noise(std::string_view s) { return parse_enum(s, kNoise, "noise"); }
CovariateSpec parse_covariates(std::string_view s) {
  return parse_enum(s, kCovariates, "covariate rule");
}

void validate(const SimConfig& cfg) {
  if (cfg.n < 2) throw Error(Errc::config, "n must be at least 2");
  if (cfg.replications < 1) throw Error(Errc::config, "replications must be at least 1");
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw Error(Errc::config, "alpha must lie in (0, 1)");
  if (!(cfg.sigma > 0.0) || !std::isfinite(cfg.sigma)) throw Error(Errc::config, "sigma must be positive");
  if (!std::isfinite(cfg.theta_true)) throw Error(Errc::config, "theta_true must be finite");
  if (cfg.pipeline == Pipeline::mm_closed_form && cfg.model != ModelId::mm) {
    throw Error(Errc::config, "mm_closed_form applies to the mm model only");
  }
  const Scenario sc = make_scenario(cfg);
  if (!sc.model.domain.contains(cfg.theta_true)) {
    throw Error(Errc::config, "theta_true lies outside the model's parameter domain");
  }
}

Scenario make_scenario(const SimConfig& cfg) {
  const std::size_t n = cfg.n;
  Scenario sc;
  sc.a.resize(n);
  sc.b.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.0;
    sc.a[i] = 0.5 + 2.0 * u;
    sc.b[i] = 0.2 + u;
  }
  const bool hetero = cfg.covariates == CovariateSpec::grid;
  auto theta_weights = hetero ? VarianceWeights::one_plus_square() : VarianceWeights::unit();
  switch (cfg.model) {
    case ModelId::sqrt: {
      if (hetero) {
        std::vector<double> w(n);
        for (std::size_t i = 0; i < n; ++i) w[i] = 1.0 + sc.b[i];
        sc.w_known = w;
        sc.model = sqrt_model(sc.a, VarianceWeights::known(std::move(w)), cfg.sigma);
      } else {
        sc.model = sqrt_model(sc.a, VarianceWeights::unit(), cfg.sigma);
      }
      break;
    }
    case ModelId::plinear:
      sc.model = plinear_model(sc.a, sc.b, ScalarFunction::square(), theta_weights, cfg.sigma);
      break;
    case ModelId::mm:
      sc.model = mm_model(sc.a, sc.b, theta_weights, cfg.sigma);
      break;
    case ModelId::custom_linear:
      sc.model = linear_model(sc.a, VarianceWeights::unit(), cfg.sigma);
      break;
  }
  return sc;
}

Sample simulate_sample(const SimConfig& cfg, const Scenario& sc, std::size_t rep) {
  std::vector<double> x(cfg.n);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    const double mean = sc.model.mean(i, cfg.theta_true);
    if (cfg.sigma == 0.0) {
      x[i] = mean;
      continue;
    }
    const double sd = cfg.sigma / std::sqrt(sc.model.weight(i, cfg.theta_true));
    x[i] = mean + sd * standard_noise(cfg.noise, cfg.seed, rep, i);
  }
  return Sample(std::move(x), sc.a, sc.b, sc.w_known);
}

double preliminary_estimate(ModelId model, const Sample& s) {
  switch (model) {
    case ModelId::sqrt:
      return preliminary_sqrt(default_contrasts(s, ContrastKind::sum_zero), s);
    case ModelId::plinear:
      return preliminary_plinear(default_contrasts(s, ContrastKind::b_orthogonal), s);
    case ModelId::mm:
      return preliminary_mm(std::vector<double>(s.size(), 1.0), s);
    case ModelId::custom_linear: {
      const double den = exact_sum(s.a());
      if (den == 0.0) throw Error(Errc::degenerate_denominator, "sum a_i vanishes");
      return exact_sum(s.x()) / den;
    }
  }
  throw Error(Errc::config, "unknown model");
}

double ks_statistic(std::span<const double> xs, const std::function<double(double)>& cdf) {
  if (xs.empty()) throw Error(Errc::empty_input, "KS statistic of an empty sample");
  std::vector<double> sorted(xs.begin(), xs.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double f = cdf(sorted[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

SimResult run(const SimConfig& cfg, unsigned threads) {
  validate(cfg);
  const Scenario sc = make_scenario(cfg);
  const PipelineFamilies pf = pipeline_families(cfg, sc);
  const AsymptoticMoments moments =
      asymptotic_moments(pf.moments, pf.families.wf, cfg.theta_true, cfg.n);
  const double z_scale = moments.j_nh / std::sqrt(moments.i_nh);

  SimResult result;
  result.records.resize(cfg.replications);

  auto replicate = [&](std::size_t rep) {
    SimulationRecord& rec = result.records[rep];
    rec.rep = rep;
    rec.theta_star = kNaN;
    rec.theta_hat = kNaN;
    try {
      const Sample s = simulate_sample(cfg, sc, rep);
      rec.theta_star = preliminary_estimate(cfg.model, s);
      rec.theta_hat = pipeline_estimate(cfg, sc, pf.families, rec.theta_star, s);
      const Studentized st = studentize(pf.families.fam, pf.families.wf, rec.theta_star,
                                        rec.theta_hat, s, cfg.alpha);
      const double err = rec.theta_hat - cfg.theta_true;
      rec.z = z_scale * err;
      rec.z_stud = st.d_star * err;
      rec.covered = st.ci_lo <= cfg.theta_true && cfg.theta_true <= st.ci_hi;
      rec.degenerate = false;
    } catch (const Error&) {
      rec.z = kNaN;
      rec.z_stud = kNaN;
      rec.covered = false;
      rec.degenerate = true;
    }
  };

  const unsigned workers =
      std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(cfg.replications)));
  if (workers == 1) {
    for (std::size_t r = 0; r < cfg.replications; ++r) replicate(r);
  } else {
    std::vector<std::exception_ptr> failures(workers);
    {
      std::vector<std::jthread> pool;
      for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
          try {
            for (std::size_t r = w; r < cfg.replications; r += workers) replicate(r);
          } catch (...) {
            failures[w] = std::current_exception();
          }
        });
      }
    }
    for (const auto& f : failures) {
      if (f) std::rethrow_exception(f);
    }
  }

  // Aggregation runs serially in replication order.
  std::vector<double> z, zs, hat;
  ExactSum sq_star, sq_hat;
  std::size_t covered = 0;
  SimSummary& sum = result.summary;
  for (const auto& rec : result.records) {
    if (rec.degenerate) {
      ++sum.degenerate_count;
      continue;
    }
    z.push_back(rec.z);
    zs.push_back(rec.z_stud);
    hat.push_back(rec.theta_hat);
    sq_star.add((rec.theta_star - cfg.theta_true) * (rec.theta_star - cfg.theta_true));
    sq_hat.add((rec.theta_hat - cfg.theta_true) * (rec.theta_hat - cfg.theta_true));
    if (rec.covered) ++covered;
  }
  if (z.empty()) {
    sum.mean_z = sum.var_z = sum.ks_z = sum.ks_zstud = sum.coverage = sum.var_ratio = kNaN;
    sum.mse_star = sum.mse_hat = kNaN;
    return result;
  }
  const double valid = static_cast<double>(z.size());
  sum.mean_z = mean_of(z);
  sum.var_z = sample_variance(z, sum.mean_z);
  sum.ks_z = ks_statistic(z, normal_cdf);
  sum.ks_zstud = ks_statistic(zs, normal_cdf);
  sum.coverage = static_cast<double>(covered) / valid;
  sum.var_ratio = sample_variance(hat, mean_of(hat)) / moments.variance();
  sum.mse_star = sq_star.value() / valid;
  sum.mse_hat = sq_hat.value() / valid;
  return result;
}

}  // namespace onestep
