#include "onestep/cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "onestep/csv.hpp"
#include "onestep/normal.hpp"
#include "onestep/regression.hpp"

namespace onestep::cli {

namespace {

namespace fs = std::filesystem;
using csv::format_double;

const std::vector<std::string> kRecordHeader = {"rep", "theta_star", "theta_hat", "z",
                                                "z_stud", "covered", "degenerate"};
const std::vector<std::string> kSummaryHeader = {
    "schema_version", "config_digest", "model",      "pipeline",   "noise",
    "covariates",     "n",             "replications", "seed",     "theta_true",
    "sigma",          "alpha",         "mean_z",     "var_z",      "ks_z",
    "ks_zstud",       "coverage",      "var_ratio",  "mse_star",   "mse_hat",
    "degenerate_count"};
const std::vector<std::string> kComparisonHeader = {
    "model", "n", "ks_z", "ks_zstud", "coverage", "var_ratio", "mse_star", "mse_hat",
    "degenerate_count"};
const std::vector<std::string> kReportHeader = {"theta_star", "theta_hat", "d_star", "ci_lo",
                                                "ci_hi",      "denominator", "warnings"};

bool is_degeneracy(Errc code) {
  return code == Errc::degenerate || code == Errc::degenerate_denominator ||
         code == Errc::no_convergence || code == Errc::zero_variance;
}

std::string hex_digest(std::uint64_t d) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << d;
  return s.str();
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

std::uint64_t parse_unsigned(std::string_view v, std::string_view key) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw Error(Errc::config, std::string(key) + ": expected a non-negative integer, got '" +
                                  std::string(v) + "'");
  }
  return out;
}

double parse_real(std::string_view v, std::string_view key) {
  try {
    return csv::parse_double(v, key);
  } catch (const Error& e) {
    throw Error(Errc::config, e.what());
  }
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

ScalarFunction scalar_function(const std::string& name) {
  if (name == "square") return ScalarFunction::square();
  if (name == "zero") return ScalarFunction::zero();
  if (name == "exp") return ScalarFunction::exponential();
  throw Error(Errc::invalid_input, "unknown g function '" + name + "'");
}

RegressionModel model_for(const Sample& s, const EstimateOptions& opt,
                          std::vector<std::string>& warnings) {
  VarianceWeights w;
  if (opt.variance_weights == "data") {
    w = s.known_weights() ? VarianceWeights::known(*s.known_weights()) : VarianceWeights::unit();
  } else if (opt.variance_weights == "one-plus-square") {
    w = VarianceWeights::one_plus_square();
  } else {
    throw Error(Errc::invalid_input, "unknown variance weights '" + opt.variance_weights + "'");
  }
  const auto a = s.a();
  std::vector<double> av(a.begin(), a.end());
  switch (opt.model) {
    case ModelId::sqrt:
      if (opt.variance_weights != "data") {
        warnings.emplace_back("preliminary estimate uses the data weights only");
      }
      return sqrt_model(std::move(av), std::move(w));
    case ModelId::plinear:
    case ModelId::mm: {
      if (!s.has_b()) {
        throw Error(Errc::invalid_input, std::string("missing column 'b' (required by model ") +
                                             std::string(to_string(opt.model)) + ")");
      }
      const auto b = s.b();
      std::vector<double> bv(b.begin(), b.end());
      if (opt.model == ModelId::mm) return mm_model(std::move(av), std::move(bv), std::move(w));
      return plinear_model(std::move(av), std::move(bv), scalar_function(opt.g), std::move(w));
    }
    case ModelId::custom_linear:
      return linear_model(std::move(av), std::move(w));
  }
  throw Error(Errc::invalid_input, "unknown model");
}

double preliminary(const Sample& s, const EstimateOptions& opt) {
  if (!opt.contrasts) return preliminary_estimate(opt.model, s);
  const auto& c = *opt.contrasts;
  switch (opt.model) {
    case ModelId::sqrt:
      return preliminary_sqrt({c, ContrastKind::sum_zero}, s);
    case ModelId::plinear:
      return preliminary_plinear({c, ContrastKind::b_orthogonal}, s);
    case ModelId::mm:
      return preliminary_mm(c, s);
    case ModelId::custom_linear:
      throw Error(Errc::invalid_input, "custom-linear takes no contrasts");
  }
  throw Error(Errc::invalid_input, "unknown model");
}

std::vector<double> read_contrasts(const fs::path& path, std::size_t n) {
  const csv::Table t = csv::read(path);
  const auto col = t.column("c");
  if (!col) throw Error(Errc::invalid_input, path.string() + ": missing column 'c'");
  std::vector<double> c;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    c.push_back(csv::parse_double(t.rows[r][*col], path.string() + " row " + std::to_string(r + 2)));
  }
  if (c.size() != n) {
    throw Error(Errc::invalid_input, path.string() + ": expected " + std::to_string(n) +
                                         " contrasts, found " + std::to_string(c.size()));
  }
  return c;
}

// Files created by a simulate run; removed again unless commit() is called.
class OutputGuard {
 public:
  void track(fs::path p) { paths_.push_back(std::move(p)); }
  void commit() { paths_.clear(); }
  ~OutputGuard() {
    std::error_code ec;
    for (const auto& p : paths_) fs::remove(p, ec);
  }

 private:
  std::vector<fs::path> paths_;
};

std::ofstream open_output(const fs::path& p, OutputGuard& guard) {
  guard.track(p);
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::invalid_input, "cannot write " + p.string());
  return out;
}

void write_simulation(const SimConfig& cfg, const SimResult& res, const fs::path& config_path,
                      const fs::path& dir, unsigned threads, const std::string& started) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(Errc::invalid_input, "cannot create " + dir.string() + ": " + ec.message());
  OutputGuard guard;
  const std::string digest = hex_digest(config_digest(cfg));

  {
    auto out = open_output(dir / "records.csv", guard);
    csv::write_row(out, kRecordHeader);
    for (const auto& r : res.records) {
      csv::write_row(out, {std::to_string(r.rep), format_double(r.theta_star),
                           format_double(r.theta_hat), format_double(r.z), format_double(r.z_stud),
                           r.covered ? "1" : "0", r.degenerate ? "1" : "0"});
    }
    if (!out) throw Error(Errc::invalid_input, "write failed for records.csv");
  }
  {
    const SimSummary& s = res.summary;
    auto out = open_output(dir / "summary.csv", guard);
    csv::write_row(out, kSummaryHeader);
    csv::write_row(out, {std::string(kSummarySchema), digest, std::string(to_string(cfg.model)),
                         std::string(to_string(cfg.pipeline)), std::string(to_string(cfg.noise)),
                         std::string(to_string(cfg.covariates)), std::to_string(cfg.n),
                         std::to_string(cfg.replications), std::to_string(cfg.seed),
                         format_double(cfg.theta_true), format_double(cfg.sigma),
                         format_double(cfg.alpha), format_double(s.mean_z), format_double(s.var_z),
                         format_double(s.ks_z), format_double(s.ks_zstud),
                         format_double(s.coverage), format_double(s.var_ratio),
                         format_double(s.mse_star), format_double(s.mse_hat),
                         std::to_string(s.degenerate_count)});
    if (!out) throw Error(Errc::invalid_input, "write failed for summary.csv");
  }
  std::vector<double> z;
  for (const auto& r : res.records) {
    if (!r.degenerate) z.push_back(r.z);
  }
  std::sort(z.begin(), z.end());
  {
    auto out = open_output(dir / "qq.csv", guard);
    csv::write_row(out, {"rank", "z", "normal_quantile"});
    const double m = static_cast<double>(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double p = (static_cast<double>(i) + 0.5) / m;
      csv::write_row(out, {std::to_string(i + 1), format_double(z[i]),
                           format_double(normal_quantile(p))});
    }
    if (!out) throw Error(Errc::invalid_input, "write failed for qq.csv");
  }
  {
    constexpr int kBins = 40;
    constexpr double kLo = -4.0;
    constexpr double kWidth = 8.0 / kBins;
    std::vector<std::size_t> counts(kBins, 0);
    for (double v : z) {
      if (v < kLo || v > -kLo) continue;
      const int bin = std::min(kBins - 1, static_cast<int>((v - kLo) / kWidth));
      ++counts[bin];
    }
    auto out = open_output(dir / "hist.csv", guard);
    csv::write_row(out, {"bin_lo", "bin_hi", "count"});
    for (int b = 0; b < kBins; ++b) {
      csv::write_row(out, {format_double(kLo + b * kWidth), format_double(kLo + (b + 1) * kWidth),
                           std::to_string(counts[b])});
    }
    if (!out) throw Error(Errc::invalid_input, "write failed for hist.csv");
  }
  {
    nlohmann::json manifest = {{"config_path", config_path.string()},
                               {"output_dir", dir.string()},
                               {"tool_version", std::string(kToolVersion)},
                               {"config_digest", digest},
                               {"threads", threads},
                               {"started_at", started},
                               {"finished_at", utc_now()}};
    auto out = open_output(dir / "manifest.json", guard);
    out << manifest.dump(2) << '\n';
    if (!out) throw Error(Errc::invalid_input, "write failed for manifest.json");
  }
  guard.commit();
}

int cmd_estimate(const std::string& data, const EstimateOptions& base,
                 const std::string& contrasts, const std::string& out_path, std::ostream& out,
                 std::ostream& err) {
  try {
    const Sample s = read_sample(data);
    EstimateOptions opt = base;
    if (contrasts != "default") opt.contrasts = read_contrasts(contrasts, s.size());
    const EstimateReport rep = estimate_dataset(s, opt);

    std::string warnings;
    for (const auto& w : rep.warnings) {
      if (!warnings.empty()) warnings += "; ";
      warnings += w;
    }
    std::ostringstream text;
    csv::write_row(text, kReportHeader);
    const auto& r = rep.result;
    csv::write_row(text, {format_double(r.theta_star), format_double(r.theta_hat),
                          r.d_star ? format_double(*r.d_star) : "",
                          r.ci ? format_double(r.ci->first) : "",
                          r.ci ? format_double(r.ci->second) : "", format_double(r.denominator),
                          warnings});
    std::ofstream file(out_path, std::ios::binary | std::ios::trunc);
    if (!file || !(file << text.str())) {
      err << "error: cannot write " << out_path << '\n';
      return kInputError;
    }
    out << text.str();
    return kOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return is_degeneracy(e.code()) ? kDegenerate : kInputError;
  }
}

int cmd_simulate(const std::string& config_path, unsigned threads, const std::string& out_dir,
                 std::ostream& out, std::ostream& err) {
  try {
    if (const char* env = std::getenv("ONESTEP_THREADS")) {
      threads = static_cast<unsigned>(parse_unsigned(trim(env), "ONESTEP_THREADS"));
    }
    std::ifstream in(config_path, std::ios::binary);
    if (!in) throw Error(Errc::config, "cannot open " + config_path);
    std::ostringstream buf;
    buf << in.rdbuf();
    const SimConfig cfg = parse_sim_config(buf.str());
    const std::string started = utc_now();
    const SimResult res = run(cfg, std::max(1u, threads));
    write_simulation(cfg, res, config_path, out_dir, threads, started);
    out << "wrote " << res.records.size() << " replications to " << out_dir << " (digest "
        << hex_digest(config_digest(cfg)) << ")\n";
    return kOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  }
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& out_path,
               std::ostream& out, std::ostream& err) {
  try {
    std::ostringstream text;
    csv::write_row(text, kComparisonHeader);
    for (const auto& path : inputs) {
      const csv::Table t = csv::read(path);
      if (t.header != kSummaryHeader) {
        throw Error(Errc::invalid_input, path + ": summary schema mismatch (unexpected columns)");
      }
      const std::size_t version = *t.column("schema_version");
      for (const auto& row : t.rows) {
        if (row[version] != kSummarySchema) {
          throw Error(Errc::invalid_input, path + ": unsupported schema version '" +
                                               row[version] + "'");
        }
        std::vector<std::string> fields;
        for (const auto& name : kComparisonHeader) fields.push_back(row[*t.column(name)]);
        csv::write_row(text, fields);
      }
    }
    std::ofstream file(out_path, std::ios::binary | std::ios::trunc);
    if (!file || !(file << text.str())) {
      err << "error: cannot write " << out_path << '\n';
      return kInputError;
    }
    out << text.str();
    return kOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  }
}

}  // namespace

Sample read_sample(const fs::path& csv_path) {
  const csv::Table t = csv::read(csv_path);
  auto column = [&](const char* name, bool required) -> std::optional<std::vector<double>> {
    const auto idx = t.column(name);
    if (!idx) {
      if (required) {
        throw Error(Errc::invalid_input,
                    csv_path.string() + ": missing column '" + std::string(name) + "'");
      }
      return std::nullopt;
    }
    std::vector<double> v;
    v.reserve(t.rows.size());
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      v.push_back(csv::parse_double(t.rows[r][*idx], csv_path.string() + " line " +
                                                         std::to_string(r + 2) + " column " +
                                                         name));
    }
    return v;
  };
  auto x = column("x", true);
  auto a = column("a", true);
  auto b = column("b", false);
  auto w = column("w", false);
  if (x->empty()) throw Error(Errc::invalid_input, csv_path.string() + ": no data rows");
  return Sample(std::move(*x), std::move(*a), std::move(b), std::move(w));
}

EstimateReport estimate_dataset(const Sample& s, const EstimateOptions& opt) {
  EstimateReport rep;
  const RegressionModel model = model_for(s, opt, rep.warnings);
  const double theta_star = opt.theta_start ? *opt.theta_start : preliminary(s, opt);

  Families fam;
  switch (opt.pipeline) {
    case Pipeline::lse_one_step:
      fam = lse_families(model);
      rep.result = lse_one_step(model, theta_star, s);
      break;
    case Pipeline::mm_closed_form:
      if (opt.model != ModelId::mm) {
        throw Error(Errc::invalid_input, "mm_closed_form applies to the mm model only");
      }
      fam = generalized_families(model, mm_linearizer({s.b().begin(), s.b().end()}));
      rep.result.theta_star = theta_star;
      rep.result.theta_hat = mm_closed_form(model, theta_star, s);
      rep.result.denominator = score_sums(fam.fam, fam.wf, theta_star, s).den;
      break;
    case Pipeline::one_step_factorized:
      fam = to_families(model);
      if (fam.wf.h_prime_numerical) rep.warnings.emplace_back("w' by central difference");
      rep.result = one_step_factorized(fam.fam, fam.wf, theta_star, s);
      break;
    case Pipeline::newton_oracle: {
      fam = to_families(model);
      const NewtonResult nr =
          newton_solve(fam.fam, fam.wf, theta_star, s, 100, 1e-11 * static_cast<double>(s.size()));
      rep.result.theta_star = theta_star;
      rep.result.theta_hat = nr.root;
      rep.result.denominator = score_sums(fam.fam, fam.wf, nr.root, s).den;
      break;
    }
    case Pipeline::one_step_weighted:
      fam = to_families(model);
      rep.result = one_step_weighted(fam.fam, fam.wf, theta_star, s);
      break;
  }
  try {
    rep.result = attach(rep.result, studentize(fam.fam, fam.wf, theta_star, rep.result.theta_hat,
                                               s, opt.alpha));
  } catch (const Error& e) {
    if (!is_degeneracy(e.code()) && e.code() != Errc::domain) throw;
    rep.warnings.emplace_back(std::string("no interval: ") + std::string(to_string(e.code())));
  }
  return rep;
}

SimConfig parse_sim_config(std::string_view text) {
  SimConfig cfg;
  std::map<std::string, bool> seen;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(Errc::config, "line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    if (seen[key]) throw Error(Errc::config, "line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    seen[key] = true;
    if (key == "model") cfg.model = parse_model(value);
    else if (key == "theta_true") cfg.theta_true = parse_real(value, key);
    else if (key == "sigma") cfg.sigma = parse_real(value, key);
    else if (key == "noise") cfg.noise = parse_noise(value);
    else if (key == "n") cfg.n = parse_unsigned(value, key);
    else if (key == "replications") cfg.replications = parse_unsigned(value, key);
    else if (key == "seed") cfg.seed = parse_unsigned(value, key);
    else if (key == "alpha") cfg.alpha = parse_real(value, key);
    else if (key == "covariates") cfg.covariates = parse_covariates(value);
    else if (key == "pipeline") cfg.pipeline = parse_pipeline(value);
    else throw Error(Errc::config, "line " + std::to_string(line_no) + ": unknown key '" + key + "'");
  }
  validate(cfg);
  return cfg;
}

std::string canonical_config(const SimConfig& cfg) {
  std::ostringstream s;
  s << "model=" << to_string(cfg.model) << '\n'
    << "theta_true=" << format_double(cfg.theta_true) << '\n'
    << "sigma=" << format_double(cfg.sigma) << '\n'
    << "noise=" << to_string(cfg.noise) << '\n'
    << "n=" << cfg.n << '\n'
    << "replications=" << cfg.replications << '\n'
    << "seed=" << cfg.seed << '\n'
    << "alpha=" << format_double(cfg.alpha) << '\n'
    << "covariates=" << to_string(cfg.covariates) << '\n'
    << "pipeline=" << to_string(cfg.pipeline) << '\n';
  return s.str();
}

// 64-bit FNV-1a over the canonical text, salted with the tool version.
std::uint64_t config_digest(const SimConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::string_view s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  };
  mix(kToolVersion);
  mix("\n");
  mix(canonical_config(cfg));
  return h;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"One-step weighted M-estimation: estimates, simulations, reports", "onestep"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  auto* estimate = app.add_subcommand("estimate", "Estimate theta from a CSV dataset");
  std::string data;
  std::string model_name;
  std::string pipeline_name = "one_step_weighted";
  std::string contrasts = "default";
  std::string report_path = "report.csv";
  EstimateOptions eopt;
  estimate->add_option("data", data, "CSV with columns x, a and optional b, w")->required();
  estimate->add_option("--model", model_name, "sqrt | plinear | mm")
      ->required()
      ->check(CLI::IsMember({"sqrt", "plinear", "mm"}));
  estimate->add_option("--pipeline", pipeline_name)
      ->check(CLI::IsMember({"one_step_weighted", "one_step_factorized", "lse_one_step",
                             "mm_closed_form", "newton_oracle"}));
  estimate->add_option("--alpha", eopt.alpha, "CI level parameter")->check(CLI::Range(0.0, 1.0));
  estimate->add_option("--contrasts", contrasts, "'default' or a CSV file with a column c");
  estimate->add_option("--theta-start", eopt.theta_start, "override the preliminary estimate");
  estimate->add_option("--g", eopt.g, "plinear g(t)")->check(CLI::IsMember({"square", "zero", "exp"}));
  estimate->add_option("--variance-weights", eopt.variance_weights, "data | one-plus-square")
      ->check(CLI::IsMember({"data", "one-plus-square"}));
  estimate->add_option("--out", report_path, "report CSV path");

  auto* simulate = app.add_subcommand("simulate", "Run a Monte-Carlo campaign");
  std::string config_path;
  unsigned threads = 1;
  std::string out_dir;
  simulate->add_option("--config", config_path, "key = value campaign file")->required();
  simulate->add_option("--threads", threads, "worker threads (ONESTEP_THREADS overrides)");
  simulate->add_option("--out", out_dir, "output directory")->required();

  auto* report = app.add_subcommand("report", "Combine summary.csv files");
  std::vector<std::string> inputs;
  std::string comparison_path = "comparison.csv";
  report->add_option("summaries", inputs, "summary.csv files")->required();
  report->add_option("--out", comparison_path, "comparison CSV path");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kInputError;
  }

  if (*estimate) {
    eopt.model = parse_model(model_name);
    eopt.pipeline = parse_pipeline(pipeline_name);
    return cmd_estimate(data, eopt, contrasts, report_path, out, err);
  }
  if (*simulate) return cmd_simulate(config_path, threads, out_dir, out, err);
  return cmd_report(inputs, comparison_path, out, err);
}

}  // namespace onestep::cli
