#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "onestep/estimators.hpp"
#include "onestep/montecarlo.hpp"

namespace onestep::cli {

inline constexpr std::string_view kToolVersion = "0.1.0";
inline constexpr std::string_view kSummarySchema = "onestep-summary/1";

enum ExitCode : int { kOk = 0, kInputError = 1, kDegenerate = 2 };

struct EstimateOptions {
  ModelId model = ModelId::mm;
  Pipeline pipeline = Pipeline::one_step_weighted;
  double alpha = 0.05;
  std::optional<std::vector<double>> contrasts;  // default contrasts when empty
  std::optional<double> theta_start;
  std::string g = "square";                      // plinear g(t): square, zero, exp
  std::string variance_weights = "data";         // data or one-plus-square
};

struct EstimateReport {
  EstimateResult result;
  std::vector<std::string> warnings;
};

/// Reads x, a and optional b, w columns.
Sample read_sample(const std::filesystem::path& csv_path);

/// The full estimate pipeline behind `onestep estimate`.
EstimateReport estimate_dataset(const Sample& s, const EstimateOptions& opt);

/// Flat `key = value` text; `#` starts a comment. Unknown or repeated keys
/// are ConfigErrors.
SimConfig parse_sim_config(std::string_view text);
std::string canonical_config(const SimConfig& cfg);
std::uint64_t config_digest(const SimConfig& cfg);

/// Entry point shared by the executable and the tests; args exclude argv[0].
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace onestep::cli
