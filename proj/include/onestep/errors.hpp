#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace onestep {

enum class Errc {
  invalid_input,
  domain,
  non_finite,
  degenerate,
  degenerate_denominator,
  missing_derivative,
  zero_variance,
  sign_mismatch,
  no_convergence,
  division_by_zero,
  constraint,
  config,
  empty_input,
};

std::string_view to_string(Errc code) noexcept;

/// Every failure raised by the library carries one of the codes above so
/// callers (the simulation harness, the CLI) can classify it without parsing
/// messages.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace onestep
