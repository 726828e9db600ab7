#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace onestep::csv {

/// Shortest decimal text that parses back to exactly `v`; nan/inf/-inf for
/// non-finite values.
std::string format_double(double v);

/// Strict parse of a whole field; throws invalid_input naming `context`.
double parse_double(std::string_view field, std::string_view context);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> column(std::string_view name) const;
};

/// Header row plus rectangular data rows; fields are trimmed, blank lines
/// skipped, no quoting.
Table parse(std::string_view text, std::string_view source);
Table read(const std::filesystem::path& path);

void write_row(std::ostream& out, const std::vector<std::string>& fields);

}  // namespace onestep::csv
