#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace hypox::csv {

/// Splits one CSV record. Double-quoted fields may contain commas and "" escapes.
std::vector<std::string> split_record(std::string_view line);

/// Header-indexed table. Lines beginning with '#' are provenance comments
/// and are skipped.
class Table {
 public:
  static Table parse(std::string_view text);
  static Table read_file(const std::string& path);

  [[nodiscard]] const std::vector<std::string>& header() const noexcept { return header_; }
  [[nodiscard]] std::size_t rows() const noexcept { return rows_.size(); }
  [[nodiscard]] const std::vector<std::string>& row(std::size_t i) const { return rows_[i]; }
  /// 1-based source line number of row i, for diagnostics.
  [[nodiscard]] std::size_t line_of(std::size_t i) const { return lines_[i]; }

  [[nodiscard]] std::optional<std::size_t> find(std::string_view column) const;
  /// Throws Error(Schema) when the column is absent.
  [[nodiscard]] std::size_t require(std::string_view column) const;

 private:
  std::vector<std::string> header_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::vector<std::string>> rows_;
  std::vector<std::size_t> lines_;
};

/// Shortest round-trip representation; NaN becomes the empty field.
std::string format_double(double v);
std::string escape(std::string_view field);

void write_row(std::ostream& os, const std::vector<std::string>& fields);

/// Parses a finite real. Empty or whitespace-only yields nullopt; anything
/// else unparseable throws Error(Schema).
std::optional<double> parse_optional_double(std::string_view field);

}  // namespace hypox::csv
