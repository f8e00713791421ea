#include "hypox/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include "hypox/common.hpp"

namespace hypox::csv {

std::vector<std::string> split_record(std::string_view line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  if (quoted) {
    throw Error(ErrorKind::Schema, "unterminated quoted field");
  }
  out.push_back(std::move(field));
  return out;
}

Table Table::parse(std::string_view text) {
  Table t;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  bool have_header = false;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    auto fields = split_record(line);
    if (!have_header) {
      t.header_ = std::move(fields);
      for (std::size_t i = 0; i < t.header_.size(); ++i) {
        if (!t.index_.emplace(t.header_[i], i).second) {
          throw Error(ErrorKind::Schema, "duplicate column '" + t.header_[i] + "'");
        }
      }
      have_header = true;
      continue;
    }
    if (fields.size() != t.header_.size()) {
      throw Error(ErrorKind::Schema, "line " + std::to_string(line_no) + ": expected " +
                                         std::to_string(t.header_.size()) + " fields, got " +
                                         std::to_string(fields.size()));
    }
    t.rows_.push_back(std::move(fields));
    t.lines_.push_back(line_no);
  }
  if (!have_header) {
    throw Error(ErrorKind::Schema, "missing CSV header");
  }
  return t;
}

Table Table::read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorKind::MissingInput, "cannot open '" + path + "'");
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::optional<std::size_t> Table::find(std::string_view column) const {
  auto it = index_.find(std::string(column));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t Table::require(std::string_view column) const {
  if (auto i = find(column)) return *i;
  throw Error(ErrorKind::Schema, "missing column '" + std::string(column) + "'");
}

std::string format_double(double v) {
  if (std::isnan(v)) return {};
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

void write_row(std::ostream& os, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) os << ',';
    os << escape(fields[i]);
  }
  os << '\n';
}

std::optional<double> parse_optional_double(std::string_view field) {
  while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
  while (!field.empty() && (field.back() == ' ' || field.back() == '\t')) field.remove_suffix(1);
  if (field.empty()) return std::nullopt;
  if (field.front() == '+') field.remove_prefix(1);
  double v = 0.0;
  auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    if (field == "nan" || field == "NaN" || field == "NA") return std::nullopt;
    throw Error(ErrorKind::Schema, "not a number: '" + std::string(field) + "'");
  }
  if (!std::isfinite(v)) {
    throw Error(ErrorKind::Schema, "non-finite value: '" + std::string(field) + "'");
  }
  return v;
}

}  // namespace hypox::csv
