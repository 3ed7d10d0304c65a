#include "needle/csv.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace needle {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) {
    return {};
  }
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split(const std::string &line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) {
    fields.push_back(trim(field));
  }
  if (!line.empty() && line.back() == ',') {
    fields.emplace_back();
  }
  return fields;
}

} // namespace

CsvError::CsvError(std::size_t row, const std::string &what)
    : InvalidInput("row " + std::to_string(row) + ": " + what), row_(row) {}

CsvTable read_numeric_csv(const std::string &path, std::initializer_list<std::string_view> columns) {
  std::ifstream in(path);
  if (!in) {
    throw InvalidInput("cannot open " + path);
  }

  CsvTable table;
  std::string line;
  std::size_t row = 0;
  if (!std::getline(in, line)) {
    throw CsvError(1, "missing header row in " + path);
  }
  ++row;
  table.header = split(line);
  if (table.header.size() != columns.size() ||
      !std::equal(columns.begin(), columns.end(), table.header.begin())) {
    std::string expected;
    for (auto c : columns) {
      expected += (expected.empty() ? "" : ",") + std::string(c);
    }
    throw CsvError(1, "header must be '" + expected + "'");
  }

  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) {
      continue;
    }
    const auto fields = split(line);
    if (fields.size() != columns.size()) {
      throw CsvError(row, "expected " + std::to_string(columns.size()) + " fields, got " +
                              std::to_string(fields.size()));
    }
    std::vector<double> values;
    values.reserve(fields.size());
    for (const auto &f : fields) {
      char *end = nullptr;
      errno = 0;
      const double v = std::strtod(f.c_str(), &end);
      if (f.empty() || end != f.c_str() + f.size() || errno == ERANGE || !std::isfinite(v)) {
        throw CsvError(row, "'" + f + "' is not a finite number");
      }
      values.push_back(v);
    }
    table.rows.push_back(std::move(values));
  }
  return table;
}

std::string format_number(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", value);
  return buf;
}

} // namespace needle
