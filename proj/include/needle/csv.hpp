#pragma once

#include "needle/errors.hpp"

#include <cstddef>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

namespace needle {

/// Malformed numeric CSV. row() is the 1-based line number in the file.
class CsvError : public InvalidInput {
public:
  CsvError(std::size_t row, const std::string &what);
  std::size_t row() const { return row_; }

private:
  std::size_t row_;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

/// Reads a numeric CSV whose header must equal `columns` (whitespace-trimmed).
CsvTable read_numeric_csv(const std::string &path, std::initializer_list<std::string_view> columns);

/// Fixed formatting used for every emitted number: 9 significant digits.
std::string format_number(double value);

} // namespace needle
