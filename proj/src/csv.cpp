#include "ps2/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "ps2/error.hpp"

namespace ps2 {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_cell(const std::string& raw, std::size_t line_no) {
  const std::string cell = trim(raw);
  if (cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan") {
    return std::numeric_limits<double>::quiet_NaN();
  }
  double value = 0.0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) {
    fail(ErrorCode::Parse, "line " + std::to_string(line_no) + ": not a number: '" + cell + "'");
  }
  return value;
}

}  // namespace

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          current.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        current.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(current);
      current.clear();
    } else if (c != '\r') {
      current.push_back(c);
    }
  }
  fields.push_back(current);
  return fields;
}

LabeledTable read_labeled_table(std::istream& in) {
  LabeledTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) break;
  }
  require(!trim(line).empty(), ErrorCode::Parse, "missing header row");
  auto header = split_csv_line(line);
  require(header.size() >= 2, ErrorCode::Parse, "header needs an index column and at least one data column");
  table.index_name = trim(header[0]);
  for (std::size_t j = 1; j < header.size(); ++j) table.col_labels.push_back(trim(header[j]));

  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    // Trailing empty cells may be omitted.
    require(fields.size() <= header.size(), ErrorCode::Parse,
            "line " + std::to_string(line_no) + ": too many fields");
    fields.resize(header.size());
    table.row_labels.push_back(trim(fields[0]));
    std::vector<double> row;
    row.reserve(header.size() - 1);
    for (std::size_t j = 1; j < fields.size(); ++j) row.push_back(parse_cell(fields[j], line_no));
    rows.push_back(std::move(row));
  }
  const auto n_rows = static_cast<Index>(rows.size());
  const auto n_cols = static_cast<Index>(table.col_labels.size());
  table.values.resize(n_rows, n_cols);
  for (Index i = 0; i < n_rows; ++i) {
    for (Index j = 0; j < n_cols; ++j) table.values(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  return table;
}

LabeledTable read_labeled_table(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::Parse, "cannot open " + path);
  return read_labeled_table(in);
}

ReturnPanel read_return_panel(const std::string& path) {
  LabeledTable table = read_labeled_table(path);
  require(table.values.rows() >= 1, ErrorCode::Parse, path + ": no data rows");
  require(table.values.allFinite(), ErrorCode::Parse, path + ": return panel has missing cells");
  return ReturnPanel(std::move(table.values), std::move(table.row_labels), std::move(table.col_labels));
}

void write_labeled_table(std::ostream& out, const LabeledTable& table) {
  out << (table.index_name.empty() ? "date" : table.index_name);
  for (const auto& c : table.col_labels) out << ',' << c;
  out << '\n';
  out << std::setprecision(17);
  for (Index i = 0; i < table.values.rows(); ++i) {
    out << table.row_labels[static_cast<std::size_t>(i)];
    for (Index j = 0; j < table.values.cols(); ++j) {
      out << ',';
      const double v = table.values(i, j);
      if (std::isfinite(v)) out << v;
    }
    out << '\n';
  }
}

}  // namespace ps2
