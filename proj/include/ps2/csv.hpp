#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ps2/moments.hpp"

namespace ps2 {

/// A labeled numeric table as found in the panel CSV files: the first column holds
/// a row label (date or integer index), the header row holds column names. Empty,
/// "NA" and "NaN" cells are read as quiet NaN.
struct LabeledTable {
  std::string index_name;
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
  Eigen::MatrixXd values;
};

std::vector<std::string> split_csv_line(const std::string& line);

LabeledTable read_labeled_table(std::istream& in);
LabeledTable read_labeled_table(const std::string& path);

/// Reads a ReturnPanel CSV. Missing cells are a Parse error.
ReturnPanel read_return_panel(const std::string& path);

void write_labeled_table(std::ostream& out, const LabeledTable& table);

}  // namespace ps2
