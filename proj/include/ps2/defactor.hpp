#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ps2/moments.hpp"

namespace ps2 {

/// T x K investable factor excess returns.
class FactorPanel {
 public:
  explicit FactorPanel(Eigen::MatrixXd values, std::vector<std::string> labels = {});

  Index periods() const noexcept { return values_.rows(); }
  Index factors() const noexcept { return values_.cols(); }
  const Eigen::MatrixXd& values() const noexcept { return values_; }
  const std::vector<std::string>& labels() const noexcept { return labels_; }

  FactorPanel last_rows(Index count) const;

 private:
  Eigen::MatrixXd values_;
  std::vector<std::string> labels_;
};

struct DefactorResult {
  ReturnPanel residuals;     // U = R - X A', mean component kept
  Eigen::MatrixXd loadings;  // N x K
};

/// Regresses each return column on the demeaned factors and removes X A' from R.
DefactorResult defactor(const ReturnPanel& panel, const FactorPanel& factors);

FactorPanel read_factor_panel(const std::string& path);

}  // namespace ps2
