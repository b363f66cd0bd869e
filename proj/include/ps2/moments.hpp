#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ps2 {

using Index = Eigen::Index;
using IndexList = std::vector<Index>;

/// Time-by-asset matrix of per-period excess returns. Rows are periods,
/// columns are assets. Every entry is finite and both dimensions are at least 1.
class ReturnPanel {
 public:
  explicit ReturnPanel(Eigen::MatrixXd values, std::vector<std::string> dates = {},
                       std::vector<std::string> tickers = {});

  Index periods() const noexcept { return values_.rows(); }
  Index assets() const noexcept { return values_.cols(); }
  const Eigen::MatrixXd& values() const noexcept { return values_; }
  const std::vector<std::string>& dates() const noexcept { return dates_; }
  const std::vector<std::string>& tickers() const noexcept { return tickers_; }

  ReturnPanel select_columns(std::span<const Index> columns) const;
  ReturnPanel last_rows(Index count) const;

 private:
  Eigen::MatrixXd values_;
  std::vector<std::string> dates_;
  std::vector<std::string> tickers_;
};

struct MomentSummary {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;   // divisor T - 1
  Eigen::MatrixXd gram;  // R'R / T
};

MomentSummary sample_moments(const ReturnPanel& panel);

/// Cholesky factorization of a symmetric positive-definite matrix. Construction
/// fails with ErrorCode::Singular when the matrix is not SPD to working precision.
class SpdFactorization {
 public:
  explicit SpdFactorization(const Eigen::MatrixXd& a);
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const;
  Index size() const noexcept { return llt_.rows(); }

 private:
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

Eigen::VectorXd spd_solve(const Eigen::MatrixXd& a, const Eigen::VectorXd& b);

/// mu' Sigma^{-1} mu from the sample mean and sample covariance.
double plugin_theta(const ReturnPanel& panel);
double plugin_theta(const Eigen::MatrixXd& values);

inline constexpr double kThetaFloor = 1e-6;

/// Bias-corrected squared Sharpe ((T - N - 2) theta_s - N) / T, floored at kThetaFloor.
double kan_zhou_theta(double theta_s, Index periods, Index assets);

}  // namespace ps2
