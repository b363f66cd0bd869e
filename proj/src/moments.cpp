#include "ps2/moments.hpp"

#include <algorithm>
#include <cmath>

#include "ps2/error.hpp"

namespace ps2 {

ReturnPanel::ReturnPanel(Eigen::MatrixXd values, std::vector<std::string> dates,
                         std::vector<std::string> tickers)
    : values_(std::move(values)), dates_(std::move(dates)), tickers_(std::move(tickers)) {
  require(values_.rows() >= 1 && values_.cols() >= 1, ErrorCode::Precondition,
          "return panel needs at least one period and one asset");
  require(values_.allFinite(), ErrorCode::Precondition, "return panel has non-finite entries");
  require(dates_.empty() || static_cast<Index>(dates_.size()) == values_.rows(),
          ErrorCode::Precondition, "date label count does not match the number of periods");
  require(tickers_.empty() || static_cast<Index>(tickers_.size()) == values_.cols(),
          ErrorCode::Precondition, "ticker label count does not match the number of assets");
}

ReturnPanel ReturnPanel::select_columns(std::span<const Index> columns) const {
  Eigen::MatrixXd out(values_.rows(), static_cast<Index>(columns.size()));
  std::vector<std::string> names;
  for (std::size_t k = 0; k < columns.size(); ++k) {
    const Index j = columns[k];
    require(j >= 0 && j < values_.cols(), ErrorCode::Precondition, "column index out of range");
    out.col(static_cast<Index>(k)) = values_.col(j);
    if (!tickers_.empty()) names.push_back(tickers_[static_cast<std::size_t>(j)]);
  }
  return ReturnPanel(std::move(out), dates_, std::move(names));
}

ReturnPanel ReturnPanel::last_rows(Index count) const {
  require(count >= 1 && count <= values_.rows(), ErrorCode::Precondition,
          "row count out of range");
  std::vector<std::string> dates;
  if (!dates_.empty()) dates.assign(dates_.end() - count, dates_.end());
  return ReturnPanel(values_.bottomRows(count), std::move(dates), tickers_);
}

MomentSummary sample_moments(const ReturnPanel& panel) {
  const auto& r = panel.values();
  const Index t = r.rows();
  require(t >= 2, ErrorCode::InsufficientData, "sample moments need at least two periods");
  MomentSummary m;
  m.mean = r.colwise().mean().transpose();
  const Eigen::MatrixXd centered = r.rowwise() - m.mean.transpose();
  m.cov = centered.transpose() * centered / static_cast<double>(t - 1);
  m.gram = r.transpose() * r / static_cast<double>(t);
  return m;
}

SpdFactorization::SpdFactorization(const Eigen::MatrixXd& a) {
  require(a.rows() == a.cols() && a.rows() >= 1, ErrorCode::Precondition,
          "SPD factorization needs a nonempty square matrix");
  const double scale = a.cwiseAbs().maxCoeff();
  require(std::isfinite(scale) && scale > 0.0, ErrorCode::Singular, "matrix is zero or non-finite");
  require((a - a.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * scale, ErrorCode::Precondition,
          "matrix is not symmetric");
  llt_.compute(a);
  require(llt_.info() == Eigen::Success, ErrorCode::Singular, "Cholesky factorization failed");
  // LLT only fails on non-positive pivots; tiny pivots relative to the diagonal mean rank deficiency.
  const Eigen::VectorXd pivots = llt_.matrixLLT().diagonal();
  const double max_diag = a.diagonal().maxCoeff();
  const double min_pivot = pivots.minCoeff();
  require(min_pivot * min_pivot > 1e-13 * max_diag, ErrorCode::Singular,
          "matrix is numerically singular");
}

Eigen::VectorXd SpdFactorization::solve(const Eigen::VectorXd& b) const {
  require(b.size() == llt_.rows(), ErrorCode::Precondition, "right-hand side size mismatch");
  return llt_.solve(b);
}

Eigen::MatrixXd SpdFactorization::solve(const Eigen::MatrixXd& b) const {
  require(b.rows() == llt_.rows(), ErrorCode::Precondition, "right-hand side size mismatch");
  return llt_.solve(b);
}

Eigen::VectorXd spd_solve(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
  return SpdFactorization(a).solve(b);
}

double plugin_theta(const Eigen::MatrixXd& values) {
  const Index t = values.rows();
  const Index n = values.cols();
  require(n < t, ErrorCode::Regime, "plug-in theta needs fewer assets than periods");
  const Eigen::VectorXd mean = values.colwise().mean().transpose();
  const Eigen::MatrixXd centered = values.rowwise() - mean.transpose();
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(t - 1);
  // Rounding leaves a constant column with a tiny positive variance; compare to its level.
  const Eigen::VectorXd level = values.colwise().squaredNorm().transpose() / static_cast<double>(t);
  require(((cov.diagonal() - 1e-12 * level).array() > 0.0).all(), ErrorCode::Singular,
          "a column has no variation");
  const SpdFactorization factor(cov);
  if (mean.isZero(0.0)) return 0.0;
  const double theta = mean.dot(factor.solve(mean));
  return std::max(theta, 0.0);
}

double plugin_theta(const ReturnPanel& panel) { return plugin_theta(panel.values()); }

double kan_zhou_theta(double theta_s, Index periods, Index assets) {
  require(theta_s >= 0.0 && std::isfinite(theta_s), ErrorCode::Precondition,
          "theta_s must be finite and nonnegative");
  require(assets >= 0 && assets < periods - 2, ErrorCode::Regime,
          "bias-corrected theta needs N < T - 2");
  const double t = static_cast<double>(periods);
  const double n = static_cast<double>(assets);
  const double raw = ((t - n - 2.0) * theta_s - n) / t;
  return std::max(raw, kThetaFloor);
}

}  // namespace ps2
