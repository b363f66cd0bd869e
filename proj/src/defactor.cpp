#include "ps2/defactor.hpp"

#include "ps2/csv.hpp"
#include "ps2/error.hpp"

namespace ps2 {

FactorPanel::FactorPanel(Eigen::MatrixXd values, std::vector<std::string> labels)
    : values_(std::move(values)), labels_(std::move(labels)) {
  require(values_.rows() >= 1 && values_.cols() >= 1, ErrorCode::Precondition,
          "factor panel needs at least one period and one factor");
  require(values_.allFinite(), ErrorCode::Precondition, "factor panel has non-finite entries");
  require(labels_.empty() || static_cast<Index>(labels_.size()) == values_.cols(),
          ErrorCode::Precondition, "factor label count mismatch");
}

FactorPanel FactorPanel::last_rows(Index count) const {
  require(count >= 1 && count <= periods(), ErrorCode::Precondition, "row count out of range");
  return FactorPanel(values_.bottomRows(count), labels_);
}

DefactorResult defactor(const ReturnPanel& panel, const FactorPanel& factors) {
  const Eigen::MatrixXd& r = panel.values();
  const Eigen::MatrixXd& x = factors.values();
  require(x.rows() == r.rows(), ErrorCode::Precondition, "factor and return periods differ");
  require(x.rows() > x.cols(), ErrorCode::InsufficientData, "need more periods than factors");

  const Eigen::MatrixXd xc = x.rowwise() - x.colwise().mean();
  Eigen::MatrixXd loadings_t;
  try {
    loadings_t = SpdFactorization(xc.transpose() * xc).solve(Eigen::MatrixXd(xc.transpose() * r));
  } catch (const Error&) {
    fail(ErrorCode::CollinearFactor, "demeaned factors are collinear or constant");
  }
  Eigen::MatrixXd residual = r - x * loadings_t;
  return DefactorResult{ReturnPanel(std::move(residual), panel.dates(), panel.tickers()),
                        loadings_t.transpose()};
}

FactorPanel read_factor_panel(const std::string& path) {
  const ReturnPanel p = read_return_panel(path);
  return FactorPanel(p.values(), p.tickers());
}

}  // namespace ps2
