#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ps2/lasso.hpp"
#include "ps2/moments.hpp"

namespace ps2 {

enum class ScreenMethod { lasso, adaptive };

struct ScreenConfig {
  double alpha = 0.05;        // level of the constant response
  double tau = 1e-4;          // sd of the response perturbation
  std::uint64_t seed = 0;
  Index grid_size = 100;
  double grid_ratio = 1e-3;
  Index folds = 10;
  ScreenMethod method = ScreenMethod::lasso;
  LassoOptions lasso{};
  std::size_t threads = 1;    // fold-level workers
};

void validate(const ScreenConfig& cfg);

struct CvEntry {
  double lambda = 0.0;
  double error = 0.0;         // summed per-fold mean squared prediction error
  bool filtered = false;
  Index max_fold_support = 0;
  std::string reason;         // why the candidate was filtered
};

struct LambdaSelection {
  double lambda_star = 0.0;
  std::vector<CvEntry> cv;
};

struct ScreeningResult {
  IndexList selected;
  double lambda_star = 0.0;
  std::vector<CvEntry> cv;
  std::vector<double> filtered;    // lambdas rejected by the support-size cap or a failed fit
  Eigen::VectorXd coefficients;    // full-sample refit at lambda_star (original column order)
};

/// z ~ N(alpha, tau^2 I_T), deterministic in cfg.seed.
Eigen::VectorXd perturbed_response(Index periods, const ScreenConfig& cfg);

/// Seeded shuffle of 0..T-1 cut into k contiguous blocks; each fold is sorted.
std::vector<IndexList> make_folds(Index periods, Index folds, std::uint64_t seed);

/// Post-OLS cross-validation over a lambda grid. Candidates whose training support
/// exceeds T(k-2)/k in any fold are filtered; ties in error go to the larger lambda.
LambdaSelection cv_select_lambda(const ReturnPanel& panel, const Eigen::VectorXd& z,
                                 const std::vector<double>& grid, const ScreenConfig& cfg,
                                 const Eigen::VectorXd& penalty_weights = {});

/// Lasso (or adaptive Lasso) screening of a perturbed constant on the returns.
ScreeningResult screen(const ReturnPanel& panel, const ScreenConfig& cfg);

}  // namespace ps2
