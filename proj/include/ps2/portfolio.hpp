#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "ps2/lasso.hpp"
#include "ps2/moments.hpp"

namespace ps2 {

/// Sparse portfolio weights over a universe of `universe_size` assets.
struct WeightVector {
  std::map<Index, double> entries;
  Index universe_size = 0;
  double target_return = 0.0;

  static WeightVector from_dense(const Eigen::VectorXd& dense, double target_return);
  Eigen::VectorXd dense() const;
  double at(Index asset) const;
  IndexList support() const;
};

/// Asset weights plus a dense block of weights on investable factors.
struct AugmentedWeights {
  WeightVector asset_block;
  Eigen::VectorXd factor_block;

  Eigen::VectorXd dense() const;  // assets first, then factors
};

struct FactorBlock {
  Eigen::MatrixXd loadings;  // N x K
  Eigen::VectorXd mu_x;
  Eigen::MatrixXd sigma_x;
  Eigen::VectorXd mu_u;
  Eigen::MatrixXd sigma_u;
};

struct PopulationModel {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
  std::optional<FactorBlock> factors;

  /// mu = A mu_x + mu_u, Sigma = A Sigma_x A' + Sigma_u.
  static PopulationModel from_factor_model(FactorBlock block);
};

enum class MvpVariant { mvp, bj };
enum class ThetaEstimator { plugin, kan_zhou };

double population_theta(const PopulationModel& model);

/// mvp: (rho/theta) Sigma^{-1} mu.  bj: (rho/(1+theta)) Sigma^{-1} mu.
WeightVector population_mvp_weight(const PopulationModel& model, double rho_bar, MvpVariant variant);

/// alpha * Omega * mu with Omega = (Sigma + mu mu')^{-1}.
Eigen::VectorXd beta_target(const PopulationModel& model, double alpha);

double population_aug_theta(const PopulationModel& model);
AugmentedWeights population_aug_weights(const PopulationModel& model, double rho_bar);

/// r_c (R_S'R_S)^{-1} R_S' iota with r_c = rho (1 + theta) / theta estimated on R_S.
WeightVector post_screen_ols_weights(const ReturnPanel& panel, const IndexList& selected,
                                     double rho_bar,
                                     ThetaEstimator estimator = ThetaEstimator::plugin);

/// (rho / theta) Sigma_S^{-1} mu_S from sample moments of the selected columns.
WeightVector plugin_weights(const ReturnPanel& panel, const IndexList& selected, double rho_bar);

/// Inflated-response OLS on the last `rows` rows of [R_S, X]. Shared by the
/// factor-augmented estimators; K = 0 reduces to post_screen_ols_weights.
AugmentedWeights augmented_ols_weights(const ReturnPanel& panel, const Eigen::MatrixXd& factors,
                                       const IndexList& selected, double rho_bar, Index rows,
                                       ThetaEstimator estimator);

inline Index default_ell(Index selected_count) { return 50 + selected_count; }

/// FPS2 weights: bias-corrected theta on the last `ell` rows of [R_S, X].
AugmentedWeights fps2_weights(const ReturnPanel& panel, const Eigen::MatrixXd& factors,
                              const IndexList& selected, double rho_bar, Index ell);

struct SubpoolConfig {
  Index size = 100;
  Index draws = 1000;
  double percentile = 0.95;
  std::uint64_t seed = 0;
};

/// Rank (1 = highest) of the kept draw: the 95th percentile of 1000 is the 50th highest.
Index subpool_rank(const SubpoolConfig& cfg);

/// Draws `draws` random subsets and keeps the one whose in-sample Sharpe ratio sits at
/// the configured percentile. Returned indices are sorted.
IndexList select_subpool(const ReturnPanel& panel, const SubpoolConfig& cfg);

/// Sub-pooling kicks in whenever the bias-corrected theta is out of regime (N >= T - 2).
bool needs_subpool(Index assets, Index periods);

/// MAXSER at a fixed lambda: Lasso of r_c iota on the (sub-pooled) returns with the
/// bias-corrected theta.
WeightVector maxser_weights(const ReturnPanel& panel, double rho_bar, double lambda,
                            const std::optional<SubpoolConfig>& subpool);

struct MaxserConfig {
  Index folds = 10;
  Index grid_size = 100;
  double grid_ratio = 1e-3;
  std::uint64_t seed = 0;
  std::optional<SubpoolConfig> subpool = SubpoolConfig{};  // empty disables sub-pooling
  LassoOptions lasso{};
};

struct MaxserFit {
  WeightVector weights;
  double lambda = 0.0;
  double theta_hat = 0.0;
  IndexList pool;  // columns the Lasso ran on
};

/// Full MAXSER: optional sub-pool, bias-corrected theta, lambda by conventional k-fold
/// CV on the Lasso prediction error, refit on the full sample.
MaxserFit maxser_fit(const ReturnPanel& panel, double rho_bar, const MaxserConfig& cfg);

double portfolio_sharpe(const WeightVector& weights, const PopulationModel& model);
double portfolio_sharpe(const AugmentedWeights& weights, const PopulationModel& model);

/// w'mu / sqrt(w'Sigma w) for explicit moments.
double sharpe_ratio(const Eigen::VectorXd& w, const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma);

}  // namespace ps2
