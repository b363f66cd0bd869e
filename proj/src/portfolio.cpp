#include "ps2/portfolio.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "ps2/error.hpp"
#include "ps2/parallel.hpp"
#include "ps2/screening.hpp"

namespace ps2 {

namespace {

constexpr std::uint64_t kSubpoolStream = 3;

void check_selection(const IndexList& selected, Index assets) {
  require(!selected.empty(), ErrorCode::EmptyScreen, "no assets selected");
  for (std::size_t i = 0; i < selected.size(); ++i) {
    require(selected[i] >= 0 && selected[i] < assets, ErrorCode::Precondition,
            "selected index out of range");
    require(i == 0 || selected[i] > selected[i - 1], ErrorCode::Precondition,
            "selected indices must be strictly increasing");
  }
}

WeightVector scatter(const Eigen::VectorXd& block, const IndexList& columns, Index universe,
                     double target) {
  WeightVector w;
  w.universe_size = universe;
  w.target_return = target;
  for (std::size_t a = 0; a < columns.size(); ++a) {
    const double v = block(static_cast<Index>(a));
    if (v != 0.0) w.entries[columns[a]] = v;
  }
  return w;
}

double inflated_constant(double rho_bar, double theta) {
  require(theta > 0.0 && std::isfinite(theta), ErrorCode::DegenerateModel,
          "estimated squared Sharpe ratio is not positive");
  return rho_bar * (1.0 + theta) / theta;
}

const FactorBlock& factor_block_of(const PopulationModel& model) {
  require(model.factors.has_value(), ErrorCode::Configuration, "model has no factor block");
  return *model.factors;
}

}  // namespace

WeightVector WeightVector::from_dense(const Eigen::VectorXd& dense, double target_return) {
  WeightVector w;
  w.universe_size = dense.size();
  w.target_return = target_return;
  for (Index i = 0; i < dense.size(); ++i) {
    require(std::isfinite(dense(i)), ErrorCode::Precondition, "weights must be finite");
    if (dense(i) != 0.0) w.entries[i] = dense(i);
  }
  return w;
}

Eigen::VectorXd WeightVector::dense() const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(universe_size);
  for (const auto& [i, v] : entries) out(i) = v;
  return out;
}

double WeightVector::at(Index asset) const {
  const auto it = entries.find(asset);
  return it == entries.end() ? 0.0 : it->second;
}

IndexList WeightVector::support() const {
  IndexList out;
  out.reserve(entries.size());
  for (const auto& [i, v] : entries) out.push_back(i);
  return out;
}

Eigen::VectorXd AugmentedWeights::dense() const {
  Eigen::VectorXd out(asset_block.universe_size + factor_block.size());
  out << asset_block.dense(), factor_block;
  return out;
}

PopulationModel PopulationModel::from_factor_model(FactorBlock block) {
  const Index n = block.loadings.rows();
  const Index k = block.loadings.cols();
  require(block.mu_x.size() == k && block.sigma_x.rows() == k && block.sigma_x.cols() == k &&
              block.mu_u.size() == n && block.sigma_u.rows() == n && block.sigma_u.cols() == n,
          ErrorCode::Precondition, "inconsistent factor-model dimensions");
  PopulationModel m;
  m.mu = block.loadings * block.mu_x + block.mu_u;
  m.sigma = block.loadings * block.sigma_x * block.loadings.transpose() + block.sigma_u;
  m.factors = std::move(block);
  return m;
}

double population_theta(const PopulationModel& model) {
  require(model.mu.size() == model.sigma.rows(), ErrorCode::Precondition, "mu and Sigma sizes differ");
  return model.mu.dot(SpdFactorization(model.sigma).solve(model.mu));
}

WeightVector population_mvp_weight(const PopulationModel& model, double rho_bar, MvpVariant variant) {
  require(model.mu.size() == model.sigma.rows(), ErrorCode::Precondition, "mu and Sigma sizes differ");
  const Eigen::VectorXd direction = SpdFactorization(model.sigma).solve(model.mu);
  const double theta = model.mu.dot(direction);
  require(theta > 0.0, ErrorCode::DegenerateModel, "theta is not positive");
  const double scale = variant == MvpVariant::mvp ? rho_bar / theta : rho_bar / (1.0 + theta);
  return WeightVector::from_dense(scale * direction, rho_bar);
}

Eigen::VectorXd beta_target(const PopulationModel& model, double alpha) {
  require(alpha != 0.0 && std::isfinite(alpha), ErrorCode::InvalidScale, "alpha must be nonzero");
  require(model.mu.size() == model.sigma.rows(), ErrorCode::Precondition, "mu and Sigma sizes differ");
  const Eigen::MatrixXd second = model.sigma + model.mu * model.mu.transpose();
  return alpha * SpdFactorization(second).solve(model.mu);
}

double population_aug_theta(const PopulationModel& model) {
  const FactorBlock& f = factor_block_of(model);
  return f.mu_u.dot(SpdFactorization(f.sigma_u).solve(f.mu_u)) +
         f.mu_x.dot(SpdFactorization(f.sigma_x).solve(f.mu_x));
}

AugmentedWeights population_aug_weights(const PopulationModel& model, double rho_bar) {
  const FactorBlock& f = factor_block_of(model);
  const Eigen::VectorXd su_mu = SpdFactorization(f.sigma_u).solve(f.mu_u);
  const Eigen::VectorXd sx_mu = SpdFactorization(f.sigma_x).solve(f.mu_x);
  const double theta = f.mu_u.dot(su_mu) + f.mu_x.dot(sx_mu);
  require(theta > 0.0, ErrorCode::DegenerateModel, "augmented theta is not positive");
  const double scale = rho_bar / theta;
  AugmentedWeights w;
  w.asset_block = WeightVector::from_dense(scale * su_mu, rho_bar);
  w.factor_block = scale * (sx_mu - f.loadings.transpose() * su_mu);
  return w;
}

AugmentedWeights augmented_ols_weights(const ReturnPanel& panel, const Eigen::MatrixXd& factors,
                                       const IndexList& selected, double rho_bar, Index rows,
                                       ThetaEstimator estimator) {
  const Index t = panel.periods();
  const Index k = factors.cols();
  require(factors.size() == 0 || factors.rows() == t, ErrorCode::Precondition,
          "factor rows differ from return rows");
  if (k == 0) {
    check_selection(selected, panel.assets());
  } else {
    for (Index j : selected) {
      require(j >= 0 && j < panel.assets(), ErrorCode::Precondition, "selected index out of range");
    }
  }
  require(rows >= 1 && rows <= t, ErrorCode::Precondition, "estimation window must lie in [1, T]");
  const auto s = static_cast<Index>(selected.size());
  const Index d = s + k;
  require(d < rows, ErrorCode::Precondition, "more regressors than estimation rows");

  Eigen::MatrixXd block(rows, d);
  for (Index a = 0; a < s; ++a) block.col(a) = panel.values().col(selected[static_cast<std::size_t>(a)]).tail(rows);
  if (k > 0) block.rightCols(k) = factors.bottomRows(rows);

  const double theta_s = plugin_theta(block);
  const double theta = estimator == ThetaEstimator::plugin ? theta_s : kan_zhou_theta(theta_s, rows, d);
  const double r_c = inflated_constant(rho_bar, theta);

  const Eigen::MatrixXd gram = block.transpose() * block;
  const Eigen::VectorXd rhs = block.transpose() * Eigen::VectorXd::Ones(rows);
  const Eigen::VectorXd coef = r_c * SpdFactorization(gram).solve(rhs);

  AugmentedWeights w;
  w.asset_block = scatter(coef.head(s), selected, panel.assets(), rho_bar);
  w.factor_block = coef.tail(k);
  return w;
}

WeightVector post_screen_ols_weights(const ReturnPanel& panel, const IndexList& selected,
                                     double rho_bar, ThetaEstimator estimator) {
  check_selection(selected, panel.assets());
  require(static_cast<Index>(selected.size()) < panel.periods(), ErrorCode::Precondition,
          "selected set must be smaller than T");
  return augmented_ols_weights(panel, Eigen::MatrixXd(panel.periods(), 0), selected, rho_bar,
                               panel.periods(), estimator)
      .asset_block;
}

WeightVector plugin_weights(const ReturnPanel& panel, const IndexList& selected, double rho_bar) {
  check_selection(selected, panel.assets());
  require(static_cast<Index>(selected.size()) < panel.periods(), ErrorCode::Precondition,
          "selected set must be smaller than T");
  const MomentSummary m = sample_moments(panel.select_columns(selected));
  const Eigen::VectorXd direction = SpdFactorization(m.cov).solve(m.mean);
  const double theta = m.mean.dot(direction);
  require(theta > 0.0, ErrorCode::DegenerateModel, "estimated theta is not positive");
  return scatter((rho_bar / theta) * direction, selected, panel.assets(), rho_bar);
}

AugmentedWeights fps2_weights(const ReturnPanel& panel, const Eigen::MatrixXd& factors,
                              const IndexList& selected, double rho_bar, Index ell) {
  const Index d = static_cast<Index>(selected.size()) + factors.cols();
  require(d >= 1, ErrorCode::EmptyScreen, "no assets or factors to weight");
  require(ell <= panel.periods(), ErrorCode::Regime, "ell exceeds the number of periods");
  require(d < ell - 2, ErrorCode::Regime, "|S| + K must be below ell - 2");
  return augmented_ols_weights(panel, factors, selected, rho_bar, ell, ThetaEstimator::kan_zhou);
}

Index subpool_rank(const SubpoolConfig& cfg) {
  const auto rank = static_cast<Index>(std::llround((1.0 - cfg.percentile) * static_cast<double>(cfg.draws)));
  return std::clamp<Index>(rank, 1, cfg.draws);
}

bool needs_subpool(Index assets, Index periods) { return assets >= periods - 2; }

IndexList select_subpool(const ReturnPanel& panel, const SubpoolConfig& cfg) {
  const Index n = panel.assets();
  require(cfg.draws >= 1, ErrorCode::Configuration, "sub-pool draws must be positive");
  require(cfg.percentile > 0.0 && cfg.percentile <= 1.0, ErrorCode::Configuration,
          "sub-pool percentile must lie in (0, 1]");
  require(cfg.size >= 1 && cfg.size <= n, ErrorCode::Configuration, "sub-pool size must lie in [1, N]");
  require(cfg.size < panel.periods() - 2, ErrorCode::Regime, "sub-pool size must be below T - 2");

  auto rng = make_rng(cfg.seed, kSubpoolStream);
  IndexList all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), Index{0});
  std::vector<std::pair<double, IndexList>> draws;
  draws.reserve(static_cast<std::size_t>(cfg.draws));
  for (Index d = 0; d < cfg.draws; ++d) {
    std::shuffle(all.begin(), all.end(), rng);
    IndexList pick(all.begin(), all.begin() + cfg.size);
    std::sort(pick.begin(), pick.end());
    const double theta = plugin_theta(panel.select_columns(pick));
    draws.emplace_back(std::sqrt(theta), std::move(pick));
  }
  // Stable order on equal Sharpe ratios keeps the result independent of sort internals.
  std::stable_sort(draws.begin(), draws.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  return draws[static_cast<std::size_t>(subpool_rank(cfg) - 1)].second;
}

namespace {

struct MaxserSetup {
  IndexList pool;
  Eigen::MatrixXd design;
  double theta_hat = 0.0;
  double r_c = 0.0;
};

MaxserSetup maxser_setup(const ReturnPanel& panel, double rho_bar, const std::optional<SubpoolConfig>& subpool) {
  MaxserSetup s;
  if (subpool.has_value() && needs_subpool(panel.assets(), panel.periods())) {
    s.pool = select_subpool(panel, *subpool);
  } else {
    s.pool.resize(static_cast<std::size_t>(panel.assets()));
    std::iota(s.pool.begin(), s.pool.end(), Index{0});
  }
  const ReturnPanel pooled = panel.select_columns(s.pool);
  const auto n = pooled.assets();
  require(n < pooled.periods() - 2, ErrorCode::Regime, "MAXSER needs N < T - 2; enable sub-pooling");
  s.theta_hat = kan_zhou_theta(plugin_theta(pooled), pooled.periods(), n);
  s.r_c = inflated_constant(rho_bar, s.theta_hat);
  s.design = pooled.values();
  return s;
}

}  // namespace

WeightVector maxser_weights(const ReturnPanel& panel, double rho_bar, double lambda,
                            const std::optional<SubpoolConfig>& subpool) {
  const MaxserSetup s = maxser_setup(panel, rho_bar, subpool);
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(s.design.rows(), s.r_c);
  const GramSystem system = GramSystem::from_data(s.design, y);
  const LassoSolution sol = lasso_fit(system, lambda, {}, LassoOptions{});
  return scatter(sol.coefficients, s.pool, panel.assets(), rho_bar);
}

MaxserFit maxser_fit(const ReturnPanel& panel, double rho_bar, const MaxserConfig& cfg) {
  const MaxserSetup s = maxser_setup(panel, rho_bar, cfg.subpool);
  const Index t = s.design.rows();
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(t, s.r_c);
  const GramSystem full = GramSystem::from_data(s.design, y);
  const auto grid = lambda_grid(lambda_max(full, {}), cfg.grid_size, cfg.grid_ratio);
  const auto folds = make_folds(t, cfg.folds, cfg.seed);

  std::vector<double> error(grid.size(), 0.0);
  std::vector<bool> failed(grid.size(), false);
  for (const IndexList& test : folds) {
    std::vector<bool> in_test(static_cast<std::size_t>(t), false);
    for (Index i : test) in_test[static_cast<std::size_t>(i)] = true;
    IndexList train_rows;
    for (Index i = 0; i < t; ++i) {
      if (!in_test[static_cast<std::size_t>(i)]) train_rows.push_back(i);
    }
    Eigen::MatrixXd x_train(static_cast<Index>(train_rows.size()), s.design.cols());
    for (std::size_t r = 0; r < train_rows.size(); ++r) x_train.row(static_cast<Index>(r)) = s.design.row(train_rows[r]);
    Eigen::MatrixXd x_test(static_cast<Index>(test.size()), s.design.cols());
    for (std::size_t r = 0; r < test.size(); ++r) x_test.row(static_cast<Index>(r)) = s.design.row(test[r]);
    const GramSystem train =
        GramSystem::from_data(x_train, Eigen::VectorXd::Constant(x_train.rows(), s.r_c));

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(s.design.cols());
    for (std::size_t m = 0; m < grid.size(); ++m) {
      try {
        beta = lasso_fit(train, grid[m], {}, cfg.lasso, &beta).coefficients;
      } catch (const IterationLimitError& e) {
        beta = e.last_iterate();
        failed[m] = true;
        continue;
      }
      const Eigen::VectorXd resid = (Eigen::VectorXd::Constant(x_test.rows(), s.r_c) - x_test * beta);
      error[m] += resid.squaredNorm() / static_cast<double>(x_test.rows());
    }
  }

  double best = std::numeric_limits<double>::infinity();
  std::size_t best_m = grid.size();
  for (std::size_t m = 0; m < grid.size(); ++m) {
    if (!failed[m] && error[m] < best) {
      best = error[m];
      best_m = m;
    }
  }
  require(best_m < grid.size(), ErrorCode::NoValidLambda, "no lambda converged in every fold");

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(s.design.cols());
  for (std::size_t m = 0; m <= best_m; ++m) beta = lasso_fit(full, grid[m], {}, cfg.lasso, &beta).coefficients;

  MaxserFit fit;
  fit.weights = scatter(beta, s.pool, panel.assets(), rho_bar);
  fit.lambda = grid[best_m];
  fit.theta_hat = s.theta_hat;
  fit.pool = s.pool;
  return fit;
}

double sharpe_ratio(const Eigen::VectorXd& w, const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma) {
  require(w.size() == mu.size() && sigma.rows() == mu.size() && sigma.cols() == mu.size(),
          ErrorCode::Precondition, "dimension mismatch");
  const double var = w.dot(sigma * w);
  require(var > 0.0 && std::isfinite(var), ErrorCode::UndefinedRatio, "portfolio variance is not positive");
  return w.dot(mu) / std::sqrt(var);
}

double portfolio_sharpe(const WeightVector& weights, const PopulationModel& model) {
  require(weights.universe_size == model.mu.size(), ErrorCode::Precondition, "universe size mismatch");
  require(!weights.entries.empty(), ErrorCode::UndefinedRatio, "zero weight vector");
  return sharpe_ratio(weights.dense(), model.mu, model.sigma);
}

double portfolio_sharpe(const AugmentedWeights& weights, const PopulationModel& model) {
  const FactorBlock& f = factor_block_of(model);
  const Index n = model.mu.size();
  const Index k = f.mu_x.size();
  require(weights.asset_block.universe_size == n && weights.factor_block.size() == k,
          ErrorCode::Precondition, "augmented weight dimensions mismatch");
  Eigen::VectorXd mu(n + k);
  mu << model.mu, f.mu_x;
  Eigen::MatrixXd sigma(n + k, n + k);
  const Eigen::MatrixXd cross = f.loadings * f.sigma_x;
  sigma.topLeftCorner(n, n) = model.sigma;
  sigma.topRightCorner(n, k) = cross;
  sigma.bottomLeftCorner(k, n) = cross.transpose();
  sigma.bottomRightCorner(k, k) = f.sigma_x;
  const Eigen::VectorXd w = weights.dense();
  require(!w.isZero(0.0), ErrorCode::UndefinedRatio, "zero weight vector");
  return sharpe_ratio(w, mu, sigma);
}

}  // namespace ps2
