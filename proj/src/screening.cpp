#include "ps2/screening.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "ps2/error.hpp"
#include "ps2/parallel.hpp"

namespace ps2 {

namespace {

constexpr std::uint64_t kResponseStream = 1;
constexpr std::uint64_t kFoldStream = 2;

struct FoldOutcome {
  std::vector<Index> support;
  std::vector<double> error;
  std::vector<std::string> failure;  // empty when the fit succeeded
};

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& x, const IndexList& rows) {
  Eigen::MatrixXd out(static_cast<Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = x.row(rows[i]);
  return out;
}

Eigen::VectorXd gather(const Eigen::VectorXd& v, const IndexList& idx) {
  Eigen::VectorXd out(static_cast<Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out(static_cast<Index>(i)) = v(idx[i]);
  return out;
}

Eigen::MatrixXd gather_block(const Eigen::MatrixXd& m, const IndexList& idx) {
  const auto n = static_cast<Index>(idx.size());
  Eigen::MatrixXd out(n, n);
  for (Index a = 0; a < n; ++a) {
    for (Index b = 0; b < n; ++b) out(a, b) = m(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(b)]);
  }
  return out;
}

struct StageResult {
  LambdaSelection selection;
  Eigen::VectorXd coefficients;
};

StageResult run_stage(const ReturnPanel& panel, const Eigen::VectorXd& z, const ScreenConfig& cfg,
                      const Eigen::VectorXd& weights) {
  const GramSystem full = GramSystem::from_data(panel.values(), z);
  const auto grid = lambda_grid(lambda_max(full, weights), cfg.grid_size, cfg.grid_ratio);
  StageResult out;
  out.selection = cv_select_lambda(panel, z, grid, cfg, weights);

  // Full-sample refit, warm-started down the grid to lambda*.
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(panel.assets());
  for (double lambda : grid) {
    if (lambda < out.selection.lambda_star) break;
    beta = lasso_fit(full, lambda, weights, cfg.lasso, &beta).coefficients;
  }
  out.coefficients = std::move(beta);
  return out;
}

}  // namespace

void validate(const ScreenConfig& cfg) {
  require(cfg.alpha > 0.0 && std::isfinite(cfg.alpha), ErrorCode::Configuration, "alpha must be positive");
  require(cfg.tau >= 0.0 && std::isfinite(cfg.tau), ErrorCode::Configuration, "tau must be nonnegative");
  require(cfg.folds >= 2, ErrorCode::Configuration, "need at least two folds");
  require(cfg.grid_size >= 1, ErrorCode::Configuration, "grid size must be at least 1");
  require(cfg.grid_ratio > 0.0 && cfg.grid_ratio < 1.0, ErrorCode::Configuration,
          "grid ratio must lie in (0, 1)");
}

Eigen::VectorXd perturbed_response(Index periods, const ScreenConfig& cfg) {
  require(periods >= 1, ErrorCode::Precondition, "response length must be positive");
  Eigen::VectorXd z = Eigen::VectorXd::Constant(periods, cfg.alpha);
  if (cfg.tau == 0.0) return z;
  auto rng = make_rng(cfg.seed, kResponseStream);
  std::normal_distribution<double> noise(0.0, cfg.tau);
  for (Index t = 0; t < periods; ++t) z(t) += noise(rng);
  return z;
}

std::vector<IndexList> make_folds(Index periods, Index folds, std::uint64_t seed) {
  require(folds >= 2 && folds <= periods, ErrorCode::Precondition,
          "fold count must lie in [2, T]");
  IndexList order(static_cast<std::size_t>(periods));
  std::iota(order.begin(), order.end(), Index{0});
  auto rng = make_rng(seed, kFoldStream);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<IndexList> out(static_cast<std::size_t>(folds));
  const Index base = periods / folds;
  const Index extra = periods % folds;
  auto it = order.begin();
  for (Index f = 0; f < folds; ++f) {
    const Index size = base + (f < extra ? 1 : 0);
    auto& fold = out[static_cast<std::size_t>(f)];
    fold.assign(it, it + size);
    std::sort(fold.begin(), fold.end());
    it += size;
  }
  return out;
}

LambdaSelection cv_select_lambda(const ReturnPanel& panel, const Eigen::VectorXd& z,
                                 const std::vector<double>& grid, const ScreenConfig& cfg,
                                 const Eigen::VectorXd& penalty_weights) {
  validate(cfg);
  const auto& x = panel.values();
  const Index t = x.rows();
  const Index k = cfg.folds;
  require(z.size() == t, ErrorCode::Precondition, "response length mismatch");
  require(!grid.empty(), ErrorCode::Precondition, "empty lambda grid");
  require(k <= t, ErrorCode::Precondition, "more folds than periods");

  const auto folds = make_folds(t, k, cfg.seed);
  Eigen::MatrixXd xtx_total = x.transpose() * x;
  Eigen::VectorXd xtz_total = x.transpose() * z;
  const double ztz_total = z.squaredNorm();
  const std::size_t m_count = grid.size();

  std::vector<FoldOutcome> outcomes(static_cast<std::size_t>(k));
  parallel_for(static_cast<std::size_t>(k), cfg.threads, [&](std::size_t f) {
    const IndexList& test = folds[f];
    const Eigen::MatrixXd x_test = gather_rows(x, test);
    const Eigen::VectorXd z_test = gather(z, test);
    const auto n_train = static_cast<double>(t - static_cast<Index>(test.size()));

    GramSystem train;
    train.gram = (xtx_total - x_test.transpose() * x_test) / n_train;
    train.xty = (xtz_total - x_test.transpose() * z_test) / n_train;
    train.yty = (ztz_total - z_test.squaredNorm()) / n_train;
    train.samples = t - static_cast<Index>(test.size());

    FoldOutcome& out = outcomes[f];
    out.support.assign(m_count, 0);
    out.error.assign(m_count, 0.0);
    out.failure.assign(m_count, {});

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(x.cols());
    for (std::size_t m = 0; m < m_count; ++m) {
      try {
        beta = lasso_fit(train, grid[m], penalty_weights, cfg.lasso, &beta).coefficients;
      } catch (const IterationLimitError& e) {
        beta = e.last_iterate();
        out.failure[m] = "lasso did not converge";
        continue;
      }
      IndexList active;
      for (Index j = 0; j < beta.size(); ++j) {
        if (beta(j) != 0.0) active.push_back(j);
      }
      const auto s = static_cast<Index>(active.size());
      out.support[m] = s;
      if (s * k > t * (k - 2)) continue;  // capped below; no OLS needed

      const double n_test = static_cast<double>(test.size());
      if (active.empty()) {
        out.error[m] = cfg.alpha * cfg.alpha;
        continue;
      }
      Eigen::VectorXd ols;
      try {
        ols = SpdFactorization(gather_block(train.gram, active)).solve(gather(train.xty, active));
      } catch (const Error&) {
        out.failure[m] = "singular post-screening Gram matrix";
        continue;
      }
      double sse = 0.0;
      for (Index i = 0; i < x_test.rows(); ++i) {
        double fit = 0.0;
        for (std::size_t a = 0; a < active.size(); ++a) fit += x_test(i, active[a]) * ols(static_cast<Index>(a));
        const double r = cfg.alpha - fit;
        sse += r * r;
      }
      out.error[m] = sse / n_test;
    }
  });

  LambdaSelection sel;
  sel.cv.resize(m_count);
  double best = std::numeric_limits<double>::infinity();
  bool found = false;
  for (std::size_t m = 0; m < m_count; ++m) {
    CvEntry& e = sel.cv[m];
    e.lambda = grid[m];
    for (const auto& out : outcomes) {
      e.max_fold_support = std::max(e.max_fold_support, out.support[m]);
      e.error += out.error[m];
      if (!out.failure[m].empty() && e.reason.empty()) e.reason = out.failure[m];
    }
    if (e.max_fold_support * k > t * (k - 2)) {
      e.filtered = true;
      if (e.reason.empty()) e.reason = "support exceeds T(k-2)/k";
    } else if (!e.reason.empty()) {
      e.filtered = true;
    }
    if (e.filtered) {
      e.error = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    if (e.error < best) {
      best = e.error;
      sel.lambda_star = e.lambda;
      found = true;
    }
  }
  require(found, ErrorCode::NoValidLambda, "every lambda candidate was filtered");
  return sel;
}

ScreeningResult screen(const ReturnPanel& panel, const ScreenConfig& cfg) {
  validate(cfg);
  const Index t = panel.periods();
  require(cfg.folds <= t, ErrorCode::Precondition, "more folds than periods");
  const Eigen::VectorXd z = perturbed_response(t, cfg);

  ScreeningResult result;
  StageResult stage = run_stage(panel, z, cfg, {});
  Eigen::VectorXd coefficients = stage.coefficients;

  if (cfg.method == ScreenMethod::adaptive) {
    AdaptiveWeights aw;
    try {
      aw = adaptive_weights(stage.coefficients);
    } catch (const Error&) {
      fail(ErrorCode::EmptyScreen, "pilot Lasso selected no assets");
    }
    const ReturnPanel kept = panel.select_columns(aw.kept);
    stage = run_stage(kept, z, cfg, aw.weights);
    coefficients = Eigen::VectorXd::Zero(panel.assets());
    for (std::size_t a = 0; a < aw.kept.size(); ++a) coefficients(aw.kept[a]) = stage.coefficients(static_cast<Index>(a));
  }

  result.lambda_star = stage.selection.lambda_star;
  result.cv = std::move(stage.selection.cv);
  for (const auto& e : result.cv) {
    if (e.filtered) result.filtered.push_back(e.lambda);
  }
  for (Index j = 0; j < coefficients.size(); ++j) {
    if (coefficients(j) != 0.0) result.selected.push_back(j);
  }
  result.coefficients = std::move(coefficients);
  require(!result.selected.empty(), ErrorCode::EmptyScreen, "screening selected no assets");
  return result;
}

}  // namespace ps2
