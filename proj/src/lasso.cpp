#include "ps2/lasso.hpp"

#include <algorithm>
#include <cmath>

#include "ps2/error.hpp"

namespace ps2 {

namespace {

Eigen::VectorXd resolve_weights(const Eigen::VectorXd& weights, Index p) {
  if (weights.size() == 0) return Eigen::VectorXd::Ones(p);
  require(weights.size() == p, ErrorCode::Precondition, "penalty weight length mismatch");
  require((weights.array() > 0.0).all() && weights.allFinite(), ErrorCode::Precondition,
          "penalty weights must be positive and finite");
  return weights;
}

double kkt_from_gradient(const Eigen::VectorXd& gradient, const Eigen::VectorXd& penalty,
                         const Eigen::VectorXd& beta) {
  double worst = 0.0;
  for (Index j = 0; j < beta.size(); ++j) {
    double v;
    if (beta(j) != 0.0) {
      v = std::abs(gradient(j) - penalty(j) * (beta(j) > 0.0 ? 1.0 : -1.0));
    } else {
      v = std::max(std::abs(gradient(j)) - penalty(j), 0.0);
    }
    worst = std::max(worst, v);
  }
  return worst;
}

IndexList support_of(const Eigen::VectorXd& beta) {
  IndexList s;
  for (Index j = 0; j < beta.size(); ++j) {
    if (beta(j) != 0.0) s.push_back(j);
  }
  return s;
}

}  // namespace

GramSystem GramSystem::from_data(const Eigen::MatrixXd& design, const Eigen::VectorXd& response) {
  require(design.rows() == response.size(), ErrorCode::Precondition,
          "design rows and response length differ");
  require(design.rows() >= 1, ErrorCode::InsufficientData, "empty design");
  GramSystem g;
  const double t = static_cast<double>(design.rows());
  g.gram.noalias() = design.transpose() * design;
  g.gram /= t;
  g.xty.noalias() = design.transpose() * response;
  g.xty /= t;
  g.yty = response.squaredNorm() / t;
  g.samples = design.rows();
  return g;
}

double lasso_objective(const GramSystem& system, double lambda, const Eigen::VectorXd& weights,
                       const Eigen::VectorXd& beta) {
  const Eigen::VectorXd gamma = resolve_weights(weights, beta.size());
  const double loss = system.yty - 2.0 * beta.dot(system.xty) + beta.dot(system.gram * beta);
  return loss + 2.0 * lambda * gamma.cwiseProduct(beta.cwiseAbs()).sum();
}

LassoSolution lasso_fit(const GramSystem& system, double lambda, const Eigen::VectorXd& weights,
                        const LassoOptions& options, const Eigen::VectorXd* warm_start) {
  const Index p = system.gram.rows();
  require(system.gram.cols() == p && system.xty.size() == p, ErrorCode::Precondition,
          "inconsistent Gram system");
  require(lambda >= 0.0 && std::isfinite(lambda), ErrorCode::Precondition,
          "lambda must be finite and nonnegative");
  require(options.max_iter >= 1 && options.tol > 0.0, ErrorCode::Precondition,
          "invalid solver options");
  const Eigen::VectorXd penalty = lambda * resolve_weights(weights, p);
  const auto& g = system.gram;

  for (Index j = 0; j < p; ++j) {
    if (g(j, j) <= 0.0 && penalty(j) == 0.0) {
      fail(ErrorCode::SingularDesign, "zero-norm column " + std::to_string(j) + " with zero penalty");
    }
  }

  LassoSolution sol;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  if (warm_start != nullptr) {
    require(warm_start->size() == p, ErrorCode::Precondition, "warm start length mismatch");
    beta = *warm_start;
  }
  // gradient(j) = X_j'(z - X beta) / T
  Eigen::VectorXd gradient = system.xty - g * beta;

  auto update = [&](Index j) -> double {
    const double gjj = g(j, j);
    if (gjj <= 0.0) return 0.0;
    const double rho = gradient(j) + gjj * beta(j);
    const double next = soft_threshold(rho, penalty(j)) / gjj;
    const double delta = next - beta(j);
    if (delta != 0.0) {
      gradient.noalias() -= g.col(j) * delta;
      beta(j) = next;
    }
    return std::abs(delta);
  };
  auto record = [&] {
    if (options.record_objective) sol.objective_trace.push_back(lasso_objective(system, lambda, weights, beta));
  };
  auto check_budget = [&] {
    if (sol.iterations >= options.max_iter) {
      throw IterationLimitError("coordinate descent did not converge in " +
                                    std::to_string(options.max_iter) + " sweeps",
                                beta, sol.iterations);
    }
  };

  for (;;) {
    double change = 0.0;
    for (Index j = 0; j < p; ++j) change = std::max(change, update(j));
    ++sol.iterations;
    record();
    if (change <= options.tol) {
      gradient = system.xty - g * beta;
      sol.kkt_residual = kkt_from_gradient(gradient, penalty, beta);
      if (sol.kkt_residual <= options.tol) break;
    }
    check_budget();

    const IndexList active = support_of(beta);
    if (active.empty()) continue;
    for (;;) {
      double active_change = 0.0;
      for (Index j : active) active_change = std::max(active_change, update(j));
      ++sol.iterations;
      record();
      if (active_change <= options.tol) break;
      check_budget();
    }
    check_budget();
  }

  sol.coefficients = std::move(beta);
  sol.active_set = support_of(sol.coefficients);
  return sol;
}

LassoSolution lasso_fit(const LassoProblem& problem, const LassoOptions& options) {
  require(problem.design.rows() == problem.response.size(), ErrorCode::Precondition,
          "design rows and response length differ");
  const GramSystem system = GramSystem::from_data(problem.design, problem.response);
  return lasso_fit(system, problem.lambda, problem.weights, options);
}

double kkt_residual(const GramSystem& system, double lambda, const Eigen::VectorXd& weights,
                    const Eigen::VectorXd& beta) {
  require(beta.size() == system.gram.rows(), ErrorCode::Precondition, "coefficient length mismatch");
  const Eigen::VectorXd penalty = lambda * resolve_weights(weights, beta.size());
  const Eigen::VectorXd gradient = system.xty - system.gram * beta;
  return kkt_from_gradient(gradient, penalty, beta);
}

double kkt_residual(const LassoProblem& problem, const Eigen::VectorXd& beta) {
  const auto& x = problem.design;
  require(x.rows() == problem.response.size() && x.cols() == beta.size(), ErrorCode::Precondition,
          "dimension mismatch");
  const Eigen::VectorXd penalty = problem.lambda * resolve_weights(problem.weights, beta.size());
  const Eigen::VectorXd residual = problem.response - x * beta;
  const Eigen::VectorXd gradient = x.transpose() * residual / static_cast<double>(x.rows());
  return kkt_from_gradient(gradient, penalty, beta);
}

double lambda_max(const GramSystem& system, const Eigen::VectorXd& weights) {
  const Eigen::VectorXd gamma = resolve_weights(weights, system.xty.size());
  return system.xty.cwiseAbs().cwiseQuotient(gamma).maxCoeff();
}

std::vector<double> lambda_grid(double lambda_max, Index count, double ratio) {
  require(count >= 1, ErrorCode::Precondition, "grid needs at least one point");
  require(ratio > 0.0 && ratio < 1.0, ErrorCode::Precondition, "grid ratio must lie in (0, 1)");
  require(lambda_max > 0.0 && std::isfinite(lambda_max), ErrorCode::DegenerateGrid,
          "X'z is identically zero");
  std::vector<double> grid(static_cast<std::size_t>(count));
  grid[0] = lambda_max;
  for (Index m = 1; m < count; ++m) {
    const double frac = static_cast<double>(m) / static_cast<double>(count - 1);
    grid[static_cast<std::size_t>(m)] = lambda_max * std::pow(ratio, frac);
  }
  return grid;
}

std::vector<double> lambda_grid(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                                Index count, double ratio) {
  require(design.rows() == response.size() && design.rows() >= 1, ErrorCode::Precondition,
          "dimension mismatch");
  const Eigen::VectorXd xty = design.transpose() * response / static_cast<double>(design.rows());
  return lambda_grid(xty.cwiseAbs().maxCoeff(), count, ratio);
}

AdaptiveWeights adaptive_weights(const Eigen::VectorXd& pilot) {
  AdaptiveWeights out;
  std::vector<double> gamma;
  for (Index j = 0; j < pilot.size(); ++j) {
    if (pilot(j) != 0.0) {
      out.kept.push_back(j);
      gamma.push_back(1.0 / std::abs(pilot(j)));
    } else {
      out.excluded.push_back(j);
    }
  }
  require(!out.kept.empty(), ErrorCode::EmptyModel, "pilot estimate is identically zero");
  out.weights = Eigen::Map<Eigen::VectorXd>(gamma.data(), static_cast<Index>(gamma.size()));
  return out;
}

}  // namespace ps2
