#pragma once

#include <vector>

#include <Eigen/Dense>

#include "ps2/moments.hpp"

namespace ps2 {

/// Weighted l1-penalized least squares:
///   minimize  T^{-1} ||z - X b||^2 + 2 lambda sum_j gamma_j |b_j|.
/// An empty weight vector means gamma_j = 1 for every coordinate.
struct LassoProblem {
  Eigen::MatrixXd design;
  Eigen::VectorXd response;
  double lambda = 0.0;
  Eigen::VectorXd weights;
};

struct LassoOptions {
  double tol = 1e-7;      // max coefficient change per sweep, also the KKT bound
  int max_iter = 10000;   // sweeps
  bool record_objective = false;
};

struct LassoSolution {
  Eigen::VectorXd coefficients;
  IndexList active_set;
  int iterations = 0;
  double kkt_residual = 0.0;
  std::vector<double> objective_trace;  // one entry per sweep when requested
};

/// Sufficient statistics X'X/T, X'z/T and z'z/T. Every solver entry point works on
/// these so that cross-validation folds can be formed by subtraction.
struct GramSystem {
  Eigen::MatrixXd gram;
  Eigen::VectorXd xty;
  double yty = 0.0;
  Index samples = 0;

  static GramSystem from_data(const Eigen::MatrixXd& design, const Eigen::VectorXd& response);
};

LassoSolution lasso_fit(const LassoProblem& problem, const LassoOptions& options = {});

/// Fit from sufficient statistics, optionally warm-started.
LassoSolution lasso_fit(const GramSystem& system, double lambda, const Eigen::VectorXd& weights,
                        const LassoOptions& options = {},
                        const Eigen::VectorXd* warm_start = nullptr);

double kkt_residual(const LassoProblem& problem, const Eigen::VectorXd& beta);
double kkt_residual(const GramSystem& system, double lambda, const Eigen::VectorXd& weights,
                    const Eigen::VectorXd& beta);

double lasso_objective(const GramSystem& system, double lambda, const Eigen::VectorXd& weights,
                       const Eigen::VectorXd& beta);

/// Smallest lambda with an all-zero solution: max_j |X_j'z/T| / gamma_j.
double lambda_max(const GramSystem& system, const Eigen::VectorXd& weights = {});

/// Geometric grid from lambda_max down to ratio * lambda_max, strictly decreasing.
std::vector<double> lambda_grid(double lambda_max, Index count, double ratio);
std::vector<double> lambda_grid(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                                Index count, double ratio);

struct AdaptiveWeights {
  Eigen::VectorXd weights;  // gamma over the kept coordinates
  IndexList kept;           // coordinates with a nonzero pilot
  IndexList excluded;       // coordinates forced to zero in the second stage
};

/// gamma_j = 1 / |pilot_j| for nonzero pilot entries.
AdaptiveWeights adaptive_weights(const Eigen::VectorXd& pilot);

inline double soft_threshold(double x, double t) {
  return x > t ? x - t : (x < -t ? x + t : 0.0);
}

}  // namespace ps2
