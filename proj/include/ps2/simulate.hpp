#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ps2/defactor.hpp"
#include "ps2/moments.hpp"
#include "ps2/portfolio.hpp"
#include "ps2/screening.hpp"

namespace ps2 {

/// orthonormal: unit-norm loading columns.  orthogonal: Gram-Schmidt without the final
/// normalization, so column norms grow like sqrt(n_k) and factor strength follows the
/// loading support size.
enum class LoadingScale { orthonormal, orthogonal };

struct DgpSpec {
  int dgp = 1;
  Index n = 200;
  Index t = 2000;
  Index r_a = 3;
  Index r_b = 3;
  double sigma_e2 = 2.0;
  double theta_x0 = 0.01;
  std::uint64_t seed = 0;
  LoadingScale loading_scale = LoadingScale::orthogonal;
};

void validate(const DgpSpec& spec);

/// floor(1.415 sqrt(N)).
Index sparsity_level(Index n);
/// floor(N^{(6-k)/10} + 1/2) for k = 1, 2, ...
Index weak_support(Index n, Index k);
/// |S|: N1 for DGP1/3, max(n1, N1) for DGP2/4.
Index true_sparsity(const DgpSpec& spec);

bool has_strong_factors(int dgp);
bool has_weak_factors(int dgp);

/// Modified Gram-Schmidt on the columns of `m`. Columns are processed from last to
/// first, so a column only absorbs later columns; with nested supports that shrink
/// left to right, each column keeps its own zero pattern.
Eigen::MatrixXd gram_schmidt(const Eigen::MatrixXd& m, LoadingScale scale);

struct DgpRealization {
  ReturnPanel returns;
  std::optional<FactorPanel> factors;
  IndexList true_support;
  PopulationModel population;
  Eigen::VectorXd true_weights;  // length N, or N + K with factors
  double rho_bar = 0.0;
};

inline constexpr double kSimRhoBar = 0.05;

DgpRealization make_dgp(const DgpSpec& spec, double rho_bar = kSimRhoBar);

enum class SimMethod { ps2, fps2, ps2_on_factored_data, maxser, oracle_fps2 };

const char* to_string(SimMethod method);
SimMethod parse_sim_method(const std::string& name);

struct ScreeningMetrics {
  Index nonzeros = 0;
  double fdp = 0.0;
  double pwr = 0.0;
};

ScreeningMetrics screening_metrics(const IndexList& selected, const IndexList& truth, Index s);

struct EstimationMetrics {
  double mse = 0.0;
  double sr = 0.0;
};

/// mse against the truth over the full (N or N + K) vector. sr is the in-sample
/// Sharpe ratio from the sample mean and covariance of the selected (and factor) columns.
EstimationMetrics estimation_metrics(const Eigen::VectorXd& weights, const DgpRealization& realization);

struct RepResult {
  std::uint64_t seed = 0;
  bool valid = false;
  std::string failure;
  ScreeningMetrics screening;
  EstimationMetrics estimation;
};

struct Aggregate {
  double mean = 0.0;
  double se = 0.0;  // standard error of the mean
};

struct SimReport {
  DgpSpec spec;
  SimMethod method = SimMethod::ps2;
  std::uint64_t base_seed = 0;
  std::vector<RepResult> per_rep;
  Index valid_reps = 0;
  Aggregate nonzeros, fdp, pwr, mse, sr;
};

struct ExperimentConfig {
  ScreenConfig screen{};
  SubpoolConfig subpool{};
  MaxserConfig maxser{};
  double rho_bar = kSimRhoBar;
  std::size_t threads = 1;  // replication-level workers
};

RepResult run_replication(const DgpSpec& spec, SimMethod method, const ExperimentConfig& cfg);

/// Replication r uses seed base_seed + r; failed reps are kept but excluded from aggregates.
SimReport run_experiment(const DgpSpec& spec, SimMethod method, Index reps, std::uint64_t base_seed,
                         const ExperimentConfig& cfg = {});

/// Rescales every mse (per rep and aggregate) by `baseline`'s mean mse.
SimReport normalize_mse(SimReport report, const SimReport& baseline);

/// Lasso screening on the one-factor model of strong-factor loss of power; returns |S|/N.
double strong_factor_demo(double c, Index n, Index t, std::uint64_t seed,
                          const ScreenConfig& base = {});

void write_sim_csv(std::ostream& out, const SimReport& report);
std::string sim_report_json(const SimReport& report);

/// Nonzeros / FDR / Power / MSE / SR rows with one column per report.
std::string format_sim_table(const std::vector<SimReport>& reports);

}  // namespace ps2
