#include "ps2/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "ps2/error.hpp"
#include "ps2/parallel.hpp"

namespace ps2 {

namespace {

constexpr std::uint64_t kLoadingStream = 100;
constexpr std::uint64_t kDataStream = 101;

IndexList first_n(Index n) {
  IndexList out(static_cast<std::size_t>(n));
  std::iota(out.begin(), out.end(), Index{0});
  return out;
}

Eigen::MatrixXd gaussian(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) m(i, j) = z(rng);
  }
  return m;
}

Aggregate aggregate(const std::vector<double>& v) {
  Aggregate a;
  if (v.empty()) {
    a.mean = a.se = std::numeric_limits<double>::quiet_NaN();
    return a;
  }
  const double n = static_cast<double>(v.size());
  a.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  if (v.size() < 2) return a;
  double ss = 0.0;
  for (double x : v) ss += (x - a.mean) * (x - a.mean);
  a.se = std::sqrt(ss / (n - 1.0) / n);
  return a;
}

void fill_aggregates(SimReport& r) {
  std::vector<double> nz, fdp, pwr, mse, sr;
  r.valid_reps = 0;
  for (const auto& rep : r.per_rep) {
    if (!rep.valid) continue;
    ++r.valid_reps;
    nz.push_back(static_cast<double>(rep.screening.nonzeros));
    fdp.push_back(rep.screening.fdp);
    pwr.push_back(rep.screening.pwr);
    mse.push_back(rep.estimation.mse);
    sr.push_back(rep.estimation.sr);
  }
  r.nonzeros = aggregate(nz);
  r.fdp = aggregate(fdp);
  r.pwr = aggregate(pwr);
  r.mse = aggregate(mse);
  r.sr = aggregate(sr);
}

Eigen::MatrixXd augmented_values(const DgpRealization& d) {
  if (!d.factors) return d.returns.values();
  Eigen::MatrixXd out(d.returns.periods(), d.returns.assets() + d.factors->factors());
  out << d.returns.values(), d.factors->values();
  return out;
}

IndexList asset_support(const Eigen::VectorXd& w, Index n) {
  IndexList s;
  for (Index i = 0; i < n; ++i) {
    if (w(i) != 0.0) s.push_back(i);
  }
  return s;
}

}  // namespace

void validate(const DgpSpec& spec) {
  require(spec.dgp >= 1 && spec.dgp <= 4, ErrorCode::Configuration, "dgp must be 1, 2, 3 or 4");
  require(spec.n >= 4, ErrorCode::Configuration, "N must be at least 4");
  require(spec.t >= 2, ErrorCode::Configuration, "T must be at least 2");
  require(spec.sigma_e2 > 0.0 && std::isfinite(spec.sigma_e2), ErrorCode::Configuration,
          "sigma_e2 must be positive");
  if (has_strong_factors(spec.dgp)) {
    require(spec.r_a >= 1 && spec.r_a < spec.n, ErrorCode::Configuration, "r_a must lie in [1, N)");
    require(spec.theta_x0 > 0.0 && spec.theta_x0 < 1.0, ErrorCode::Configuration,
            "theta_x0 must lie in (0, 1)");
  }
  if (has_weak_factors(spec.dgp)) {
    require(spec.r_b >= 1, ErrorCode::Configuration, "r_b must be at least 1");
    for (Index k = 1; k <= spec.r_b; ++k) {
      require(weak_support(spec.n, k) >= spec.r_b - k + 1 && weak_support(spec.n, k) <= spec.n,
              ErrorCode::Configuration, "N too small for the weak-factor supports");
    }
  }
  const Index n1 = sparsity_level(spec.n);
  require(n1 >= 1 && n1 < spec.n, ErrorCode::Configuration, "N too small for the sparse mean");
}

Index sparsity_level(Index n) {
  return static_cast<Index>(std::floor(1.415 * std::sqrt(static_cast<double>(n))));
}

Index weak_support(Index n, Index k) {
  const double alpha = static_cast<double>(6 - k) / 10.0;
  return static_cast<Index>(std::floor(std::pow(static_cast<double>(n), alpha) + 0.5));
}

Index true_sparsity(const DgpSpec& spec) {
  const Index n1 = sparsity_level(spec.n);
  return has_weak_factors(spec.dgp) ? std::max(weak_support(spec.n, 1), n1) : n1;
}

bool has_strong_factors(int dgp) { return dgp == 3 || dgp == 4; }
bool has_weak_factors(int dgp) { return dgp == 2 || dgp == 4; }

Eigen::MatrixXd gram_schmidt(const Eigen::MatrixXd& m, LoadingScale scale) {
  Eigen::MatrixXd q = m;
  for (Index j = q.cols() - 1; j >= 0; --j) {
    for (Index i = q.cols() - 1; i > j; --i) {
      q.col(j) -= (q.col(i).dot(q.col(j)) / q.col(i).squaredNorm()) * q.col(i);
    }
    const double norm = q.col(j).norm();
    require(norm > 1e-12, ErrorCode::Singular, "loading columns are linearly dependent");
    if (scale == LoadingScale::orthonormal) q.col(j) /= norm;
  }
  return q;
}

DgpRealization make_dgp(const DgpSpec& spec, double rho_bar) {
  validate(spec);
  const Index n = spec.n;
  const Index t = spec.t;
  const Index n1 = sparsity_level(n);
  const bool strong = has_strong_factors(spec.dgp);
  const bool weak = has_weak_factors(spec.dgp);

  auto loading_rng = make_rng(spec.seed, kLoadingStream);
  Eigen::MatrixXd a(n, strong ? spec.r_a : 0);
  if (strong) a = gram_schmidt(gaussian(n, spec.r_a, loading_rng), spec.loading_scale);
  Eigen::MatrixXd b(n, weak ? spec.r_b : 0);
  if (weak) {
    b.setZero();
    for (Index k = 0; k < spec.r_b; ++k) {
      const Index nk = weak_support(n, k + 1);
      b.col(k).head(nk) = gaussian(nk, 1, loading_rng);
    }
    b = gram_schmidt(b, spec.loading_scale);
  }

  Eigen::MatrixXd sigma_u = spec.sigma_e2 * Eigen::MatrixXd::Identity(n, n);
  if (weak) sigma_u += b * b.transpose();
  Eigen::VectorXd mu0 = Eigen::VectorXd::Zero(n);
  mu0.head(n1).setOnes();
  if (weak) mu0 += b * Eigen::VectorXd::Ones(spec.r_b);
  const double theta0 = mu0.dot(SpdFactorization(sigma_u).solve(mu0));
  const double scale = strong ? std::sqrt(1.0 - spec.theta_x0) / std::sqrt(theta0) : 1.0 / std::sqrt(theta0);
  const Eigen::VectorXd mu_u = scale * mu0;

  // Data: r_t = A x_t + mu_u + B f_t + e_t.
  auto data_rng = make_rng(spec.seed, kDataStream);
  Eigen::MatrixXd r = gaussian(t, n, data_rng) * std::sqrt(spec.sigma_e2);
  r.rowwise() += mu_u.transpose();
  if (weak) r += gaussian(t, spec.r_b, data_rng) * b.transpose();

  DgpRealization out{ReturnPanel(Eigen::MatrixXd(1, 1)), std::nullopt, {}, {}, {}, rho_bar};
  out.true_support = first_n(true_sparsity(spec));
  if (strong) {
    Eigen::VectorXd mu_x = Eigen::VectorXd::Constant(spec.r_a, std::sqrt(spec.theta_x0 / static_cast<double>(spec.r_a)));
    Eigen::MatrixXd x = gaussian(t, spec.r_a, data_rng);
    x.rowwise() += mu_x.transpose();
    r += x * a.transpose();
    out.factors = FactorPanel(std::move(x));
    out.population = PopulationModel::from_factor_model(
        FactorBlock{a, mu_x, Eigen::MatrixXd::Identity(spec.r_a, spec.r_a), mu_u, sigma_u});
    out.true_weights = population_aug_weights(out.population, rho_bar).dense();
  } else {
    out.population.mu = mu_u;
    out.population.sigma = sigma_u;
    out.true_weights = population_mvp_weight(out.population, rho_bar, MvpVariant::mvp).dense();
  }
  out.returns = ReturnPanel(std::move(r));
  return out;
}

const char* to_string(SimMethod method) {
  switch (method) {
    case SimMethod::ps2: return "ps2";
    case SimMethod::fps2: return "fps2";
    case SimMethod::ps2_on_factored_data: return "ps2_on_factored_data";
    case SimMethod::maxser: return "maxser";
    case SimMethod::oracle_fps2: return "oracle_fps2";
  }
  return "unknown";
}

SimMethod parse_sim_method(const std::string& name) {
  for (SimMethod m : {SimMethod::ps2, SimMethod::fps2, SimMethod::ps2_on_factored_data, SimMethod::maxser,
                      SimMethod::oracle_fps2}) {
    if (name == to_string(m)) return m;
  }
  fail(ErrorCode::Configuration, "unknown simulation method '" + name + "'");
}

ScreeningMetrics screening_metrics(const IndexList& selected, const IndexList& truth, Index s) {
  require(s >= 1, ErrorCode::Precondition, "true sparsity must be positive");
  IndexList sel = selected;
  IndexList tru = truth;
  std::sort(sel.begin(), sel.end());
  sel.erase(std::unique(sel.begin(), sel.end()), sel.end());
  std::sort(tru.begin(), tru.end());
  IndexList hit;
  std::set_intersection(sel.begin(), sel.end(), tru.begin(), tru.end(), std::back_inserter(hit));
  ScreeningMetrics m;
  m.nonzeros = static_cast<Index>(sel.size());
  const auto hits = static_cast<double>(hit.size());
  m.fdp = (static_cast<double>(sel.size()) - hits) / static_cast<double>(std::max<std::size_t>(sel.size(), 1));
  m.pwr = hits / static_cast<double>(s);
  return m;
}

EstimationMetrics estimation_metrics(const Eigen::VectorXd& weights, const DgpRealization& d) {
  require(weights.size() == d.true_weights.size(), ErrorCode::Precondition,
          "weight dimension differs from the truth");
  EstimationMetrics m;
  m.mse = (weights - d.true_weights).squaredNorm();

  const Index n = d.returns.assets();
  IndexList cols = asset_support(weights, n);
  for (Index j = n; j < weights.size(); ++j) cols.push_back(j);
  require(!cols.empty(), ErrorCode::UndefinedRatio, "no selected columns");
  const ReturnPanel all(augmented_values(d));
  const MomentSummary mom = sample_moments(all.select_columns(cols));
  Eigen::VectorXd w(static_cast<Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) w(static_cast<Index>(i)) = weights(cols[i]);
  require(!w.isZero(0.0), ErrorCode::UndefinedRatio, "zero selected-block weights");
  m.sr = sharpe_ratio(w, mom.mean, mom.cov);
  return m;
}

RepResult run_replication(const DgpSpec& spec, SimMethod method, const ExperimentConfig& cfg) {
  RepResult rep;
  rep.seed = spec.seed;
  const bool strong = has_strong_factors(spec.dgp);
  if (method == SimMethod::ps2 && strong) {
    fail(ErrorCode::Configuration, "ps2 needs a factor-free DGP; use ps2_on_factored_data");
  }
  if ((method == SimMethod::fps2 || method == SimMethod::ps2_on_factored_data) && !strong) {
    fail(ErrorCode::Configuration, std::string(to_string(method)) + " needs DGP3 or DGP4");
  }

  try {
    const DgpRealization d = make_dgp(spec, cfg.rho_bar);
    const Index n = d.returns.assets();
    const Index t = d.returns.periods();
    Eigen::MatrixXd x = d.factors ? d.factors->values() : Eigen::MatrixXd(t, 0);
    ScreenConfig sc = cfg.screen;
    sc.seed = spec.seed;
    sc.threads = 1;

    Eigen::VectorXd w;
    IndexList selected;
    switch (method) {
      case SimMethod::ps2: {
        selected = screen(d.returns, sc).selected;
        w = post_screen_ols_weights(d.returns, selected, cfg.rho_bar).dense();
        break;
      }
      case SimMethod::ps2_on_factored_data: {
        selected = screen(d.returns, sc).selected;
        w = Eigen::VectorXd::Zero(n + x.cols());
        w.head(n) = post_screen_ols_weights(d.returns, selected, cfg.rho_bar).dense();
        break;
      }
      case SimMethod::fps2: {
        const DefactorResult u = defactor(d.returns, *d.factors);
        selected = screen(u.residuals, sc).selected;
        w = augmented_ols_weights(d.returns, x, selected, cfg.rho_bar, t, ThetaEstimator::plugin).dense();
        break;
      }
      case SimMethod::oracle_fps2: {
        selected = d.true_support;
        w = augmented_ols_weights(d.returns, x, selected, cfg.rho_bar, t, ThetaEstimator::plugin).dense();
        break;
      }
      case SimMethod::maxser: {
        MaxserConfig mc = cfg.maxser;
        mc.seed = spec.seed;
        mc.subpool = cfg.subpool;
        mc.subpool->seed = spec.seed;
        const ReturnPanel aug(augmented_values(d));
        const MaxserFit fit = maxser_fit(aug, cfg.rho_bar, mc);
        w = fit.weights.dense();
        selected = asset_support(w, n);
        break;
      }
    }
    rep.screening = screening_metrics(selected, d.true_support, static_cast<Index>(d.true_support.size()));
    rep.estimation = estimation_metrics(w, d);
    rep.valid = true;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Configuration) throw;
    rep.valid = false;
    rep.failure = e.what();
  }
  return rep;
}

SimReport run_experiment(const DgpSpec& spec, SimMethod method, Index reps, std::uint64_t base_seed,
                         const ExperimentConfig& cfg) {
  require(reps >= 1, ErrorCode::Precondition, "reps must be at least 1");
  validate(spec);
  SimReport report;
  report.spec = spec;
  report.method = method;
  report.base_seed = base_seed;
  report.per_rep.resize(static_cast<std::size_t>(reps));
  parallel_for(static_cast<std::size_t>(reps), resolve_threads(cfg.threads), [&](std::size_t r) {
    DgpSpec s = spec;
    s.seed = base_seed + r;
    report.per_rep[r] = run_replication(s, method, cfg);
  });
  fill_aggregates(report);
  return report;
}

SimReport normalize_mse(SimReport report, const SimReport& baseline) {
  const double denom = baseline.mse.mean;
  require(std::isfinite(denom) && denom > 0.0, ErrorCode::UndefinedRatio, "baseline mse is not positive");
  for (auto& rep : report.per_rep) rep.estimation.mse /= denom;
  report.mse.mean /= denom;
  report.mse.se /= denom;
  return report;
}

double strong_factor_demo(double c, Index n, Index t, std::uint64_t seed, const ScreenConfig& base) {
  require(c > 0.0 && std::isfinite(c), ErrorCode::Configuration, "c must be positive");
  require(n >= 1 && t >= 2, ErrorCode::Configuration, "N and T must be positive");
  auto rng = make_rng(seed, kDataStream);
  const Eigen::VectorXd a = Eigen::VectorXd::Constant(n, c / std::sqrt(static_cast<double>(n)));
  Eigen::MatrixXd r = gaussian(t, n, rng);
  r.array() += 0.1;
  Eigen::VectorXd x = gaussian(t, 1, rng).col(0);
  x.array() += 1.0;
  r += x * a.transpose();

  ScreenConfig cfg = base;
  cfg.alpha = 1.0;
  cfg.tau = std::sqrt(0.1);
  cfg.seed = seed;
  try {
    const ScreeningResult res = screen(ReturnPanel(std::move(r)), cfg);
    return static_cast<double>(res.selected.size()) / static_cast<double>(n);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::EmptyScreen) return 0.0;
    throw;
  }
}

void write_sim_csv(std::ostream& out, const SimReport& report) {
  out << "rep,seed,valid,nonzeros,fdp,pwr,mse,sr,failure\n";
  out << std::setprecision(17);
  for (std::size_t r = 0; r < report.per_rep.size(); ++r) {
    const auto& rep = report.per_rep[r];
    out << r << ',' << rep.seed << ',' << (rep.valid ? 1 : 0) << ',';
    if (rep.valid) {
      out << rep.screening.nonzeros << ',' << rep.screening.fdp << ',' << rep.screening.pwr << ','
          << rep.estimation.mse << ',' << rep.estimation.sr << ",\n";
    } else {
      std::string msg = rep.failure;
      std::replace(msg.begin(), msg.end(), '"', '\'');
      out << ",,,,,\"" << msg << "\"\n";
    }
  }
}

std::string sim_report_json(const SimReport& report) {
  using nlohmann::ordered_json;
  auto agg = [](const Aggregate& a) {
    return ordered_json{{"mean", std::isfinite(a.mean) ? ordered_json(a.mean) : ordered_json()},
                        {"se", std::isfinite(a.se) ? ordered_json(a.se) : ordered_json()}};
  };
  ordered_json j;
  j["dgp"] = report.spec.dgp;
  j["n"] = report.spec.n;
  j["t"] = report.spec.t;
  j["method"] = to_string(report.method);
  j["base_seed"] = report.base_seed;
  j["reps"] = report.per_rep.size();
  j["valid_reps"] = report.valid_reps;
  j["nonzeros"] = agg(report.nonzeros);
  j["fdr"] = agg(report.fdp);
  j["power"] = agg(report.pwr);
  j["mse"] = agg(report.mse);
  j["sr"] = agg(report.sr);
  ordered_json failures = ordered_json::array();
  for (const auto& rep : report.per_rep) {
    if (!rep.valid) failures.push_back({{"seed", rep.seed}, {"reason", rep.failure}});
  }
  j["failures"] = failures;
  return j.dump(2);
}

std::string format_sim_table(const std::vector<SimReport>& reports) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << std::left << std::setw(10) << "";
  for (const auto& r : reports) {
    std::ostringstream head;
    head << to_string(r.method) << " DGP" << r.spec.dgp << " N=" << r.spec.n << " T=" << r.spec.t;
    os << std::setw(34) << head.str();
  }
  os << '\n';
  auto row = [&](const char* name, auto get, bool with_se) {
    os << std::setw(10) << name;
    for (const auto& r : reports) {
      const Aggregate a = get(r);
      std::ostringstream cell;
      cell << std::fixed << std::setprecision(2) << a.mean;
      if (with_se) cell << " (" << a.se << ')';
      os << std::setw(34) << cell.str();
    }
    os << '\n';
  };
  row("Nonzeros", [](const SimReport& r) { return r.nonzeros; }, true);
  row("FDR", [](const SimReport& r) { return r.fdp; }, false);
  row("Power", [](const SimReport& r) { return r.pwr; }, false);
  row("MSE", [](const SimReport& r) { return r.mse; }, false);
  row("SR", [](const SimReport& r) { return r.sr; }, false);
  return os.str();
}

}  // namespace ps2
