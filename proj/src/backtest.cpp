#include "ps2/backtest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "ps2/error.hpp"
#include "ps2/parallel.hpp"

namespace ps2 {

namespace {

bool bad_cell(double v) { return std::isnan(v) || v == 0.0; }

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

struct Estimate {
  Eigen::VectorXd weights;  // over all tickers then factors
  Index universe = 0;
  Index selected = 0;
  std::string note;
};

Eigen::VectorXd factor_only_block(const Eigen::MatrixXd& x, double rho_bar) {
  IndexList all(static_cast<std::size_t>(x.cols()));
  std::iota(all.begin(), all.end(), Index{0});
  return plugin_weights(ReturnPanel(x), all, rho_bar).dense();
}

class Estimator {
 public:
  Estimator(const ReturnTable& returns, const FactorPanel& factors, const UniverseCalendar& calendar,
            const BacktestConfig& cfg)
      : returns_(returns), factors_(factors), calendar_(calendar), cfg_(cfg) {}

  // Weights formed with the window of rows [end - J, end).
  Estimate run(Index end) const {
    const Index j = cfg_.window;
    const Index start = end - j;
    const Index n_all = returns_.values.cols();
    const Index k = factors_.factors();
    Estimate est;
    est.weights = Eigen::VectorXd::Zero(n_all + k);

    const IndexList universe = universe_at(start, end);
    est.universe = static_cast<Index>(universe.size());
    Eigen::MatrixXd r(j, est.universe);
    for (std::size_t a = 0; a < universe.size(); ++a) {
      r.col(static_cast<Index>(a)) = returns_.values.col(universe[a]).segment(start, j);
    }
    const Eigen::MatrixXd x = factors_.values().middleRows(start, j);

    auto place_assets = [&](const WeightVector& w) {
      for (const auto& [i, v] : w.entries) est.weights(universe[static_cast<std::size_t>(i)]) = v;
    };
    auto factor_only = [&] { est.weights.tail(k) = factor_only_block(x, cfg_.rho_bar); };
    auto equal_weight = [&] {
      if (universe.empty()) {
        est.note = "empty universe; holding cash";
        return;
      }
      for (Index i : universe) est.weights(i) = 1.0 / static_cast<double>(universe.size());
    };
    auto ell_for = [&](Index s) {
      Index ell = cfg_.ell_rule == EllRule::fixed ? cfg_.ell : default_ell(s);
      if (ell > j) {
        est.note = "ell clamped to J";
        ell = j;
      }
      return ell;
    };

    switch (cfg_.method) {
      case BacktestMethod::ew:
        equal_weight();
        break;
      case BacktestMethod::factor_only:
        factor_only();
        break;
      case BacktestMethod::fps2:
        try {
          require(!universe.empty(), ErrorCode::EmptyScreen, "empty universe");
          const ReturnPanel panel(r);
          const DefactorResult u = defactor(panel, FactorPanel(x));
          const IndexList s = screen(u.residuals, cfg_.screen).selected;
          est.selected = static_cast<Index>(s.size());
          const AugmentedWeights w = fps2_weights(panel, x, s, cfg_.rho_bar, ell_for(est.selected));
          place_assets(w.asset_block);
          est.weights.tail(k) = w.factor_block;
        } catch (const Error& e) {
          if (!is_numerical(e.code())) throw;
          est.weights.setZero();
          est.selected = 0;
          est.note = std::string("fallback to factor_only: ") + e.what();
          factor_only();
        }
        break;
      case BacktestMethod::ps2:
        try {
          require(!universe.empty(), ErrorCode::EmptyScreen, "empty universe");
          const ReturnPanel panel(r);
          const IndexList s = screen(panel, cfg_.screen).selected;
          est.selected = static_cast<Index>(s.size());
          const AugmentedWeights w =
              fps2_weights(panel, Eigen::MatrixXd(j, 0), s, cfg_.rho_bar, ell_for(est.selected));
          place_assets(w.asset_block);
        } catch (const Error& e) {
          if (!is_numerical(e.code())) throw;
          est.weights.setZero();
          est.selected = 0;
          est.note = std::string("fallback to ew: ") + e.what();
          equal_weight();
        }
        break;
      case BacktestMethod::maxser_f:
        try {
          require(!universe.empty(), ErrorCode::EmptyScreen, "empty universe");
          const ReturnPanel panel(r);
          IndexList pool(universe.size());
          std::iota(pool.begin(), pool.end(), Index{0});
          if (needs_subpool(est.universe + k, j)) {
            SubpoolConfig sp;
            sp.size = std::min(cfg_.maxser_subpool, est.universe);
            sp.draws = cfg_.maxser_draws;
            sp.seed = cfg_.screen.seed;
            pool = select_subpool(panel, sp);
          }
          const auto p = static_cast<Index>(pool.size());
          Eigen::MatrixXd aug(j, p + k);
          for (Index a = 0; a < p; ++a) aug.col(a) = r.col(pool[static_cast<std::size_t>(a)]);
          aug.rightCols(k) = x;
          MaxserConfig mc;
          mc.seed = cfg_.screen.seed;
          mc.folds = cfg_.screen.folds;
          mc.subpool.reset();
          const MaxserFit fit = maxser_fit(ReturnPanel(aug), cfg_.rho_bar, mc);
          const Eigen::VectorXd w = fit.weights.dense();
          for (Index a = 0; a < p; ++a) {
            est.weights(universe[static_cast<std::size_t>(pool[static_cast<std::size_t>(a)])]) = w(a);
          }
          est.weights.tail(k) = w.tail(k);
          est.selected = static_cast<Index>((w.head(p).array() != 0.0).count());
        } catch (const Error& e) {
          if (!is_numerical(e.code())) throw;
          est.weights.setZero();
          est.selected = 0;
          est.note = std::string("fallback to factor_only: ") + e.what();
          factor_only();
        }
        break;
    }
    return est;
  }

 private:
  IndexList universe_at(Index start, Index end) const {
    const std::string& date = returns_.dates[static_cast<std::size_t>(end - 1)];
    const std::set<std::string>* members = calendar_.empty() ? nullptr : &calendar_.members(date);
    IndexList out;
    for (Index i = 0; i < returns_.values.cols(); ++i) {
      if (members != nullptr && members->count(returns_.tickers[static_cast<std::size_t>(i)]) == 0) continue;
      if (returns_.values.col(i).segment(start, end - start).array().isNaN().any()) continue;
      out.push_back(i);
    }
    return out;
  }

  const ReturnTable& returns_;
  const FactorPanel& factors_;
  const UniverseCalendar& calendar_;
  const BacktestConfig& cfg_;
};

SubperiodStats subperiod(const std::string& label, const Performance& perf, std::size_t from, std::size_t to) {
  SubperiodStats s;
  s.label = label;
  s.periods = static_cast<Index>(to - from);
  const std::vector<double> g(perf.gross.begin() + static_cast<std::ptrdiff_t>(from),
                              perf.gross.begin() + static_cast<std::ptrdiff_t>(to));
  const std::vector<double> n(perf.net.begin() + static_cast<std::ptrdiff_t>(from),
                              perf.net.begin() + static_cast<std::ptrdiff_t>(to));
  s.gross_sr = empirical_sharpe(g);
  s.net_sr = empirical_sharpe(n);
  s.turnover = std::accumulate(perf.turnover.begin() + static_cast<std::ptrdiff_t>(from),
                               perf.turnover.begin() + static_cast<std::ptrdiff_t>(to), 0.0) /
               static_cast<double>(to - from);
  return s;
}

}  // namespace

void validate(const PricePanel& panel) {
  require(panel.dates.size() >= 2, ErrorCode::InsufficientData, "price panel needs at least two dates");
  require(static_cast<Index>(panel.dates.size()) == panel.prices.rows() &&
              static_cast<Index>(panel.tickers.size()) == panel.prices.cols(),
          ErrorCode::Precondition, "price labels do not match the price matrix");
  for (std::size_t i = 1; i < panel.dates.size(); ++i) {
    require(panel.dates[i - 1] < panel.dates[i], ErrorCode::Precondition,
            "price dates must be strictly increasing");
  }
}

PricePanel read_price_panel(const std::string& path) {
  LabeledTable t = read_labeled_table(path);
  PricePanel p{std::move(t.row_labels), std::move(t.col_labels), std::move(t.values)};
  validate(p);
  return p;
}

CleanedPanel clean_panel(const PricePanel& prices, const CleaningRules& rules) {
  validate(prices);
  require(rules.stale_len >= 2 && rules.gap_len >= 1 && rules.min_periods >= 1 &&
              rules.max_bad_share >= 0.0 && rules.max_bad_share <= 1.0,
          ErrorCode::Configuration, "invalid cleaning thresholds");
  const Index d = prices.prices.rows();
  const Index n = prices.prices.cols();
  const Index t = d - 1;
  CleanedPanel out;
  std::vector<Index> keep;

  for (Index i = 0; i < n; ++i) {
    const std::string& ticker = prices.tickers[static_cast<std::size_t>(i)];
    const auto p = prices.prices.col(i);
    Eigen::VectorXd r(t);
    for (Index s = 0; s < t; ++s) {
      const double a = p(s);
      const double b = p(s + 1);
      r(s) = (std::isfinite(a) && std::isfinite(b) && a > 0.0 && b > 0.0)
                 ? std::log(b / a)
                 : std::numeric_limits<double>::quiet_NaN();
    }
    if (r.array().isNaN().all()) {
      out.report.excluded.push_back({ticker, "no-valid-observations", "no valid return"});
      continue;
    }

    // Stale spells: a run of equal prices over stale_len or more dates masks the returns inside it.
    Index a = 0;
    while (a < d) {
      if (!std::isfinite(p(a))) {
        ++a;
        continue;
      }
      Index b = a;
      while (b + 1 < d && std::isfinite(p(b + 1)) && p(b + 1) == p(a)) ++b;
      if (b - a + 1 >= rules.stale_len) {
        for (Index s = a; s < b; ++s) {
          if (!std::isnan(r(s))) ++out.report.stale_cells;
          r(s) = std::numeric_limits<double>::quiet_NaN();
        }
      }
      a = b + 1;
    }
    if (r.array().isNaN().all()) {
      out.report.excluded.push_back({ticker, "no-valid-observations", "only stale prices"});
      continue;
    }

    Index first = 0;
    while (std::isnan(r(first))) ++first;
    Index last = t - 1;
    while (std::isnan(r(last))) --last;
    const Index span = last - first + 1;

    Index run = 0, longest = 0, bad = 0;
    for (Index s = first; s <= last; ++s) {
      if (bad_cell(r(s))) {
        ++bad;
        longest = std::max(longest, ++run);
      } else {
        run = 0;
      }
    }
    if (longest >= rules.gap_len) {
      out.report.excluded.push_back({ticker, "internal-gap", "missing or zero run of " + std::to_string(longest)});
      continue;
    }
    const double share = static_cast<double>(bad) / static_cast<double>(span);
    if (share > rules.max_bad_share) {
      std::ostringstream os;
      os << "missing or zero share " << share;
      out.report.excluded.push_back({ticker, "bad-share", os.str()});
      continue;
    }
    if (span < rules.min_periods) {
      out.report.excluded.push_back({ticker, "short-history", "active span " + std::to_string(span)});
      continue;
    }
    keep.push_back(i);
    out.returns.values.conservativeResize(t, static_cast<Index>(keep.size()));
    out.returns.values.col(static_cast<Index>(keep.size()) - 1) = r;
    out.returns.tickers.push_back(ticker);
  }
  require(!keep.empty(), ErrorCode::EmptyUniverse, "no ticker survived cleaning");
  out.returns.dates.assign(prices.dates.begin() + 1, prices.dates.end());
  return out;
}

UniverseCalendar::UniverseCalendar(std::map<std::string, std::set<std::string>> entries)
    : entries_(std::move(entries)) {}

const std::set<std::string>& UniverseCalendar::members(const std::string& date) const {
  static const std::set<std::string> none;
  auto it = entries_.upper_bound(date);
  if (it == entries_.begin()) return none;
  return std::prev(it)->second;
}

UniverseCalendar read_constituents(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::Parse, "cannot open constituents file '" + path + "'");
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::Parse, "empty constituents file");
  std::map<std::string, std::set<std::string>> entries;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    require(fields.size() >= 2, ErrorCode::Parse,
            "constituents line " + std::to_string(lineno) + " needs a date and tickers");
    std::set<std::string> members;
    for (std::size_t f = 1; f < fields.size(); ++f) {
      std::stringstream ss(fields[f]);
      std::string ticker;
      while (std::getline(ss, ticker, ',')) {
        ticker = trim(ticker);
        if (!ticker.empty()) members.insert(ticker);
      }
    }
    entries[trim(fields[0])] = std::move(members);
  }
  return UniverseCalendar(std::move(entries));
}

std::map<std::string, double> read_rate_series(const std::string& path) {
  const LabeledTable t = read_labeled_table(path);
  require(t.values.cols() >= 1, ErrorCode::Parse, "rate file needs a value column");
  std::map<std::string, double> out;
  for (std::size_t i = 0; i < t.row_labels.size(); ++i) {
    const double v = t.values(static_cast<Index>(i), 0);
    require(std::isfinite(v), ErrorCode::Parse, "missing rate on " + t.row_labels[i]);
    out[t.row_labels[i]] = v;
  }
  return out;
}

const char* to_string(BacktestMethod method) {
  switch (method) {
    case BacktestMethod::fps2: return "fps2";
    case BacktestMethod::ps2: return "ps2";
    case BacktestMethod::ew: return "ew";
    case BacktestMethod::factor_only: return "factor_only";
    case BacktestMethod::maxser_f: return "maxser_f";
  }
  return "unknown";
}

BacktestMethod parse_backtest_method(const std::string& name) {
  for (BacktestMethod m : {BacktestMethod::fps2, BacktestMethod::ps2, BacktestMethod::ew,
                           BacktestMethod::factor_only, BacktestMethod::maxser_f}) {
    if (name == to_string(m)) return m;
  }
  fail(ErrorCode::Configuration, "unknown backtest method '" + name + "'");
}

ScreenConfig BacktestConfig::default_screen() {
  ScreenConfig s;
  s.alpha = rho_bar_from_annual(0.10);
  s.tau = 1e-10;
  return s;
}

void validate(const BacktestConfig& cfg) {
  require(cfg.window >= 10, ErrorCode::Configuration, "window J must be at least 10");
  require(std::isfinite(cfg.rho_bar) && cfg.rho_bar != 0.0, ErrorCode::Configuration,
          "rho_bar must be finite and nonzero");
  require(cfg.tau_c >= 0.0 && std::isfinite(cfg.tau_c), ErrorCode::Configuration,
          "tau_c must be nonnegative");
  require(cfg.ell_rule != EllRule::fixed || cfg.ell >= 3, ErrorCode::Configuration,
          "fixed ell must be at least 3");
  require(cfg.maxser_subpool >= 1 && cfg.maxser_draws >= 1, ErrorCode::Configuration,
          "invalid MAXSER sub-pool settings");
  validate(cfg.screen);
}

double rho_bar_from_annual(double annual, double periods_per_year) {
  require(annual > -1.0 && periods_per_year > 0.0, ErrorCode::Configuration, "invalid annual target");
  return std::pow(1.0 + annual, 1.0 / periods_per_year) - 1.0;
}

double empirical_sharpe(const std::vector<double>& series) {
  require(series.size() >= 2, ErrorCode::InsufficientData, "need at least two evaluation periods");
  const double n = static_cast<double>(series.size());
  const double mean = std::accumulate(series.begin(), series.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : series) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / n);
  require(sd > 0.0, ErrorCode::UndefinedRatio, "return standard deviation is zero");
  return mean / sd;
}

Performance evaluate_performance(const std::vector<Eigen::VectorXd>& weights,
                                 const Eigen::MatrixXd& returns, const Eigen::VectorXd& rf,
                                 double tau_c) {
  const Index p = returns.rows();
  require(p >= 2, ErrorCode::InsufficientData, "need at least two evaluation periods");
  require(static_cast<Index>(weights.size()) == p + 1 && rf.size() == p, ErrorCode::Precondition,
          "need P + 1 weight vectors and P risk-free rates");
  require(tau_c >= 0.0, ErrorCode::Configuration, "tau_c must be nonnegative");
  for (const auto& w : weights) {
    require(w.size() == returns.cols(), ErrorCode::Precondition, "weight length mismatch");
  }
  Performance perf;
  for (Index t = 0; t < p; ++t) {
    const auto& w = weights[static_cast<std::size_t>(t)];
    const Eigen::VectorXd r = returns.row(t).transpose();
    const double g = w.dot(r);
    const Eigen::VectorXd drifted =
        w.cwiseProduct((r.array() + 1.0 + rf(t)).matrix()) / (1.0 + g + rf(t));
    const double to = (weights[static_cast<std::size_t>(t + 1)] - drifted).cwiseAbs().sum();
    perf.gross.push_back(g);
    perf.net.push_back(g - tau_c * (1.0 + g) * to);
    perf.turnover.push_back(to);
  }
  perf.gross_sr = empirical_sharpe(perf.gross);
  perf.net_sr = empirical_sharpe(perf.net);
  perf.mean_turnover = std::accumulate(perf.turnover.begin(), perf.turnover.end(), 0.0) / static_cast<double>(p);
  return perf;
}

BacktestReport rolling_backtest(const ReturnTable& returns, const FactorPanel& factors,
                                const Eigen::VectorXd& rf, const UniverseCalendar& calendar,
                                const BacktestConfig& cfg) {
  validate(cfg);
  const Index t = returns.values.rows();
  const Index n_all = returns.values.cols();
  const Index k = factors.factors();
  require(static_cast<Index>(returns.dates.size()) == t && static_cast<Index>(returns.tickers.size()) == n_all,
          ErrorCode::Precondition, "return labels do not match the return matrix");
  require(factors.periods() == t && rf.size() == t, ErrorCode::Precondition,
          "factors and risk-free rates must share the return dates");
  require(cfg.window < t, ErrorCode::Precondition, "window J must be smaller than T");
  require(rf.allFinite(), ErrorCode::Precondition, "risk-free rates must be finite");

  BacktestReport report;
  report.method = cfg.method;
  report.columns = returns.tickers;
  report.columns.insert(report.columns.end(), factors.labels().begin(), factors.labels().end());
  for (Index j = static_cast<Index>(factors.labels().size()); j < k; ++j) report.columns.push_back("factor" + std::to_string(j));
  if (!calendar.empty()) {
    std::set<std::string> known(returns.tickers.begin(), returns.tickers.end());
    std::set<std::string> unknown;
    for (const auto& [date, members] : calendar.entries()) {
      for (const auto& m : members) {
        if (known.count(m) == 0) unknown.insert(m);
      }
    }
    for (const auto& m : unknown) report.warnings.push_back("constituent " + m + " not in the return panel; dropped");
  }

  const Index p = t - cfg.window;
  std::vector<Estimate> estimates(static_cast<std::size_t>(p + 1));
  const Estimator estimator(returns, factors, calendar, cfg);
  parallel_for(estimates.size(), resolve_threads(cfg.threads),
               [&](std::size_t f) { estimates[f] = estimator.run(cfg.window + static_cast<Index>(f)); });

  std::vector<Eigen::VectorXd> weights;
  weights.reserve(estimates.size());
  for (std::size_t f = 0; f < estimates.size(); ++f) {
    auto& e = estimates[f];
    const Index end = cfg.window + static_cast<Index>(f);
    report.formations.push_back({returns.dates[static_cast<std::size_t>(end - 1)], e.universe, e.selected, e.note});
    std::map<Index, double> sparse;
    for (Index i = 0; i < e.weights.size(); ++i) {
      if (e.weights(i) != 0.0) sparse[i] = e.weights(i);
    }
    report.weights.push_back(std::move(sparse));
    weights.push_back(std::move(e.weights));
  }

  // Assets without a next-period return are liquidated at zero return.
  Eigen::MatrixXd realized(p, n_all + k);
  for (Index s = 0; s < p; ++s) {
    const Index row = cfg.window + s;
    Eigen::VectorXd r = returns.values.row(row).transpose();
    r = r.unaryExpr([](double v) { return std::isnan(v) ? 0.0 : v; });
    realized.row(s) << r.transpose(), factors.values().row(row);
    report.eval_dates.push_back(returns.dates[static_cast<std::size_t>(row)]);
  }
  report.performance = evaluate_performance(weights, realized, rf.segment(cfg.window, p), cfg.tau_c);

  report.subperiods.push_back(subperiod("full", report.performance, 0, static_cast<std::size_t>(p)));
  if (cfg.split_date) {
    const auto split = static_cast<std::size_t>(
        std::lower_bound(report.eval_dates.begin(), report.eval_dates.end(), *cfg.split_date) -
        report.eval_dates.begin());
    if (split >= 2 && static_cast<Index>(split) <= p - 2) {
      report.subperiods.push_back(subperiod("before " + *cfg.split_date, report.performance, 0, split));
      report.subperiods.push_back(subperiod("from " + *cfg.split_date, report.performance, split, static_cast<std::size_t>(p)));
    } else {
      report.warnings.push_back("split date leaves fewer than two periods on one side; subperiods skipped");
    }
  }
  return report;
}

void write_backtest_csv(std::ostream& out, const BacktestReport& report) {
  out << "date,gross,net,turnover\n" << std::setprecision(17);
  const auto& perf = report.performance;
  for (std::size_t i = 0; i < report.eval_dates.size(); ++i) {
    out << report.eval_dates[i] << ',' << perf.gross[i] << ',' << perf.net[i] << ',' << perf.turnover[i] << '\n';
  }
}

}  // namespace ps2
