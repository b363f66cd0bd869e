#include "ps2/cli.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ps2/backtest.hpp"
#include "ps2/csv.hpp"
#include "ps2/error.hpp"
#include "ps2/parallel.hpp"
#include "ps2/portfolio.hpp"
#include "ps2/screening.hpp"
#include "ps2/simulate.hpp"

namespace ps2 {

namespace {

using nlohmann::ordered_json;

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  require(f.good(), ErrorCode::Precondition, "cannot open '" + path + "' for writing");
  f << content;
  require(f.good(), ErrorCode::Precondition, "failed writing '" + path + "'");
}

ordered_json weights_json(const WeightVector& w, const Eigen::VectorXd& factor_block) {
  ordered_json entries = ordered_json::object();
  for (const auto& [i, v] : w.entries) entries[std::to_string(i)] = v;
  ordered_json factors = ordered_json::array();
  for (Index k = 0; k < factor_block.size(); ++k) factors.push_back(factor_block(k));
  return ordered_json{{"universe_size", w.universe_size},
                      {"target_return", w.target_return},
                      {"entries", entries},
                      {"factor_block", factors}};
}

struct SimulateArgs {
  int dgp = 1;
  Index n = 200;
  Index t = 2000;
  Index reps = 100;
  std::string method = "ps2";
  std::uint64_t seed = 0;
  std::string loading = "orthogonal";
  std::string normalize_by;
  std::string out;
};

struct ScreenArgs {
  std::string returns;
  double alpha = 0.05;
  double tau = 1e-4;
  Index folds = 10;
  Index grid_size = 100;
  double grid_ratio = 1e-3;
  std::uint64_t seed = 0;
  std::string method = "lasso";
  double rho_bar = 0.05;
  std::string out;
};

struct BacktestArgs {
  std::string prices;
  std::string factors;
  std::string rf;
  std::string constituents;
  Index window = 260;
  double cost_bps = 10.0;
  std::string method = "fps2";
  double annual_target = 0.10;
  Index ell = 0;
  double tau = 1e-10;
  Index folds = 10;
  std::uint64_t seed = 0;
  std::string split_date;
  std::string out;
};

struct DemoArgs {
  double c = 20.0;
  Index n = 500;
  Index t = 1500;
  std::uint64_t seed = 0;
  std::string out;
};

int run_simulate(const SimulateArgs& a, std::size_t threads, std::ostream& out) {
  DgpSpec spec;
  spec.dgp = a.dgp;
  spec.n = a.n;
  spec.t = a.t;
  spec.seed = a.seed;
  if (a.loading == "orthonormal") {
    spec.loading_scale = LoadingScale::orthonormal;
  } else {
    require(a.loading == "orthogonal", ErrorCode::Configuration, "loading must be orthogonal or orthonormal");
  }
  ExperimentConfig cfg;
  cfg.threads = threads;
  const SimMethod method = parse_sim_method(a.method);
  SimReport report = run_experiment(spec, method, a.reps, a.seed, cfg);
  std::vector<SimReport> table{report};
  if (!a.normalize_by.empty()) {
    const SimReport baseline = run_experiment(spec, parse_sim_method(a.normalize_by), a.reps, a.seed, cfg);
    report = normalize_mse(report, baseline);
    table = {report, normalize_mse(baseline, baseline)};
  }

  ordered_json j = ordered_json::parse(sim_report_json(report));
  j["config"] = {{"dgp", a.dgp},         {"n", a.n},           {"t", a.t},
                 {"reps", a.reps},       {"method", a.method}, {"seed", a.seed},
                 {"loading", a.loading}, {"normalize_by", a.normalize_by},
                 {"r_a", spec.r_a},      {"r_b", spec.r_b},    {"sigma_e2", spec.sigma_e2},
                 {"theta_x0", spec.theta_x0}, {"rho_bar", cfg.rho_bar},
                 {"alpha", cfg.screen.alpha}, {"tau", cfg.screen.tau}, {"folds", cfg.screen.folds}};
  if (a.out.empty()) {
    out << j.dump(2) << '\n';
    return 0;
  }
  write_file(a.out + ".json", j.dump(2) + "\n");
  std::ostringstream csv;
  write_sim_csv(csv, report);
  write_file(a.out + ".csv", csv.str());
  out << format_sim_table(table);
  return 0;
}

int run_screen(const ScreenArgs& a, std::size_t threads, std::ostream& out) {
  const ReturnPanel panel = read_return_panel(a.returns);
  ScreenConfig cfg;
  cfg.alpha = a.alpha;
  cfg.tau = a.tau;
  cfg.folds = a.folds;
  cfg.grid_size = a.grid_size;
  cfg.grid_ratio = a.grid_ratio;
  cfg.seed = a.seed;
  cfg.threads = threads;
  if (a.method == "adaptive") {
    cfg.method = ScreenMethod::adaptive;
  } else {
    require(a.method == "lasso", ErrorCode::Configuration, "screen method must be lasso or adaptive");
  }
  const ScreeningResult res = screen(panel, cfg);
  const WeightVector w = post_screen_ols_weights(panel, res.selected, a.rho_bar);

  ordered_json j;
  j["config"] = {{"returns", a.returns}, {"alpha", a.alpha},         {"tau", a.tau},
                 {"folds", a.folds},     {"grid_size", a.grid_size}, {"grid_ratio", a.grid_ratio},
                 {"seed", a.seed},       {"method", a.method},       {"rho_bar", a.rho_bar}};
  j["periods"] = panel.periods();
  j["assets"] = panel.assets();
  j["lambda_star"] = res.lambda_star;
  j["selected"] = res.selected;
  ordered_json names = ordered_json::array();
  for (Index i : res.selected) {
    names.push_back(panel.tickers().empty() ? std::to_string(i) : panel.tickers()[static_cast<std::size_t>(i)]);
  }
  j["selected_tickers"] = names;
  j["filtered_lambdas"] = res.filtered;
  j["weights"] = weights_json(w, Eigen::VectorXd());
  if (a.out.empty()) {
    out << j.dump(2) << '\n';
    return 0;
  }
  write_file(a.out + ".json", j.dump(2) + "\n");
  std::ostringstream csv;
  csv << std::setprecision(17) << "lambda,cv_error,filtered,max_fold_support,reason\n";
  for (const auto& e : res.cv) {
    csv << e.lambda << ',';
    if (!e.filtered) csv << e.error;
    csv << ',' << (e.filtered ? 1 : 0) << ',' << e.max_fold_support << ',' << e.reason << '\n';
  }
  write_file(a.out + ".csv", csv.str());
  out << "selected " << res.selected.size() << " of " << panel.assets() << " assets at lambda "
      << res.lambda_star << '\n';
  return 0;
}

int run_backtest(const BacktestArgs& a, std::size_t threads, std::ostream& out) {
  const CleanedPanel cleaned = clean_panel(read_price_panel(a.prices));
  ReturnTable returns = cleaned.returns;
  const auto rates = read_rate_series(a.rf);
  const LabeledTable ft = read_labeled_table(a.factors);
  std::map<std::string, Index> factor_row;
  for (std::size_t i = 0; i < ft.row_labels.size(); ++i) factor_row[ft.row_labels[i]] = static_cast<Index>(i);

  const Index t = returns.values.rows();
  Eigen::VectorXd rf(t);
  Eigen::MatrixXd x(t, ft.values.cols());
  for (Index s = 0; s < t; ++s) {
    const std::string& date = returns.dates[static_cast<std::size_t>(s)];
    const auto r = rates.find(date);
    require(r != rates.end(), ErrorCode::Parse, "risk-free rate missing for " + date);
    const auto f = factor_row.find(date);
    require(f != factor_row.end(), ErrorCode::Parse, "factor returns missing for " + date);
    rf(s) = r->second;
    x.row(s) = ft.values.row(f->second);
    require(x.row(s).allFinite(), ErrorCode::Parse, "factor returns missing for " + date);
  }
  returns.values.colwise() -= rf;
  const FactorPanel factors(std::move(x), ft.col_labels);
  const UniverseCalendar calendar = a.constituents.empty() ? UniverseCalendar() : read_constituents(a.constituents);

  BacktestConfig cfg;
  cfg.window = a.window;
  cfg.tau_c = a.cost_bps / 1e4;
  cfg.method = parse_backtest_method(a.method);
  cfg.rho_bar = rho_bar_from_annual(a.annual_target);
  cfg.screen.alpha = cfg.rho_bar;
  cfg.screen.tau = a.tau;
  cfg.screen.folds = a.folds;
  cfg.screen.seed = a.seed;
  if (a.ell > 0) {
    cfg.ell_rule = EllRule::fixed;
    cfg.ell = a.ell;
  }
  cfg.threads = threads;
  if (!a.split_date.empty()) cfg.split_date = a.split_date;
  const BacktestReport rep = rolling_backtest(returns, factors, rf, calendar, cfg);

  ordered_json j;
  j["config"] = {{"prices", a.prices},   {"factors", a.factors},         {"rf", a.rf},
                 {"constituents", a.constituents}, {"window", a.window}, {"cost_bps", a.cost_bps},
                 {"tau_c", cfg.tau_c},   {"method", a.method},           {"annual_target", a.annual_target},
                 {"rho_bar", cfg.rho_bar}, {"ell", a.ell},               {"tau", a.tau},
                 {"folds", a.folds},     {"seed", a.seed},               {"split_date", a.split_date}};
  j["periods"] = rep.eval_dates.size();
  j["gross_sr"] = rep.performance.gross_sr;
  j["net_sr"] = rep.performance.net_sr;
  j["turnover"] = rep.performance.mean_turnover;
  ordered_json sub = ordered_json::array();
  for (const auto& s : rep.subperiods) {
    sub.push_back({{"label", s.label}, {"periods", s.periods}, {"gross_sr", s.gross_sr},
                   {"net_sr", s.net_sr}, {"turnover", s.turnover}});
  }
  j["subperiods"] = sub;
  ordered_json excluded = ordered_json::array();
  for (const auto& e : cleaned.report.excluded) {
    excluded.push_back({{"ticker", e.ticker}, {"rule", e.rule}, {"detail", e.detail}});
  }
  j["cleaning"] = {{"tickers_kept", cleaned.returns.tickers.size()},
                   {"stale_cells", cleaned.report.stale_cells},
                   {"excluded", excluded}};
  ordered_json formations = ordered_json::array();
  for (std::size_t f = 0; f < rep.formations.size(); ++f) {
    const auto& d = rep.formations[f];
    ordered_json w = ordered_json::object();
    for (const auto& [i, v] : rep.weights[f]) w[rep.columns[static_cast<std::size_t>(i)]] = v;
    formations.push_back({{"date", d.date}, {"universe", d.universe}, {"selected", d.selected},
                          {"note", d.note}, {"weights", w}});
  }
  j["formations"] = formations;
  j["warnings"] = rep.warnings;

  if (a.out.empty()) {
    out << j.dump(2) << '\n';
    return 0;
  }
  write_file(a.out + ".json", j.dump(2) + "\n");
  std::ostringstream csv;
  write_backtest_csv(csv, rep);
  write_file(a.out + ".csv", csv.str());
  out << std::fixed << std::setprecision(4) << to_string(cfg.method) << ": gross SR " << rep.performance.gross_sr
      << ", net SR " << rep.performance.net_sr << ", turnover " << rep.performance.mean_turnover << " over "
      << rep.eval_dates.size() << " periods\n";
  return 0;
}

int run_demo(const DemoArgs& a, std::size_t threads, std::ostream& out) {
  ScreenConfig base;
  base.threads = threads;
  const double fraction = strong_factor_demo(a.c, a.n, a.t, a.seed, base);
  ordered_json j;
  j["config"] = {{"c", a.c}, {"n", a.n}, {"t", a.t}, {"seed", a.seed}};
  j["selected_fraction"] = fraction;
  if (!a.out.empty()) write_file(a.out + ".json", j.dump(2) + "\n");
  out << "selected fraction " << fraction << '\n';
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Post-screening portfolio selection: simulation, screening and backtests"};
  app.name("psps");
  app.set_config("--config", "", "Key-value config file ([section] per subcommand); flags win");
  std::size_t threads = 0;
  app.add_option("--threads", threads, "Worker cap (0: PSPS_THREADS, else all cores)");
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Monte Carlo experiment on DGP1-DGP4");
  sim_cmd->add_option("--dgp", sim.dgp, "Data-generating process")->check(CLI::Range(1, 4));
  sim_cmd->add_option("--n", sim.n, "Number of assets")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--t", sim.t, "Number of periods")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--reps", sim.reps, "Replications")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--method", sim.method, "ps2|fps2|ps2_on_factored_data|maxser|oracle_fps2");
  sim_cmd->add_option("--seed", sim.seed, "Base seed; replication r uses seed + r");
  sim_cmd->add_option("--loading", sim.loading, "orthogonal|orthonormal loading columns");
  sim_cmd->add_option("--normalize-by", sim.normalize_by, "Method whose mean MSE scales the report");
  sim_cmd->add_option("--out", sim.out, "Output prefix for .json and .csv");

  ScreenArgs scr;
  auto* scr_cmd = app.add_subcommand("screen", "Screen a return panel CSV");
  scr_cmd->add_option("--returns", scr.returns, "Return panel CSV (date column plus tickers)")->required();
  scr_cmd->add_option("--alpha", scr.alpha, "Level of the constant response");
  scr_cmd->add_option("--tau", scr.tau, "Response perturbation sd")->check(CLI::NonNegativeNumber);
  scr_cmd->add_option("--folds", scr.folds, "Cross-validation folds")->check(CLI::Range(2, 1000000));
  scr_cmd->add_option("--grid-size", scr.grid_size, "Lambda grid points")->check(CLI::PositiveNumber);
  scr_cmd->add_option("--grid-ratio", scr.grid_ratio, "Smallest over largest lambda");
  scr_cmd->add_option("--seed", scr.seed, "Seed for the response perturbation and folds");
  scr_cmd->add_option("--method", scr.method, "lasso|adaptive");
  scr_cmd->add_option("--rho-bar", scr.rho_bar, "Target return for the post-screening weights");
  scr_cmd->add_option("--out", scr.out, "Output prefix for .json and .csv");

  BacktestArgs bt;
  auto* bt_cmd = app.add_subcommand("backtest", "Rolling out-of-sample backtest");
  bt_cmd->add_option("--prices", bt.prices, "Adjusted close CSV")->required();
  bt_cmd->add_option("--factors", bt.factors, "Factor excess return CSV")->required();
  bt_cmd->add_option("--rf", bt.rf, "Risk-free rate CSV (date, rate)")->required();
  bt_cmd->add_option("--constituents", bt.constituents, "Constituent list CSV (date, tickers)");
  bt_cmd->add_option("--window", bt.window, "Screening window J")->check(CLI::PositiveNumber);
  bt_cmd->add_option("--cost-bps", bt.cost_bps, "Proportional cost in basis points")->check(CLI::NonNegativeNumber);
  bt_cmd->add_option("--method", bt.method, "fps2|ps2|ew|factor_only|maxser_f");
  bt_cmd->add_option("--annual-target", bt.annual_target, "Annual target return (52 periods)");
  bt_cmd->add_option("--ell", bt.ell, "Fixed estimation window (0: 50 + |S|)")->check(CLI::NonNegativeNumber);
  bt_cmd->add_option("--tau", bt.tau, "Response perturbation sd")->check(CLI::NonNegativeNumber);
  bt_cmd->add_option("--folds", bt.folds, "Cross-validation folds")->check(CLI::Range(2, 1000000));
  bt_cmd->add_option("--seed", bt.seed, "Seed for screening and sub-pools");
  bt_cmd->add_option("--split-date", bt.split_date, "First date of the second subperiod");
  bt_cmd->add_option("--out", bt.out, "Output prefix for .json and .csv");

  DemoArgs demo;
  auto* demo_cmd = app.add_subcommand("demo", "Illustrations");
  demo_cmd->require_subcommand(1);
  auto* sf_cmd = demo_cmd->add_subcommand("strong-factor", "Lasso power under one strong factor");
  sf_cmd->add_option("--c", demo.c, "Factor strength")->check(CLI::PositiveNumber);
  sf_cmd->add_option("--n", demo.n, "Number of assets")->check(CLI::PositiveNumber);
  sf_cmd->add_option("--t", demo.t, "Number of periods")->check(CLI::PositiveNumber);
  sf_cmd->add_option("--seed", demo.seed, "Seed");
  sf_cmd->add_option("--out", demo.out, "Output prefix for .json");

  if (args.empty()) {
    err << app.help();
    return 1;
  }
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (sim_cmd->parsed()) return run_simulate(sim, threads, out);
    if (scr_cmd->parsed()) return run_screen(scr, threads, out);
    if (bt_cmd->parsed()) return run_backtest(bt, threads, out);
    if (sf_cmd->parsed()) return run_demo(demo, threads, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return is_numerical(e.code()) ? 3 : 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  err << app.help();
  return 1;
}

}  // namespace ps2
