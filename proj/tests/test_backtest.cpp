#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "oracles/oracle_data.hpp"
#include "ps2/backtest.hpp"
#include "ps2/error.hpp"
#include "synthetic_market.hpp"
#include "test_util.hpp"

using namespace ps2;
using testutil::to_matrix;
using testutil::to_vector;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<Eigen::VectorXd> toy_weights() {
  std::vector<Eigen::VectorXd> w;
  for (const auto& row : oracle::kBtW) w.push_back(to_vector(row));
  return w;
}

PricePanel single_ticker(const std::vector<double>& prices) {
  PricePanel p;
  p.dates = testutil::weekly_dates(prices.size());
  p.tickers = {"X", "Y"};
  p.prices.resize(static_cast<Index>(prices.size()), 2);
  for (std::size_t s = 0; s < prices.size(); ++s) {
    p.prices(static_cast<Index>(s), 0) = prices[s];
    p.prices(static_cast<Index>(s), 1) = 10.0 + 0.01 * static_cast<double>(s % 7) + 0.001 * static_cast<double>(s);
  }
  return p;
}

std::vector<double> rising(std::size_t count) {
  std::vector<double> p(count);
  for (std::size_t s = 0; s < count; ++s) p[s] = 20.0 * std::exp(0.001 * static_cast<double>(s) + 0.01 * std::sin(static_cast<double>(s)));
  return p;
}

std::string rule_for(const CleanedPanel& c, const std::string& ticker) {
  for (const auto& e : c.report.excluded) {
    if (e.ticker == ticker) return e.rule;
  }
  return "";
}

}  // namespace

TEST_CASE("performance matches the reference computation") {
  const Performance p = evaluate_performance(toy_weights(), to_matrix(oracle::kBtR), to_vector(oracle::kBtRf), 0.001);
  for (std::size_t t = 0; t < 3; ++t) {
    CHECK(p.gross[t] == doctest::Approx(oracle::kBtGross[t]).epsilon(1e-12));
    CHECK(p.net[t] == doctest::Approx(oracle::kBtNet[t]).epsilon(1e-12));
    CHECK(p.turnover[t] == doctest::Approx(oracle::kBtTurnover[t]).epsilon(1e-12));
  }
  CHECK(p.gross_sr == doctest::Approx(oracle::kBtGrossSr).epsilon(1e-12));
  CHECK(p.net_sr == doctest::Approx(oracle::kBtNetSr).epsilon(1e-12));
}

TEST_CASE("zero cost makes net equal gross") {
  const Performance p = evaluate_performance(toy_weights(), to_matrix(oracle::kBtR), to_vector(oracle::kBtRf), 0.0);
  for (std::size_t t = 0; t < 3; ++t) CHECK(p.net[t] == p.gross[t]);
}

TEST_CASE("constant buy-and-hold weights have turnover from drift only") {
  std::vector<Eigen::VectorXd> w(4, Eigen::Vector3d(0.5, 0.5, 0.0));
  Eigen::MatrixXd r(3, 3);
  r << 0.01, 0.01, 0.0, 0.02, 0.02, 0.0, -0.01, -0.01, 0.0;
  const Performance p = evaluate_performance(w, r, Eigen::VectorXd::Zero(3), 0.001);
  for (double to : p.turnover) CHECK(to == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("performance error paths") {
  CHECK_THROWS_AS(evaluate_performance(toy_weights(), to_matrix(oracle::kBtR).topRows(2), to_vector(oracle::kBtRf).head(2), 0.0), Error);
  try {
    empirical_sharpe({0.01, 0.01, 0.01});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UndefinedRatio);
  }
  CHECK(empirical_sharpe({0.0, 0.02}) == doctest::Approx(1.0));
}

TEST_CASE("annual target conversion") {
  CHECK(rho_bar_from_annual(0.1) == doctest::Approx(std::pow(1.1, 1.0 / 52.0) - 1.0));
  CHECK(rho_bar_from_annual(0.1) == doctest::Approx(BacktestConfig{}.rho_bar).epsilon(1e-4));
  CHECK(BacktestConfig::default_screen().tau == 1e-10);
}

TEST_CASE("cleaning keeps a clean history and computes log returns") {
  const PricePanel p = single_ticker(rising(200));
  const CleanedPanel c = clean_panel(p);
  REQUIRE(c.returns.tickers.size() == 2);
  CHECK(c.returns.dates.size() == 199);
  CHECK(c.returns.dates.front() == p.dates[1]);
  CHECK(c.returns.values(0, 0) == doctest::Approx(std::log(p.prices(1, 0) / p.prices(0, 0))));
  CHECK(c.report.excluded.empty());
}

TEST_CASE("cleaning rules") {
  SUBCASE("stale spell is masked") {
    auto prices = rising(200);
    prices[50] = prices[51] = prices[52] = prices[49];
    const CleanedPanel c = clean_panel(single_ticker(prices));
    CHECK(c.report.stale_cells == 3);
    CHECK(std::isnan(c.returns.values(49, 0)));
    CHECK(std::isnan(c.returns.values(51, 0)));
    CHECK_FALSE(std::isnan(c.returns.values(52, 0)));
  }
  SUBCASE("two equal prices are not stale") {
    auto prices = rising(200);
    prices[50] = prices[49];
    const CleanedPanel c = clean_panel(single_ticker(prices));
    CHECK(c.report.stale_cells == 0);
    CHECK(c.returns.values(49, 0) == 0.0);
  }
  SUBCASE("long internal gap excludes the ticker") {
    auto prices = rising(200);
    for (std::size_t s = 80; s < 85; ++s) prices[s] = kNaN;
    CHECK(rule_for(clean_panel(single_ticker(prices)), "X") == "internal-gap");
  }
  SUBCASE("many short gaps exceed the bad share") {
    auto prices = rising(200);
    for (std::size_t s = 10; s < 190; s += 8) prices[s] = kNaN;
    CHECK(rule_for(clean_panel(single_ticker(prices)), "X") == "bad-share");
  }
  SUBCASE("late listing shortens the history") {
    auto prices = rising(200);
    for (std::size_t s = 0; s < 120; ++s) prices[s] = kNaN;
    const CleanedPanel c = clean_panel(single_ticker(prices));
    CHECK(rule_for(c, "X") == "short-history");
    CHECK(c.returns.tickers == std::vector<std::string>{"Y"});
  }
  SUBCASE("leading and trailing gaps are outside the active span") {
    auto prices = rising(200);
    for (std::size_t s = 0; s < 20; ++s) prices[s] = kNaN;
    for (std::size_t s = 190; s < 200; ++s) prices[s] = kNaN;
    CHECK(rule_for(clean_panel(single_ticker(prices)), "X").empty());
  }
  SUBCASE("no valid observations") {
    std::vector<double> prices(200, kNaN);
    CHECK(rule_for(clean_panel(single_ticker(prices)), "X") == "no-valid-observations");
  }
}

TEST_CASE("cleaning that removes everything is an error") {
  PricePanel p = single_ticker(rising(50));
  try {
    clean_panel(p);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyUniverse);
  }
  p.dates[3] = p.dates[2];
  CHECK_THROWS_AS(clean_panel(p), Error);
}

TEST_CASE("universe calendar holds entries until the next date") {
  const UniverseCalendar cal({{"2001-01-05", {"A", "B"}}, {"2002-01-04", {"B", "C"}}});
  CHECK(cal.members("2000-12-29").empty());
  CHECK(cal.members("2001-01-05") == std::set<std::string>{"A", "B"});
  CHECK(cal.members("2001-12-28") == std::set<std::string>{"A", "B"});
  CHECK(cal.members("2003-01-03") == std::set<std::string>{"B", "C"});
}

TEST_CASE("constituent and rate files") {
  const std::string cpath = "bt_test_constituents.csv";
  const std::string rpath = "bt_test_rf.csv";
  {
    std::ofstream c(cpath);
    c << "date,tickers\n2001-01-05,\"A,B\"\n2002-01-04,B,C\n";
    std::ofstream r(rpath);
    r << "date,rf\n2001-01-05,0.0004\n2001-01-12,0.0005\n";
  }
  const UniverseCalendar cal = read_constituents(cpath);
  CHECK(cal.entries().size() == 2);
  CHECK(cal.members("2001-06-01") == std::set<std::string>{"A", "B"});
  CHECK(cal.members("2002-06-01") == std::set<std::string>{"B", "C"});
  const auto rf = read_rate_series(rpath);
  CHECK(rf.at("2001-01-12") == doctest::Approx(0.0005));
  std::remove(cpath.c_str());
  std::remove(rpath.c_str());
  CHECK_THROWS_AS(read_constituents("no_such_file.csv"), Error);
}

TEST_CASE("method names round trip") {
  for (auto m : {BacktestMethod::fps2, BacktestMethod::ps2, BacktestMethod::ew, BacktestMethod::factor_only,
                 BacktestMethod::maxser_f}) {
    CHECK(parse_backtest_method(to_string(m)) == m);
  }
  CHECK_THROWS_AS(parse_backtest_method("best"), Error);
}

namespace {

struct Prepared {
  ReturnTable returns;
  FactorPanel factors;
  Eigen::VectorXd rf;
};

Prepared prepare(Index n, Index t, std::uint64_t seed) {
  const auto m = testutil::make_market(n, t, 3, seed);
  CleanedPanel c = clean_panel(m.prices);
  for (Index s = 0; s < t; ++s) c.returns.values.row(s).array() -= m.rf(s);
  return {c.returns, FactorPanel(m.factors, m.factor_labels), m.rf};
}

}  // namespace

TEST_CASE("rolling backtest produces consistent reports for every method") {
  const Prepared d = prepare(30, 160, 5);
  for (auto method : {BacktestMethod::fps2, BacktestMethod::ps2, BacktestMethod::ew, BacktestMethod::factor_only}) {
    CAPTURE(to_string(method));
    BacktestConfig cfg;
    cfg.window = 104;
    cfg.method = method;
    cfg.split_date = d.returns.dates[130];
    const BacktestReport r = rolling_backtest(d.returns, d.factors, d.rf, {}, cfg);
    const std::size_t p = 160 - 104;
    CHECK(r.eval_dates.size() == p);
    CHECK(r.formations.size() == p + 1);
    CHECK(r.weights.size() == p + 1);
    CHECK(r.columns.size() == 33);
    CHECK(r.performance.gross.size() == p);
    CHECK(std::isfinite(r.performance.gross_sr));
    CHECK(std::isfinite(r.performance.net_sr));
    CHECK(r.performance.mean_turnover > 0.0);
    REQUIRE(r.subperiods.size() == 3);
    CHECK(r.subperiods[1].periods + r.subperiods[2].periods == static_cast<Index>(p));
    for (std::size_t s = 0; s < p; ++s) CHECK(r.performance.net[s] <= r.performance.gross[s] + 1e-15);
    if (method == BacktestMethod::factor_only) {
      for (const auto& w : r.weights) {
        for (const auto& [idx, v] : w) CHECK(idx >= 30);
      }
    }
    if (method == BacktestMethod::ew) {
      for (const auto& w : r.weights) {
        for (const auto& [idx, v] : w) CHECK(v == doctest::Approx(1.0 / 30.0));
      }
    }
  }
}

TEST_CASE("rolling backtest is thread independent and respects the universe") {
  const Prepared d = prepare(20, 140, 9);
  BacktestConfig cfg;
  cfg.window = 104;
  cfg.method = BacktestMethod::ew;
  std::set<std::string> members(d.returns.tickers.begin(), d.returns.tickers.begin() + 5);
  members.insert("ZZZZ");
  const UniverseCalendar cal({{"1999-01-01", members}});
  const BacktestReport a = rolling_backtest(d.returns, d.factors, d.rf, cal, cfg);
  for (const auto& w : a.weights) CHECK(w.size() == 5);
  REQUIRE(a.warnings.size() == 1);
  CHECK(a.warnings[0].find("ZZZZ") != std::string::npos);
  cfg.method = BacktestMethod::fps2;
  const BacktestReport s1 = rolling_backtest(d.returns, d.factors, d.rf, {}, cfg);
  cfg.threads = 3;
  const BacktestReport s3 = rolling_backtest(d.returns, d.factors, d.rf, {}, cfg);
  CHECK(s1.weights == s3.weights);
  CHECK(s1.performance.net == s3.performance.net);
}

TEST_CASE("backtest CSV lists each evaluation date") {
  const Prepared d = prepare(15, 120, 2);
  BacktestConfig cfg;
  cfg.window = 104;
  cfg.method = BacktestMethod::ew;
  const BacktestReport r = rolling_backtest(d.returns, d.factors, d.rf, {}, cfg);
  std::ostringstream os;
  write_backtest_csv(os, r);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "date,gross,net,turnover");
  std::size_t rows = 0;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == r.eval_dates.size());
}

TEST_CASE("backtest configuration errors") {
  const Prepared d = prepare(15, 120, 2);
  BacktestConfig cfg;
  cfg.window = 130;
  CHECK_THROWS_AS(rolling_backtest(d.returns, d.factors, d.rf, {}, cfg), Error);
  cfg.window = 5;
  CHECK_THROWS_AS(validate(cfg), Error);
  cfg = {};
  cfg.tau_c = -1.0;
  CHECK_THROWS_AS(validate(cfg), Error);
}
