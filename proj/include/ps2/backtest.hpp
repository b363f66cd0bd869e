#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ps2/csv.hpp"
#include "ps2/defactor.hpp"
#include "ps2/moments.hpp"
#include "ps2/portfolio.hpp"
#include "ps2/screening.hpp"

namespace ps2 {

/// Adjusted closes, dates by tickers; missing cells are NaN.
struct PricePanel {
  std::vector<std::string> dates;
  std::vector<std::string> tickers;
  Eigen::MatrixXd prices;
};

void validate(const PricePanel& panel);
PricePanel read_price_panel(const std::string& path);

struct CleaningRules {
  Index stale_len = 3;         // equal prices on this many consecutive dates are stale
  Index gap_len = 5;           // internal missing-or-zero run that excludes a ticker
  double max_bad_share = 0.10; // missing-or-zero share of the active span
  Index min_periods = 104;     // shortest admissible active span
};

struct Exclusion {
  std::string ticker;
  std::string rule;
  std::string detail;
};

struct CleaningReport {
  std::vector<Exclusion> excluded;
  Index stale_cells = 0;  // return cells masked as stale
};

/// Log returns on dates[1..]; missing cells stay NaN.
struct ReturnTable {
  std::vector<std::string> dates;
  std::vector<std::string> tickers;
  Eigen::MatrixXd values;
};

struct CleanedPanel {
  ReturnTable returns;
  CleaningReport report;
};

CleanedPanel clean_panel(const PricePanel& prices, const CleaningRules& rules = {});

/// Historical constituents: each entry holds from its date until the next entry.
class UniverseCalendar {
 public:
  UniverseCalendar() = default;
  explicit UniverseCalendar(std::map<std::string, std::set<std::string>> entries);

  bool empty() const noexcept { return entries_.empty(); }
  /// Members from the last entry dated on or before `date`; empty before the first entry.
  const std::set<std::string>& members(const std::string& date) const;
  const std::map<std::string, std::set<std::string>>& entries() const noexcept { return entries_; }

 private:
  std::map<std::string, std::set<std::string>> entries_;
};

/// CSV with a date column and one comma-separated ticker list per row.
UniverseCalendar read_constituents(const std::string& path);

/// (date, rate) CSV keyed by date.
std::map<std::string, double> read_rate_series(const std::string& path);

enum class BacktestMethod { fps2, ps2, ew, factor_only, maxser_f };
const char* to_string(BacktestMethod method);
BacktestMethod parse_backtest_method(const std::string& name);

enum class EllRule { fixed, fifty_plus_shat };

struct BacktestConfig {
  Index window = 260;                     // J
  EllRule ell_rule = EllRule::fifty_plus_shat;
  Index ell = 100;                        // used by EllRule::fixed
  double rho_bar = 0.0018346;             // per period
  double tau_c = 0.001;
  BacktestMethod method = BacktestMethod::fps2;
  ScreenConfig screen = default_screen();
  Index maxser_subpool = 50;
  Index maxser_draws = 1000;
  std::size_t threads = 1;                // per-date estimation workers
  std::optional<std::string> split_date;  // subperiod boundary (first date of the second part)

  static ScreenConfig default_screen();
};

void validate(const BacktestConfig& cfg);

/// (1 + annual)^{1/periods} - 1.
double rho_bar_from_annual(double annual, double periods_per_year = 52.0);

struct Performance {
  std::vector<double> gross;
  std::vector<double> net;
  std::vector<double> turnover;  // per period sum of |w_t - w+_{t-1}|
  double gross_sr = 0.0;
  double net_sr = 0.0;
  double mean_turnover = 0.0;
};

/// `weights` holds P + 1 vectors (formation dates J..T), `returns` P rows of the
/// augmented excess returns realized after each of the first P weights, `rf` P rates.
/// Moments use divisor P.
Performance evaluate_performance(const std::vector<Eigen::VectorXd>& weights,
                                 const Eigen::MatrixXd& returns, const Eigen::VectorXd& rf,
                                 double tau_c);

/// Mean over standard deviation with divisor n.
double empirical_sharpe(const std::vector<double>& series);

struct DateRecord {
  std::string date;           // formation date
  Index universe = 0;
  Index selected = 0;
  std::string note;           // fallback or warning, empty when none
};

struct SubperiodStats {
  std::string label;
  Index periods = 0;
  double gross_sr = 0.0;
  double net_sr = 0.0;
  double turnover = 0.0;
};

struct BacktestReport {
  BacktestMethod method = BacktestMethod::fps2;
  std::vector<std::string> eval_dates;             // realization dates
  std::vector<DateRecord> formations;              // P + 1 entries
  std::vector<std::string> columns;                // tickers then factor labels
  std::vector<std::map<Index, double>> weights;    // sparse, indices into `columns`
  Performance performance;
  std::vector<SubperiodStats> subperiods;
  std::vector<std::string> warnings;
};

/// Rolling one-step-ahead evaluation. `returns` are excess returns with NaN for
/// missing cells; `factors` and `rf` share its dates.
BacktestReport rolling_backtest(const ReturnTable& returns, const FactorPanel& factors,
                                const Eigen::VectorXd& rf, const UniverseCalendar& calendar,
                                const BacktestConfig& cfg);

void write_backtest_csv(std::ostream& out, const BacktestReport& report);

}  // namespace ps2
