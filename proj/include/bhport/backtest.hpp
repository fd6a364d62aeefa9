#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bhport/hierarchical.hpp"
#include "bhport/panel.hpp"
#include "bhport/portfolio.hpp"
#include "bhport/predictive.hpp"

namespace bhport {

enum class Strategy { kBh, kMovingAverage, kEqualWeight };

std::string strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);

struct Subperiod {
  std::string label;
  int start_month = 0;  // inclusive month indices
  int end_month = 0;
};

struct BacktestConfig {
  int window_months = 252;
  int refit_every_months = 12;
  int rebalance_every_months = 1;
  SamplerConfig sampler;
  PriorSetting prior = PriorSetting::kMild;
  double gamma = 5.0;
  PortfolioConstraints constraints;
  Strategy strategy = Strategy::kBh;
  bool standardize_macros = true;
  bool use_total_cov = true;      // interval/covariance choice for weights
  int ma_window_months = 0;       // 0 = trailing mean over the training span
  std::vector<double> gamma_sensitivity = {2.0, 5.0, 10.0};
  std::vector<Subperiod> subperiods;
  int jobs = 1;

  void validate() const;
};

struct StrategyMetrics {
  int n_months = 0;
  double avg_return = 0.0;
  double sharpe = 0.0;
  double final_value = 1.0;
  double avg_turnover = 0.0;
  std::optional<double> r2_oos_value;
  std::optional<double> c_oos;
  std::optional<double> il_oos;        // from cov_total intervals
  std::optional<double> il_oos_param;  // parameter-uncertainty-only variant
  std::optional<double> alpha;         // vs market proxy, monthly
  std::optional<double> alpha_t;
  std::optional<double> capm_beta;
  std::optional<double> capm_r2;
};

struct FitDiagnosticsSummary {
  int window_start_month = 0;
  int window_end_month = 0;
  double min_ess_ratio = 0.0;
  double mean_ess_ratio = 0.0;
};

struct BacktestReport {
  std::vector<int> months;          // OOS month ids, ascending
  std::vector<std::string> asset_ids;
  Eigen::MatrixXd weights;          // T_oos x N (weights held during month t)
  Eigen::VectorXd portfolio_returns;  // T_oos
  Eigen::VectorXd cumulative_value;   // running product of 1 + return
  Eigen::MatrixXd forecasts;        // T_oos x N, NaN when the strategy has none
  Eigen::MatrixXd benchmarks;       // T_oos x N moving-average benchmark
  std::vector<IntervalForecast> intervals;        // empty for equal-weight
  std::vector<IntervalForecast> intervals_param;  // cov_param-only widths
  StrategyMetrics overall;
  std::vector<std::pair<std::string, StrategyMetrics>> subperiod_metrics;
  std::vector<std::pair<double, StrategyMetrics>> gamma_metrics;
  std::vector<FitDiagnosticsSummary> fit_diagnostics;
  std::string market_proxy;  // "factors_file" or "equal_weight_universe"
  BacktestConfig config;
};

// Named factor columns aligned on dates (e.g. a market excess return).
struct FactorPanel {
  std::vector<int> dates;
  Eigen::MatrixXd values;  // T x F
  std::vector<std::string> names;
};

FactorPanel load_factors(const std::string& path);

struct SyntheticTruth {
  Eigen::MatrixXd b;      // N x K
  Eigen::MatrixXd sigma;  // N x N
};

struct SyntheticPanel {
  PanelDataset panel;
  SyntheticTruth truth;
  std::vector<Eigen::MatrixXd> raw_chars;  // pre-standardization draws, P x (T x N)
  std::uint64_t seed = 0;
  double ar_coef = 0.9;
};

// Simulates characteristics (iid uniform, then the loader's rank-uniform
// standardization), macros (AR(1), coefficient ar_coef, standardized over the
// generated sample), and returns r_{t+1} = f_t' b + e with error rows iid
// N(0, sigma). Returns row 0 is pure noise (it is never a regression
// response). The emitted CSVs round-trip losslessly through load_panel.
SyntheticPanel generate_synthetic_panel(const SyntheticTruth& truth, int n, int p,
                                        int q, int t_total, std::uint64_t seed,
                                        double ar_coef = 0.9,
                                        int start_month = 1995 * 12);

// Hierarchically drawn default truth for the generate command.
SyntheticTruth default_truth(int n, int p, int q, std::uint64_t seed);

std::string returns_csv(const PanelDataset& ds);
std::string chars_csv(const SyntheticPanel& sp);
std::string macros_csv(const PanelDataset& ds);
std::string truth_json(const SyntheticPanel& sp);

// Trailing mean of the history (the point-forecast benchmark).
double moving_average_forecast(const Eigen::VectorXd& history);

// mean(excess)/sd(excess) * sqrt(12), sample sd; rf may be empty (zero).
double sharpe_annualized(const Eigen::VectorXd& returns, const Eigen::VectorXd& rf);

struct FactorRegression {
  double alpha = 0.0;
  double alpha_se = 0.0;
  double alpha_t = 0.0;
  Eigen::VectorXd betas;
  Eigen::VectorXd beta_se;
  Eigen::VectorXd beta_t;
  double r2 = 0.0;
  int n_obs = 0;
  std::vector<std::string> names;
};

// OLS of y on an intercept plus factors; classical standard errors by
// default, Newey-West when hac_lags > 0.
FactorRegression factor_regression(const Eigen::VectorXd& y,
                                   const Eigen::MatrixXd& factors,
                                   const std::vector<std::string>& names,
                                   int hac_lags = 0);

BacktestReport run_backtest(const PanelDataset& ds, const BacktestConfig& cfg,
                            const std::optional<FactorPanel>& factors = {});

std::string report_json(const BacktestReport& report);
std::string weights_csv(const BacktestReport& report);
std::string cumulative_csv(const BacktestReport& report);
std::string forecasts_csv(const BacktestReport& report);

}  // namespace bhport
