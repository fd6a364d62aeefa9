#include "bhport/backtest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <sstream>
#include <thread>
#include <unordered_map>

#include <json.hpp>

#include "bhport/csv.hpp"
#include "bhport/errors.hpp"
#include "bhport/log.hpp"
#include "bhport/stats.hpp"

namespace bhport {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::uint64_t window_seed(std::uint64_t base, int group) {
  return base ^ (0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(group) + 1ULL));
}

}  // namespace

std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kBh: return "bh";
    case Strategy::kMovingAverage: return "moving_average";
    case Strategy::kEqualWeight: return "equal_weight";
  }
  throw ConfigError("strategy_name: unknown strategy");
}

Strategy strategy_from_name(const std::string& name) {
  if (name == "bh") return Strategy::kBh;
  if (name == "moving_average" || name == "ma") return Strategy::kMovingAverage;
  if (name == "equal_weight" || name == "ew") return Strategy::kEqualWeight;
  throw ConfigError("unknown strategy '" + name +
                    "' (expected bh, moving_average, or equal_weight)");
}

void BacktestConfig::validate() const {
  if (window_months < 24) {
    throw ConfigError("backtest: window_months must be >= 24, got " +
                      std::to_string(window_months));
  }
  if (refit_every_months < 1) {
    throw ConfigError("backtest: refit_every_months must be >= 1");
  }
  if (rebalance_every_months < 1) {
    throw ConfigError("backtest: rebalance_every_months must be >= 1");
  }
  if (refit_every_months % rebalance_every_months != 0) {
    throw ConfigError(
        "backtest: refit_every_months must be a multiple of "
        "rebalance_every_months so refits land on rebalance dates");
  }
  if (!(gamma > 0.0)) {
    throw ConfigError("backtest: gamma must be positive");
  }
  if (ma_window_months < 0 || ma_window_months == 1) {
    throw ConfigError("backtest: ma_window_months must be 0 (use the training "
                      "window) or >= 2");
  }
  if (ma_window_months > window_months) {
    throw ConfigError("backtest: ma_window_months cannot exceed window_months");
  }
  if (jobs < 1) throw ConfigError("backtest: jobs must be >= 1");
  if (sampler.n_total < 1 || sampler.n_burn < 0 ||
      sampler.n_burn >= sampler.n_total) {
    throw ConfigError("backtest: sampler needs 0 <= n_burn < n_total");
  }
  for (double g : gamma_sensitivity) {
    if (!(g > 0.0)) throw ConfigError("backtest: gamma_sensitivity entries must be positive");
  }
  for (const auto& sp : subperiods) {
    if (sp.start_month > sp.end_month) {
      throw ConfigError("backtest: subperiod '" + sp.label + "' has start after end");
    }
  }
}

FactorPanel load_factors(const std::string& path) {
  CsvTable tab = read_csv(path);
  if (tab.header.empty() || tab.header[0] != "date") {
    throw DataError(path + ": first factor column must be 'date'");
  }
  if (tab.header.size() < 2) {
    throw DataError(path + ": factor file needs at least one factor column");
  }
  FactorPanel fp;
  fp.names.assign(tab.header.begin() + 1, tab.header.end());
  const int f = static_cast<int>(fp.names.size());
  const int t = static_cast<int>(tab.rows.size());
  if (t == 0) throw DataError(path + ": factor file has no data rows");
  fp.values.resize(t, f);
  fp.dates.resize(t);
  for (int r = 0; r < t; ++r) {
    fp.dates[r] = parse_month(tab.rows[r][0], path, static_cast<std::size_t>(r) + 2);
    if (r > 0 && fp.dates[r] <= fp.dates[r - 1]) {
      throw DataError(path + ": dates must be strictly increasing (row " +
                      std::to_string(r + 2) + ")");
    }
    for (int c = 0; c < f; ++c) {
      fp.values(r, c) = parse_double_cell(tab.rows[r][c + 1], path,
                                          static_cast<std::size_t>(r) + 2,
                                          fp.names[c]);
    }
  }
  return fp;
}

double moving_average_forecast(const Eigen::VectorXd& history) {
  if (history.size() == 0) {
    throw ConfigError("moving_average_forecast: history is empty");
  }
  return history.mean();
}

double sharpe_annualized(const Eigen::VectorXd& returns, const Eigen::VectorXd& rf) {
  const int n = static_cast<int>(returns.size());
  if (n < 2) throw ConfigError("sharpe_annualized: need at least 2 observations");
  if (rf.size() != 0 && rf.size() != returns.size()) {
    throw ConfigError("sharpe_annualized: risk-free series length mismatch");
  }
  Eigen::VectorXd excess = rf.size() == 0 ? returns : (returns - rf).eval();
  const double m = excess.mean();
  const double ss = (excess.array() - m).square().sum();
  const double sd = std::sqrt(ss / (n - 1));
  if (!(sd > 0.0)) {
    throw MetricError("sharpe_annualized: return series has zero variance");
  }
  return m / sd * std::sqrt(12.0);
}

FactorRegression factor_regression(const Eigen::VectorXd& y,
                                   const Eigen::MatrixXd& factors,
                                   const std::vector<std::string>& names,
                                   int hac_lags) {
  const int t = static_cast<int>(y.size());
  const int f = static_cast<int>(factors.cols());
  if (factors.rows() != y.size()) {
    throw ConfigError("factor_regression: factor rows must match response length");
  }
  if (static_cast<int>(names.size()) != f) {
    throw ConfigError("factor_regression: one name per factor column required");
  }
  if (t < f + 3) {
    throw ConfigError("factor_regression: need at least " + std::to_string(f + 3) +
                      " observations for " + std::to_string(f) + " factors");
  }
  if (hac_lags < 0) throw ConfigError("factor_regression: hac_lags must be >= 0");

  Eigen::MatrixXd d(t, f + 1);
  d.col(0).setOnes();
  d.rightCols(f) = factors;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(d);
  if (qr.rank() < f + 1) {
    throw NumericalError("factor_regression: rank-deficient design matrix");
  }
  Eigen::VectorXd coef = qr.solve(y);
  Eigen::VectorXd resid = y - d * coef;
  const int dof = t - (f + 1);
  const double s2 = resid.squaredNorm() / dof;

  Eigen::MatrixXd dtd = d.transpose() * d;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(dtd);
  if (ldlt.info() != Eigen::Success) {
    throw NumericalError("factor_regression: normal equations not factorizable");
  }
  Eigen::MatrixXd dtd_inv =
      ldlt.solve(Eigen::MatrixXd::Identity(f + 1, f + 1));

  Eigen::MatrixXd cov;
  if (hac_lags == 0) {
    cov = s2 * dtd_inv;
  } else {
    // Newey-West: Bartlett-weighted autocovariances of the score d_t * e_t.
    Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(f + 1, f + 1);
    for (int i = 0; i < t; ++i) {
      Eigen::VectorXd g = d.row(i).transpose() * resid(i);
      meat += g * g.transpose();
    }
    const int lags = std::min(hac_lags, t - 1);
    for (int l = 1; l <= lags; ++l) {
      const double w = 1.0 - static_cast<double>(l) / (lags + 1);
      for (int i = l; i < t; ++i) {
        Eigen::VectorXd gi = d.row(i).transpose() * resid(i);
        Eigen::VectorXd gl = d.row(i - l).transpose() * resid(i - l);
        Eigen::MatrixXd cross = gi * gl.transpose();
        meat += w * (cross + cross.transpose());
      }
    }
    cov = dtd_inv * meat * dtd_inv;
  }

  FactorRegression out;
  out.names = names;
  out.n_obs = t;
  out.alpha = coef(0);
  out.betas = coef.tail(f);
  out.alpha_se = std::sqrt(std::max(cov(0, 0), 0.0));
  out.beta_se.resize(f);
  out.beta_t.resize(f);
  for (int j = 0; j < f; ++j) {
    out.beta_se(j) = std::sqrt(std::max(cov(j + 1, j + 1), 0.0));
    out.beta_t(j) = out.beta_se(j) > 0.0 ? out.betas(j) / out.beta_se(j) : kNan;
  }
  out.alpha_t = out.alpha_se > 0.0 ? out.alpha / out.alpha_se : kNan;
  const double tss = (y.array() - y.mean()).square().sum();
  if (!(tss > 0.0)) {
    throw MetricError("factor_regression: response has zero variance");
  }
  out.r2 = 1.0 - resid.squaredNorm() / tss;
  return out;
}

SyntheticTruth default_truth(int n, int p, int q, std::uint64_t seed) {
  const int k = 1 + p + q + p * q;
  RngStream rng(seed, 4);
  SyntheticTruth truth;
  Eigen::VectorXd bbar(k);
  bbar(0) = 0.005;
  for (int j = 1; j < k; ++j) bbar(j) = 0.01 * rng.normal();
  truth.b.resize(n, k);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < k; ++j) truth.b(i, j) = bbar(j) + 0.005 * rng.normal();
  }
  Eigen::VectorXd vol(n);
  for (int i = 0; i < n; ++i) vol(i) = rng.uniform(0.04, 0.08);
  truth.sigma.resize(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      truth.sigma(i, j) = vol(i) * vol(j) * (i == j ? 1.0 : 0.3);
    }
  }
  return truth;
}

SyntheticPanel generate_synthetic_panel(const SyntheticTruth& truth, int n, int p,
                                        int q, int t_total, std::uint64_t seed,
                                        double ar_coef, int start_month) {
  const int k = 1 + p + q + p * q;
  if (n < 2) throw ConfigError("generate: need at least 2 assets");
  if (p < 0 || q < 0) throw ConfigError("generate: p and q must be >= 0");
  if (t_total < 24) throw ConfigError("generate: need at least 24 months");
  if (!(std::abs(ar_coef) < 1.0)) {
    throw ConfigError("generate: ar_coef must lie in (-1, 1)");
  }
  if (truth.b.rows() != n || truth.b.cols() != k) {
    throw ConfigError("generate: truth.b must be " + std::to_string(n) + "x" +
                      std::to_string(k));
  }
  if (truth.sigma.rows() != n || truth.sigma.cols() != n) {
    throw ConfigError("generate: truth.sigma must be " + std::to_string(n) + "x" +
                      std::to_string(n));
  }

  SyntheticPanel sp;
  sp.seed = seed;
  sp.ar_coef = ar_coef;
  sp.truth = truth;
  PanelDataset& ds = sp.panel;

  ds.dates.resize(t_total);
  for (int t = 0; t < t_total; ++t) ds.dates[t] = start_month + t;

  const int width = static_cast<int>(std::to_string(n).size());
  char buf[32];
  for (int i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof(buf), "a%0*d", width, i + 1);
    ds.asset_ids.push_back(buf);
  }
  for (int j = 0; j < p; ++j) ds.char_ids.push_back("z" + std::to_string(j + 1));
  for (int j = 0; j < q; ++j) ds.macro_ids.push_back("m" + std::to_string(j + 1));

  // Characteristics: iid uniform raw values, standardized the same way the
  // loader standardizes (rank-uniform per cross section).
  RngStream rng_z(seed, 1);
  sp.raw_chars.assign(p, Eigen::MatrixXd(t_total, n));
  ds.chars.assign(p, Eigen::MatrixXd(t_total, n));
  std::vector<double> row(n);
  std::vector<bool> none(n, false);
  for (int j = 0; j < p; ++j) {
    for (int t = 0; t < t_total; ++t) {
      for (int i = 0; i < n; ++i) sp.raw_chars[j](t, i) = rng_z.uniform(-1.0, 1.0);
    }
    for (int t = 0; t < t_total; ++t) {
      for (int i = 0; i < n; ++i) row[i] = sp.raw_chars[j](t, i);
      std::vector<double> std_row = standardize_cross_section(row, none);
      for (int i = 0; i < n; ++i) ds.chars[j](t, i) = std_row[i];
    }
  }

  // Macros: stationary AR(1), standardized over the generated sample so the
  // recorded series is directly comparable to the coefficients that used it.
  RngStream rng_x(seed, 2);
  ds.macros.resize(t_total, q);
  const double stat_sd = 1.0 / std::sqrt(1.0 - ar_coef * ar_coef);
  for (int j = 0; j < q; ++j) {
    Eigen::VectorXd x(t_total);
    x(0) = stat_sd * rng_x.normal();
    for (int t = 1; t < t_total; ++t) x(t) = ar_coef * x(t - 1) + rng_x.normal();
    const double m = x.mean();
    const double sd = std::sqrt((x.array() - m).square().sum() / t_total);
    ds.macros.col(j) = (x.array() - m) / sd;
  }

  // Error rows iid N(0, sigma); returns row 0 is pure noise.
  RngStream rng_e(seed, 3);
  Eigen::MatrixXd chol = safe_cholesky(truth.sigma, "generate: truth.sigma");
  ds.returns.resize(t_total, n);
  Eigen::VectorXd z(n), zi;
  for (int t = 0; t < t_total; ++t) {
    for (int i = 0; i < n; ++i) z(i) = rng_e.normal();
    ds.returns.row(t) = (chol * z).transpose();
  }
  for (int t = 1; t < t_total; ++t) {
    Eigen::VectorXd x = ds.macros.row(t - 1).transpose();
    for (int i = 0; i < n; ++i) {
      zi.resize(p);
      for (int j = 0; j < p; ++j) zi(j) = ds.chars[j](t - 1, i);
      Eigen::VectorXd f = build_features(zi, x);
      ds.returns(t, i) += f.dot(truth.b.row(i));
    }
  }
  return sp;
}

std::string returns_csv(const PanelDataset& ds) {
  std::string out = "date,asset,excess_return\n";
  for (int t = 0; t < ds.t_total(); ++t) {
    for (int i = 0; i < ds.n_assets(); ++i) {
      out += format_month(ds.dates[t]);
      out += ',';
      out += ds.asset_ids[i];
      out += ',';
      out += format_double(ds.returns(t, i));
      out += '\n';
    }
  }
  return out;
}

std::string chars_csv(const SyntheticPanel& sp) {
  const PanelDataset& ds = sp.panel;
  std::string out = "date,asset";
  for (const auto& id : ds.char_ids) out += "," + id;
  out += '\n';
  for (int t = 0; t < ds.t_total(); ++t) {
    for (int i = 0; i < ds.n_assets(); ++i) {
      out += format_month(ds.dates[t]);
      out += ',';
      out += ds.asset_ids[i];
      for (int j = 0; j < ds.n_chars(); ++j) {
        out += ',';
        out += format_double(sp.raw_chars[j](t, i));
      }
      out += '\n';
    }
  }
  return out;
}

std::string macros_csv(const PanelDataset& ds) {
  std::string out = "date";
  for (const auto& id : ds.macro_ids) out += "," + id;
  out += '\n';
  for (int t = 0; t < ds.t_total(); ++t) {
    out += format_month(ds.dates[t]);
    for (int j = 0; j < ds.n_macros(); ++j) {
      out += ',';
      out += format_double(ds.macros(t, j));
    }
    out += '\n';
  }
  return out;
}

std::string truth_json(const SyntheticPanel& sp) {
  nlohmann::ordered_json j;
  j["format"] = "bhport-truth-v1";
  j["seed"] = sp.seed;
  j["ar_coef"] = sp.ar_coef;
  const PanelDataset& ds = sp.panel;
  j["dims"] = {{"n", ds.n_assets()},
               {"p", ds.n_chars()},
               {"q", ds.n_macros()},
               {"t_total", ds.t_total()},
               {"k", 1 + ds.n_chars() + ds.n_macros() + ds.n_chars() * ds.n_macros()}};
  j["asset_ids"] = ds.asset_ids;
  auto mat_rows = [](const Eigen::MatrixXd& m) {
    std::vector<std::vector<double>> rows(m.rows());
    for (int r = 0; r < m.rows(); ++r) {
      rows[r].resize(m.cols());
      for (int c = 0; c < m.cols(); ++c) rows[r][static_cast<std::size_t>(c)] = m(r, c);
    }
    return rows;
  };
  j["b"] = mat_rows(sp.truth.b);
  j["sigma"] = mat_rows(sp.truth.sigma);
  return j.dump(2) + "\n";
}

namespace {

struct FitSlot {
  FittedModel model;
  std::optional<FitDiagnosticsSummary> diag;
};

FitSlot fit_window(const PanelDataset& ds, const BacktestConfig& cfg, int group,
                   int fit_month_row) {
  const int r_start = fit_month_row - cfg.window_months;
  const int r_end = fit_month_row - 1;
  SurSystem sys = build_sur(ds, ds.dates[r_start], ds.dates[r_end],
                            cfg.standardize_macros);
  HyperParams hp =
      default_hyperparams(cfg.prior, sys.dims.n, sys.dims.k);
  SamplerConfig sc = cfg.sampler;
  sc.retention = Retention::kSummary;
  sc.seed = window_seed(cfg.sampler.seed, group);
  PosteriorDraws draws = run_chain(sys, hp, sc);

  FitSlot slot;
  if (draws.n_retained() >= 100) {
    DiagnosticsReport rep = diagnostics(draws);
    FitDiagnosticsSummary s;
    s.window_start_month = sys.window_start_month;
    s.window_end_month = sys.window_end_month;
    s.min_ess_ratio = rep.min_ratio;
    s.mean_ess_ratio = rep.mean_ratio;
    slot.diag = s;
  }
  slot.model = make_fitted_model(draws, sys, hp, cfg.prior, ds.asset_ids,
                                 ds.char_ids, ds.macro_ids);
  return slot;
}

StrategyMetrics basic_metrics(const Eigen::VectorXd& rets,
                              const std::vector<double>& turnovers) {
  StrategyMetrics m;
  m.n_months = static_cast<int>(rets.size());
  m.avg_return = rets.size() > 0 ? rets.mean() : kNan;
  m.sharpe = rets.size() >= 2 ? sharpe_annualized(rets, Eigen::VectorXd()) : kNan;
  double v = 1.0;
  for (int j = 0; j < rets.size(); ++j) v *= 1.0 + rets(j);
  m.final_value = v;
  if (!turnovers.empty()) {
    double s = 0.0;
    for (double x : turnovers) s += x;
    m.avg_turnover = s / static_cast<double>(turnovers.size());
  }
  return m;
}

}  // namespace

BacktestReport run_backtest(const PanelDataset& ds, const BacktestConfig& cfg,
                            const std::optional<FactorPanel>& factors) {
  cfg.validate();
  const int n = ds.n_assets();
  const int t_total = ds.t_total();
  if (t_total < cfg.window_months + 12) {
    throw ConfigError("backtest: dataset has " + std::to_string(t_total) +
                      " months; need at least window_months + 12 = " +
                      std::to_string(cfg.window_months + 12));
  }
  const int m0 = cfg.window_months;
  const int t_oos = t_total - m0;
  const int w_ma = cfg.ma_window_months > 0 ? cfg.ma_window_months : cfg.window_months;
  const Strategy strat = cfg.strategy;
  cfg.constraints.validate(n);

  BacktestReport rep;
  rep.config = cfg;
  rep.config.ma_window_months = w_ma;
  rep.asset_ids = ds.asset_ids;
  rep.months.resize(t_oos);
  for (int j = 0; j < t_oos; ++j) rep.months[j] = ds.dates[m0 + j];
  rep.weights = Eigen::MatrixXd::Zero(t_oos, n);
  rep.portfolio_returns.resize(t_oos);
  rep.cumulative_value.resize(t_oos);
  rep.forecasts = Eigen::MatrixXd::Constant(t_oos, n, kNan);
  rep.benchmarks.resize(t_oos, n);

  // Market proxy for the risk-adjustment regressions.
  Eigen::VectorXd market(t_oos);
  Eigen::MatrixXd factor_rows;
  std::vector<std::string> factor_names;
  if (factors) {
    std::unordered_map<int, int> date_row;
    for (int r = 0; r < static_cast<int>(factors->dates.size()); ++r) {
      date_row[factors->dates[r]] = r;
    }
    factor_names = factors->names;
    factor_rows.resize(t_oos, factors->values.cols());
    for (int j = 0; j < t_oos; ++j) {
      auto it = date_row.find(rep.months[j]);
      if (it == date_row.end()) {
        throw DataError("factors file is missing month " +
                        format_month(rep.months[j]));
      }
      factor_rows.row(j) = factors->values.row(it->second);
    }
    market = factor_rows.col(0);
    rep.market_proxy = "factors_file";
  } else {
    for (int j = 0; j < t_oos; ++j) market(j) = ds.returns.row(m0 + j).mean();
    factor_names = {"market"};
    factor_rows = market;
    rep.market_proxy = "equal_weight_universe";
  }

  const bool has_forecasts = strat != Strategy::kEqualWeight;
  std::vector<Eigen::MatrixXd> cov_store;
  if (has_forecasts) cov_store.assign(t_oos, Eigen::MatrixXd());

  const int n_groups =
      (t_oos + cfg.refit_every_months - 1) / cfg.refit_every_months;

  std::optional<Eigen::VectorXd> prev;
  std::vector<double> turnovers;  // per month after the first
  const double z95 = z_for_level(0.95);

  auto process_month = [&](int j, const FittedModel* model) {
    const int m = m0 + j;
    // Trailing-mean benchmark, all strategies.
    for (int i = 0; i < n; ++i) {
      rep.benchmarks(j, i) = ds.returns.col(i).segment(m - w_ma, w_ma).mean();
    }

    Eigen::VectorXd mu;
    Eigen::MatrixXd cov;
    if (strat == Strategy::kBh) {
      std::vector<Eigen::VectorXd> feats(n);
      Eigen::VectorXd x_raw = ds.macros.row(m - 1).transpose();
      Eigen::VectorXd x = model->macro_map.apply(x_raw);
      Eigen::VectorXd zi(ds.n_chars());
      for (int i = 0; i < n; ++i) {
        for (int p = 0; p < ds.n_chars(); ++p) zi(p) = ds.chars[p](m - 1, i);
        feats[i] = build_features(zi, x);
      }
      PredictiveMoments pm = predict_moments(*model, feats);
      mu = pm.mean;
      cov = cfg.use_total_cov ? pm.cov_total : pm.cov_resid;
      rep.forecasts.row(j) = mu.transpose();
      rep.intervals.push_back(predictive_interval(pm, 0.95, true));
      rep.intervals_param.push_back(predictive_interval(pm, 0.95, false));
    } else if (strat == Strategy::kMovingAverage) {
      mu = rep.benchmarks.row(j).transpose();
      Eigen::MatrixXd x = ds.returns.block(m - w_ma, 0, w_ma, n);
      Eigen::MatrixXd xc = x.rowwise() - x.colwise().mean();
      cov = xc.transpose() * xc / (w_ma - 1);
      // Small ridge so short or collinear windows stay factorizable.
      cov.diagonal().array() += 1e-10 * std::max(cov.trace() / n, 1.0e-8);
      rep.forecasts.row(j) = mu.transpose();
      IntervalForecast iv;
      iv.level = 0.95;
      Eigen::VectorXd sd = cov.diagonal().array().max(0.0).sqrt().matrix();
      iv.lower = mu - z95 * sd;
      iv.upper = mu + z95 * sd;
      rep.intervals.push_back(iv);
    }
    if (has_forecasts) cov_store[j] = cov;

    Eigen::VectorXd w;
    if ((m - m0) % cfg.rebalance_every_months == 0) {
      if (strat == Strategy::kEqualWeight) {
        w = ew_weights(n).weights;
      } else {
        PortfolioConstraints cons = cfg.constraints;
        cons.prev_weights = prev;
        w = weights_constrained(mu, SpdMatrix(cov, "backtest: forecast covariance"),
                                cfg.gamma, cons)
                .weights;
      }
    } else {
      w = *prev;
    }
    if (prev) turnovers.push_back((w - *prev).cwiseAbs().sum());
    rep.weights.row(j) = w.transpose();
    rep.portfolio_returns(j) = w.dot(ds.returns.row(m));
    prev = w;
  };

  if (strat == Strategy::kBh) {
    // Fit up to `jobs` refit windows concurrently, then walk their months in
    // order; at most one chunk of models is held in memory at a time.
    for (int g0 = 0; g0 < n_groups; g0 += cfg.jobs) {
      const int g1 = std::min(g0 + cfg.jobs, n_groups);
      std::vector<FitSlot> slots(g1 - g0);
      std::vector<std::exception_ptr> errors(g1 - g0);
      if (g1 - g0 == 1) {
        slots[0] = fit_window(ds, cfg, g0, m0 + g0 * cfg.refit_every_months);
      } else {
        std::vector<std::thread> pool;
        for (int g = g0; g < g1; ++g) {
          pool.emplace_back([&, g] {
            try {
              slots[g - g0] =
                  fit_window(ds, cfg, g, m0 + g * cfg.refit_every_months);
            } catch (...) {
              errors[g - g0] = std::current_exception();
            }
          });
        }
        for (auto& th : pool) th.join();
        for (auto& e : errors) {
          if (e) std::rethrow_exception(e);
        }
      }
      for (int g = g0; g < g1; ++g) {
        const FitSlot& slot = slots[g - g0];
        if (slot.diag) rep.fit_diagnostics.push_back(*slot.diag);
        const int j_lo = g * cfg.refit_every_months;
        const int j_hi = std::min(j_lo + cfg.refit_every_months, t_oos);
        for (int j = j_lo; j < j_hi; ++j) process_month(j, &slot.model);
      }
    }
  } else {
    for (int j = 0; j < t_oos; ++j) process_month(j, nullptr);
  }

  double v = 1.0;
  for (int j = 0; j < t_oos; ++j) {
    v *= 1.0 + rep.portfolio_returns(j);
    rep.cumulative_value(j) = v;
  }

  // Metrics over a subset of OOS months (indices into the OOS arrays).
  auto metrics_for = [&](const std::vector<int>& idx,
                         bool propagate_errors) -> StrategyMetrics {
    Eigen::VectorXd rets(idx.size());
    std::vector<double> turns;
    for (std::size_t a = 0; a < idx.size(); ++a) {
      rets(static_cast<Eigen::Index>(a)) = rep.portfolio_returns(idx[a]);
    }
    // turnovers[j-1] holds month j's L1 weight change.
    for (int j : idx) {
      if (j > 0) turns.push_back(turnovers[static_cast<std::size_t>(j) - 1]);
    }
    StrategyMetrics m;
    try {
      m = basic_metrics(rets, turns);
    } catch (const MetricError& e) {
      if (propagate_errors) throw;
      log::warn("backtest", std::string("metric skipped: ") + e.what());
      m.n_months = static_cast<int>(idx.size());
      m.avg_return = rets.size() > 0 ? rets.mean() : kNan;
      m.sharpe = kNan;
    }

    auto guard = [&](auto&& fn) {
      try {
        fn();
      } catch (const Error& e) {
        if (propagate_errors) throw;
        log::warn("backtest", std::string("metric skipped: ") + e.what());
      }
    };

    if (has_forecasts) {
      Eigen::MatrixXd pred(idx.size(), n), act(idx.size(), n), bench(idx.size(), n);
      for (std::size_t a = 0; a < idx.size(); ++a) {
        const int j = idx[a];
        pred.row(static_cast<Eigen::Index>(a)) = rep.forecasts.row(j);
        act.row(static_cast<Eigen::Index>(a)) = ds.returns.row(m0 + j);
        bench.row(static_cast<Eigen::Index>(a)) = rep.benchmarks.row(j);
      }
      guard([&] { m.r2_oos_value = r2_oos(pred, act, bench); });
      if (!rep.intervals.empty()) {
        std::vector<IntervalForecast> sub;
        for (int j : idx) sub.push_back(rep.intervals[static_cast<std::size_t>(j)]);
        guard([&] {
          m.c_oos = coverage(sub, act);
          m.il_oos = interval_length(sub);
        });
      }
      if (!rep.intervals_param.empty()) {
        std::vector<IntervalForecast> sub;
        for (int j : idx) {
          sub.push_back(rep.intervals_param[static_cast<std::size_t>(j)]);
        }
        guard([&] { m.il_oos_param = interval_length(sub); });
      }
    }

    guard([&] {
      Eigen::VectorXd y(idx.size());
      Eigen::MatrixXd fx(idx.size(), factor_rows.cols());
      for (std::size_t a = 0; a < idx.size(); ++a) {
        y(static_cast<Eigen::Index>(a)) = rep.portfolio_returns(idx[a]);
        fx.row(static_cast<Eigen::Index>(a)) = factor_rows.row(idx[a]);
      }
      FactorRegression fr = factor_regression(y, fx, factor_names, 0);
      m.alpha = fr.alpha;
      m.alpha_t = fr.alpha_t;
      m.capm_beta = fr.betas(0);
      m.capm_r2 = fr.r2;
    });
    return m;
  };

  std::vector<int> all_idx(t_oos);
  for (int j = 0; j < t_oos; ++j) all_idx[j] = j;
  rep.overall = metrics_for(all_idx, false);

  for (const auto& sp : cfg.subperiods) {
    std::vector<int> idx;
    for (int j = 0; j < t_oos; ++j) {
      if (rep.months[j] >= sp.start_month && rep.months[j] <= sp.end_month) {
        idx.push_back(j);
      }
    }
    if (idx.empty()) {
      log::warn("backtest", "subperiod '" + sp.label + "' contains no OOS months");
      continue;
    }
    rep.subperiod_metrics.emplace_back(sp.label, metrics_for(idx, false));
  }

  // Risk-aversion sensitivity: same forecasts, re-solved weight paths.
  if (has_forecasts) {
    for (double g : cfg.gamma_sensitivity) {
      std::optional<Eigen::VectorXd> gprev;
      Eigen::VectorXd grets(t_oos);
      std::vector<double> gturns;
      for (int j = 0; j < t_oos; ++j) {
        const int m = m0 + j;
        Eigen::VectorXd w;
        if ((m - m0) % cfg.rebalance_every_months == 0) {
          PortfolioConstraints cons = cfg.constraints;
          cons.prev_weights = gprev;
          w = weights_constrained(rep.forecasts.row(j).transpose(),
                                  SpdMatrix(cov_store[j], "backtest: forecast covariance"),
                                  g, cons)
                  .weights;
        } else {
          w = *gprev;
        }
        if (gprev) gturns.push_back((w - *gprev).cwiseAbs().sum());
        grets(j) = w.dot(ds.returns.row(m));
        gprev = w;
      }
      StrategyMetrics gm;
      try {
        gm = basic_metrics(grets, gturns);
      } catch (const MetricError& e) {
        log::warn("backtest", std::string("gamma sensitivity metric skipped: ") + e.what());
        gm.n_months = t_oos;
        gm.avg_return = grets.mean();
        gm.sharpe = kNan;
      }
      rep.gamma_metrics.emplace_back(g, gm);
    }
  }

  return rep;
}

namespace {

nlohmann::ordered_json opt_num(const std::optional<double>& v) {
  if (!v || !std::isfinite(*v)) return nullptr;
  return *v;
}

nlohmann::ordered_json num_or_null(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

nlohmann::ordered_json metrics_json(const StrategyMetrics& m) {
  nlohmann::ordered_json j;
  j["n_months"] = m.n_months;
  j["avg_return"] = num_or_null(m.avg_return);
  j["sharpe_annualized"] = num_or_null(m.sharpe);
  j["final_value"] = num_or_null(m.final_value);
  j["avg_turnover"] = num_or_null(m.avg_turnover);
  j["r2_oos"] = opt_num(m.r2_oos_value);
  j["c_oos"] = opt_num(m.c_oos);
  j["il_oos"] = opt_num(m.il_oos);
  j["il_oos_param"] = opt_num(m.il_oos_param);
  j["alpha"] = opt_num(m.alpha);
  j["alpha_t"] = opt_num(m.alpha_t);
  j["capm_beta"] = opt_num(m.capm_beta);
  j["capm_r2"] = opt_num(m.capm_r2);
  return j;
}

}  // namespace

std::string report_json(const BacktestReport& rep) {
  const BacktestConfig& cfg = rep.config;
  nlohmann::ordered_json j;
  j["format"] = "bhport-backtest-v1";
  j["strategy"] = strategy_name(cfg.strategy);
  j["window_months"] = cfg.window_months;
  j["refit_every_months"] = cfg.refit_every_months;
  j["rebalance_every_months"] = cfg.rebalance_every_months;
  j["ma_window_months"] = cfg.ma_window_months;
  j["gamma"] = cfg.gamma;
  j["prior"] = prior_setting_name(cfg.prior);
  j["standardize_macros"] = cfg.standardize_macros;
  j["use_total_cov"] = cfg.use_total_cov;
  j["sampler"] = {{"n_total", cfg.sampler.n_total},
                  {"n_burn", cfg.sampler.n_burn},
                  {"seed", cfg.sampler.seed},
                  {"blocked_threshold", cfg.sampler.blocked_threshold}};
  j["constraints"] = {{"long_only", cfg.constraints.long_only},
                      {"full_investment", cfg.constraints.full_investment},
                      {"max_weight", cfg.constraints.max_weight},
                      {"max_turnover", cfg.constraints.max_turnover}};
  j["market_proxy"] = rep.market_proxy;
  j["asset_ids"] = rep.asset_ids;
  std::vector<std::string> months;
  months.reserve(rep.months.size());
  for (int m : rep.months) months.push_back(format_month(m));
  j["months"] = months;
  j["overall"] = metrics_json(rep.overall);
  j["subperiods"] = nlohmann::ordered_json::array();
  for (const auto& [label, m] : rep.subperiod_metrics) {
    nlohmann::ordered_json e;
    e["label"] = label;
    e["metrics"] = metrics_json(m);
    j["subperiods"].push_back(e);
  }
  j["gamma_sensitivity"] = nlohmann::ordered_json::array();
  for (const auto& [g, m] : rep.gamma_metrics) {
    nlohmann::ordered_json e;
    e["gamma"] = g;
    e["metrics"] = metrics_json(m);
    j["gamma_sensitivity"].push_back(e);
  }
  j["fit_windows"] = nlohmann::ordered_json::array();
  for (const auto& d : rep.fit_diagnostics) {
    nlohmann::ordered_json e;
    e["window_start"] = format_month(d.window_start_month);
    e["window_end"] = format_month(d.window_end_month);
    e["min_ess_ratio"] = num_or_null(d.min_ess_ratio);
    e["mean_ess_ratio"] = num_or_null(d.mean_ess_ratio);
    j["fit_windows"].push_back(e);
  }
  return j.dump(2) + "\n";
}

std::string weights_csv(const BacktestReport& rep) {
  std::string out = "date,asset,weight\n";
  for (std::size_t j = 0; j < rep.months.size(); ++j) {
    for (std::size_t i = 0; i < rep.asset_ids.size(); ++i) {
      out += format_month(rep.months[j]);
      out += ',';
      out += rep.asset_ids[i];
      out += ',';
      out += format_double(rep.weights(static_cast<Eigen::Index>(j),
                                       static_cast<Eigen::Index>(i)));
      out += '\n';
    }
  }
  return out;
}

std::string cumulative_csv(const BacktestReport& rep) {
  std::string out = "date,value\n";
  for (std::size_t j = 0; j < rep.months.size(); ++j) {
    out += format_month(rep.months[j]);
    out += ',';
    out += format_double(rep.cumulative_value(static_cast<Eigen::Index>(j)));
    out += '\n';
  }
  return out;
}

std::string forecasts_csv(const BacktestReport& rep) {
  std::string out = "date,asset,forecast,benchmark,lower,upper\n";
  const bool has_iv = !rep.intervals.empty();
  for (std::size_t j = 0; j < rep.months.size(); ++j) {
    for (std::size_t i = 0; i < rep.asset_ids.size(); ++i) {
      const auto jj = static_cast<Eigen::Index>(j);
      const auto ii = static_cast<Eigen::Index>(i);
      out += format_month(rep.months[j]);
      out += ',';
      out += rep.asset_ids[i];
      out += ',';
      if (std::isfinite(rep.forecasts(jj, ii))) {
        out += format_double(rep.forecasts(jj, ii));
      }
      out += ',';
      out += format_double(rep.benchmarks(jj, ii));
      out += ',';
      if (has_iv) out += format_double(rep.intervals[j].lower(ii));
      out += ',';
      if (has_iv) out += format_double(rep.intervals[j].upper(ii));
      out += '\n';
    }
  }
  return out;
}

}  // namespace bhport
