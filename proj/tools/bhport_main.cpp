// Command-line front end: generate / fit / predict / diagnose / backtest.
//
// Exit codes: 0 success, 2 configuration or usage error, 3 data error,
// 4 numerical failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bhport/backtest.hpp"
#include "bhport/csv.hpp"
#include "bhport/errors.hpp"
#include "bhport/hierarchical.hpp"
#include "bhport/log.hpp"
#include "bhport/panel.hpp"
#include "bhport/portfolio.hpp"
#include "bhport/predictive.hpp"
#include "bhport/stats.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

// Parsed --config file with dotted-key lookups; flags win over file values.
class ConfigFile {
 public:
  explicit ConfigFile(const std::string& path) {
    if (path.empty()) return;
    std::ifstream in(path);
    if (!in) throw bhport::ConfigError("config file not found: " + path);
    try {
      json_ = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw bhport::ConfigError("config file " + path + ": " + e.what());
    }
    if (!json_.is_object()) {
      throw bhport::ConfigError("config file " + path + ": top level must be an object");
    }
  }

  const nlohmann::json* find(const std::string& dotted) const {
    const nlohmann::json* cur = &json_;
    std::size_t pos = 0;
    while (true) {
      std::size_t dot = dotted.find('.', pos);
      std::string key = dotted.substr(pos, dot == std::string::npos ? dot : dot - pos);
      if (!cur->is_object() || !cur->contains(key)) return nullptr;
      cur = &(*cur)[key];
      if (dot == std::string::npos) return cur;
      pos = dot + 1;
    }
  }

  template <typename T>
  void apply(const CLI::Option* opt, T& var, const std::string& key) const {
    if (opt != nullptr && opt->count() > 0) return;  // flag wins
    const nlohmann::json* v = find(key);
    if (v == nullptr) return;
    try {
      var = v->get<T>();
    } catch (const nlohmann::json::exception&) {
      throw bhport::ConfigError("config key '" + key + "' has the wrong type");
    }
  }

  const nlohmann::json& raw() const { return json_; }

 private:
  nlohmann::json json_ = nlohmann::json::object();
};

void ensure_out_dir(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) {
    throw bhport::ConfigError("cannot create output directory " + out + ": " +
                              ec.message());
  }
}

void write_out(const std::string& out, const std::string& name,
               const std::string& content) {
  bhport::write_text_file((fs::path(out) / name).string(), content);
}

int parse_month_flag(const std::string& text, const std::string& flag) {
  try {
    return bhport::parse_month(text, flag, 0);
  } catch (const bhport::DataError& e) {
    // Malformed command-line/config dates are usage errors, not data errors.
    throw bhport::ConfigError(e.what());
  }
}

// Shared sampler/seed resolution for fit and backtest.
struct SamplerFlags {
  int n_total = 3000;
  int n_burn = 1000;
  std::uint64_t seed = 1;
  int blocked_threshold = 4000;
  CLI::Option* opt_iters = nullptr;
  CLI::Option* opt_burn = nullptr;
  CLI::Option* opt_seed = nullptr;
  CLI::Option* opt_block = nullptr;

  void add(CLI::App* sub) {
    opt_iters = sub->add_option("--iterations", n_total, "Total Gibbs iterations");
    opt_burn = sub->add_option("--burn", n_burn, "Burn-in iterations to discard");
    opt_seed = sub->add_option("--seed", seed, "Random seed");
    opt_block = sub->add_option("--blocked-threshold", blocked_threshold,
                                "Joint-draw dimension above which the sampler "
                                "switches to blocked sweeps");
  }

  bhport::SamplerConfig resolve(const ConfigFile& cfg) const {
    bhport::SamplerConfig sc;
    sc.n_total = n_total;
    sc.n_burn = n_burn;
    sc.seed = seed;
    sc.blocked_threshold = blocked_threshold;
    cfg.apply(opt_iters, sc.n_total, "sampler.n_total");
    cfg.apply(opt_burn, sc.n_burn, "sampler.n_burn");
    cfg.apply(opt_seed, sc.seed, "seed");
    cfg.apply(opt_block, sc.blocked_threshold, "sampler.blocked_threshold");
    return sc;
  }
};

ordered_json sampler_echo(const bhport::SamplerConfig& sc) {
  return {{"n_total", sc.n_total},
          {"n_burn", sc.n_burn},
          {"seed", sc.seed},
          {"blocked_threshold", sc.blocked_threshold}};
}

ordered_json constraints_echo(const bhport::PortfolioConstraints& c) {
  return {{"long_only", c.long_only},
          {"full_investment", c.full_investment},
          {"max_weight", c.max_weight},
          {"max_turnover", c.max_turnover}};
}

struct GenerateCmd {
  std::string out, config_path, start = "1995-01";
  int n = 10, p = 2, q = 2, months = 360;
  std::uint64_t seed = 1;
  double ar_coef = 0.9;
  CLI::Option *on = nullptr, *op = nullptr, *oq = nullptr, *om = nullptr,
              *oseed = nullptr, *oar = nullptr, *ostart = nullptr;

  int run() {
    ConfigFile cfg(config_path);
    cfg.apply(on, n, "generate.n");
    cfg.apply(op, p, "generate.p");
    cfg.apply(oq, q, "generate.q");
    cfg.apply(om, months, "generate.months");
    cfg.apply(oseed, seed, "seed");
    cfg.apply(oar, ar_coef, "generate.ar_coef");
    cfg.apply(ostart, start, "generate.start");
    const int start_month = parse_month_flag(start, "--start");

    bhport::SyntheticTruth truth = bhport::default_truth(n, p, q, seed);
    bhport::SyntheticPanel sp = bhport::generate_synthetic_panel(
        truth, n, p, q, months, seed, ar_coef, start_month);

    ensure_out_dir(out);
    write_out(out, "returns.csv", bhport::returns_csv(sp.panel));
    write_out(out, "characteristics.csv", bhport::chars_csv(sp));
    write_out(out, "macros.csv", bhport::macros_csv(sp.panel));
    write_out(out, "truth.json", bhport::truth_json(sp));

    ordered_json used;
    used["command"] = "generate";
    used["seed"] = seed;
    used["generate"] = {{"n", n},     {"p", p},           {"q", q},
                        {"months", months}, {"ar_coef", ar_coef}, {"start", start}};
    write_out(out, "config_used.json", used.dump(2) + "\n");

    std::printf("generated %d assets x %d months (p=%d, q=%d) into %s\n", n,
                months, p, q, out.c_str());
    return 0;
  }
};

struct FitCmd {
  std::string returns_path, chars_path, macros_path, out, config_path;
  std::string prior = "mild", window_start, window_end;
  bool raw_macros = false;
  SamplerFlags sampler;
  CLI::Option *oprior = nullptr, *ows = nullptr, *owe = nullptr, *oraw = nullptr;

  int run() {
    ConfigFile cfg(config_path);
    cfg.apply(oprior, prior, "prior");
    cfg.apply(ows, window_start, "fit.window_start");
    cfg.apply(owe, window_end, "fit.window_end");
    cfg.apply(oraw, raw_macros, "raw_macros");
    bhport::SamplerConfig sc = sampler.resolve(cfg);
    sc.retention = bhport::Retention::kSummary;
    bhport::PriorSetting ps = bhport::prior_setting_from_name(prior);

    bhport::PanelDataset ds =
        bhport::load_panel(returns_path, chars_path, macros_path);
    const int start =
        window_start.empty() ? ds.dates.front() : parse_month_flag(window_start, "--window-start");
    const int end =
        window_end.empty() ? ds.dates.back() : parse_month_flag(window_end, "--window-end");
    bhport::SurSystem sys = bhport::build_sur(ds, start, end, !raw_macros);
    bhport::HyperParams hp =
        bhport::default_hyperparams(ps, sys.dims.n, sys.dims.k);

    bhport::log::info("cli", "fitting " + std::to_string(sys.dims.n) + " assets, " +
                                 std::to_string(sys.dims.t) + " months, k=" +
                                 std::to_string(sys.dims.k));
    bhport::PosteriorDraws draws = bhport::run_chain(sys, hp, sc);
    bhport::FittedModel model = bhport::make_fitted_model(
        draws, sys, hp, ps, ds.asset_ids, ds.char_ids, ds.macro_ids);

    ensure_out_dir(out);
    write_out(out, "model.json", bhport::fitted_model_to_json(model));
    write_out(out, "trace.csv", bhport::trace_csv(draws));
    std::string diag_line;
    if (draws.n_retained() >= 100) {
      bhport::DiagnosticsReport rep = bhport::diagnostics(draws);
      write_out(out, "diagnostics.json", bhport::diagnostics_json(rep));
      std::ostringstream ss;
      ss << "min ESS ratio " << rep.min_ratio << ", mean " << rep.mean_ratio;
      diag_line = ss.str();
    } else {
      diag_line = "too few retained draws for diagnostics";
    }

    ordered_json used;
    used["command"] = "fit";
    used["inputs"] = {{"returns", returns_path},
                      {"characteristics", chars_path},
                      {"macros", macros_path}};
    used["prior"] = prior;
    used["standardize_macros"] = !raw_macros;
    used["window"] = {{"start", bhport::format_month(start)},
                      {"end", bhport::format_month(end)}};
    used["sampler"] = sampler_echo(sc);
    write_out(out, "config_used.json", used.dump(2) + "\n");

    std::printf("fit complete: %d retained draws, %s\n", draws.n_retained(),
                diag_line.c_str());
    return 0;
  }
};

struct PredictCmd {
  std::string model_path, returns_path, chars_path, macros_path, out, config_path;
  std::string date;
  double level = 0.95;
  bool param_only = false;
  CLI::Option *odate = nullptr, *olevel = nullptr, *oparam = nullptr;

  int run() {
    ConfigFile cfg(config_path);
    cfg.apply(odate, date, "predict.date");
    cfg.apply(olevel, level, "predict.level");
    cfg.apply(oparam, param_only, "predict.param_only");

    std::ifstream in(model_path);
    if (!in) throw bhport::DataError("model file not found: " + model_path);
    std::stringstream buf;
    buf << in.rdbuf();
    bhport::FittedModel model = bhport::fitted_model_from_json(buf.str());

    bhport::PanelDataset ds =
        bhport::load_panel(returns_path, chars_path, macros_path);
    if (ds.n_assets() != model.dims.n || ds.n_chars() != model.dims.p ||
        ds.n_macros() != model.dims.q) {
      throw bhport::DataError("panel dimensions do not match the fitted model");
    }
    const int m = date.empty() ? ds.dates.back() : parse_month_flag(date, "--date");
    const int row = ds.row_of(m);

    std::vector<Eigen::VectorXd> feats(ds.n_assets());
    Eigen::VectorXd x = model.macro_map.apply(ds.macros.row(row).transpose());
    Eigen::VectorXd zi(ds.n_chars());
    for (int i = 0; i < ds.n_assets(); ++i) {
      for (int p = 0; p < ds.n_chars(); ++p) zi(p) = ds.chars[p](row, i);
      feats[i] = bhport::build_features(zi, x);
    }
    bhport::PredictiveMoments pm = bhport::predict_moments(model, feats);
    bhport::IntervalForecast iv =
        bhport::predictive_interval(pm, level, !param_only);

    const std::string target = bhport::format_month(m + 1);
    std::string csv = "date,asset,forecast,lower,upper\n";
    for (int i = 0; i < ds.n_assets(); ++i) {
      csv += target + "," + ds.asset_ids[i] + "," +
             bhport::format_double(pm.mean(i)) + "," +
             bhport::format_double(iv.lower(i)) + "," +
             bhport::format_double(iv.upper(i)) + "\n";
    }
    if (!out.empty()) {
      ensure_out_dir(out);
      write_out(out, "forecast.csv", csv);
      ordered_json used;
      used["command"] = "predict";
      used["model"] = model_path;
      used["feature_month"] = bhport::format_month(m);
      used["target_month"] = target;
      used["level"] = level;
      used["use_total_cov"] = !param_only;
      write_out(out, "config_used.json", used.dump(2) + "\n");
    }
    std::fputs(csv.c_str(), stdout);
    return 0;
  }
};

struct DiagnoseCmd {
  std::string trace_path, out;

  int run() {
    bhport::CsvTable tab = bhport::read_csv(trace_path);
    if (tab.header != std::vector<std::string>{"iteration", "parameter", "value"}) {
      throw bhport::DataError(trace_path +
                              ": expected header iteration,parameter,value");
    }
    std::vector<std::string> order;
    std::unordered_map<std::string, std::vector<double>> chains;
    for (std::size_t r = 0; r < tab.rows.size(); ++r) {
      const std::string& name = tab.rows[r][1];
      auto [it, inserted] = chains.try_emplace(name);
      if (inserted) order.push_back(name);
      it->second.push_back(
          bhport::parse_double_cell(tab.rows[r][2], trace_path, r + 2, "value"));
    }
    if (order.empty()) throw bhport::DataError(trace_path + ": no draws found");
    const std::size_t len = chains[order.front()].size();
    for (const auto& name : order) {
      if (chains[name].size() != len) {
        throw bhport::DataError(trace_path + ": parameter '" + name +
                                "' has a different number of draws");
      }
    }
    if (len < 100) {
      throw bhport::ConfigError("diagnostics need at least 100 draws per "
                                "parameter; trace has " + std::to_string(len));
    }

    ordered_json params = ordered_json::array();
    double min_ratio = std::numeric_limits<double>::infinity();
    double sum_ratio = 0.0;
    for (const auto& name : order) {
      const double e = bhport::ess(chains[name]);
      const double ratio = e / static_cast<double>(len);
      min_ratio = std::min(min_ratio, ratio);
      sum_ratio += ratio;
      params.push_back({{"parameter", name}, {"ess", e}, {"ess_ratio", ratio}});
    }
    ordered_json j;
    j["format"] = "bhport-diagnostics-v1";
    j["n_draws"] = len;
    j["n_parameters"] = order.size();
    j["min_ess_ratio"] = min_ratio;
    j["mean_ess_ratio"] = sum_ratio / static_cast<double>(order.size());
    j["parameters"] = params;
    const std::string text = j.dump(2) + "\n";
    if (!out.empty()) {
      ensure_out_dir(out);
      write_out(out, "diagnostics.json", text);
    }
    std::printf("%zu parameters, %zu draws: min ESS ratio %.4f, mean %.4f\n",
                order.size(), len, min_ratio,
                sum_ratio / static_cast<double>(order.size()));
    return 0;
  }
};

struct BacktestCmd {
  std::string returns_path, chars_path, macros_path, factors_path, out, config_path;
  std::string prior = "mild", strategy = "bh";
  int window = 252, refit = 12, rebalance = 1, ma_window = 0, jobs = 1;
  double gamma = 5.0;
  bool raw_macros = false, resid_cov = false;
  SamplerFlags sampler;
  CLI::Option *oprior = nullptr, *ostrategy = nullptr, *owindow = nullptr,
              *orefit = nullptr, *orebalance = nullptr, *oma = nullptr,
              *ojobs = nullptr, *ogamma = nullptr, *oraw = nullptr, *oresid = nullptr;

  int run() {
    ConfigFile cfg(config_path);
    bhport::BacktestConfig bc;
    bc.sampler = sampler.resolve(cfg);
    cfg.apply(oprior, prior, "prior");
    cfg.apply(ostrategy, strategy, "strategy");
    cfg.apply(owindow, window, "window_months");
    cfg.apply(orefit, refit, "refit_every_months");
    cfg.apply(orebalance, rebalance, "rebalance_every_months");
    cfg.apply(oma, ma_window, "ma_window_months");
    cfg.apply(ojobs, jobs, "jobs");
    cfg.apply(ogamma, gamma, "gamma");
    cfg.apply(oraw, raw_macros, "raw_macros");
    cfg.apply(oresid, resid_cov, "resid_cov");
    bc.prior = bhport::prior_setting_from_name(prior);
    bc.strategy = bhport::strategy_from_name(strategy);
    bc.window_months = window;
    bc.refit_every_months = refit;
    bc.rebalance_every_months = rebalance;
    bc.ma_window_months = ma_window;
    bc.jobs = jobs;
    bc.gamma = gamma;
    bc.standardize_macros = !raw_macros;
    bc.use_total_cov = !resid_cov;
    cfg.apply(nullptr, bc.constraints.long_only, "constraints.long_only");
    cfg.apply(nullptr, bc.constraints.full_investment, "constraints.full_investment");
    cfg.apply(nullptr, bc.constraints.max_weight, "constraints.max_weight");
    cfg.apply(nullptr, bc.constraints.max_turnover, "constraints.max_turnover");
    cfg.apply(nullptr, bc.gamma_sensitivity, "gamma_sensitivity");
    if (const nlohmann::json* sp = cfg.find("subperiods")) {
      if (!sp->is_array()) throw bhport::ConfigError("config key 'subperiods' must be an array");
      for (const auto& e : *sp) {
        bhport::Subperiod s;
        try {
          s.label = e.at("label").get<std::string>();
          s.start_month = parse_month_flag(e.at("start").get<std::string>(), "subperiods.start");
          s.end_month = parse_month_flag(e.at("end").get<std::string>(), "subperiods.end");
        } catch (const nlohmann::json::exception&) {
          throw bhport::ConfigError(
              "config subperiods entries need label/start/end fields");
        }
        bc.subperiods.push_back(s);
      }
    }

    bhport::PanelDataset ds =
        bhport::load_panel(returns_path, chars_path, macros_path);
    std::optional<bhport::FactorPanel> factors;
    if (!factors_path.empty()) factors = bhport::load_factors(factors_path);

    bhport::BacktestReport rep = bhport::run_backtest(ds, bc, factors);

    ensure_out_dir(out);
    write_out(out, "report.json", bhport::report_json(rep));
    write_out(out, "weights.csv", bhport::weights_csv(rep));
    write_out(out, "cumulative.csv", bhport::cumulative_csv(rep));
    write_out(out, "forecasts.csv", bhport::forecasts_csv(rep));

    ordered_json used;
    used["command"] = "backtest";
    used["inputs"] = {{"returns", returns_path},
                      {"characteristics", chars_path},
                      {"macros", macros_path},
                      {"factors", factors_path}};
    used["strategy"] = strategy;
    used["prior"] = prior;
    used["gamma"] = gamma;
    used["window_months"] = window;
    used["refit_every_months"] = refit;
    used["rebalance_every_months"] = rebalance;
    used["ma_window_months"] = rep.config.ma_window_months;
    used["standardize_macros"] = !raw_macros;
    used["use_total_cov"] = !resid_cov;
    used["jobs"] = jobs;
    used["sampler"] = sampler_echo(bc.sampler);
    used["constraints"] = constraints_echo(bc.constraints);
    used["gamma_sensitivity"] = bc.gamma_sensitivity;
    write_out(out, "config_used.json", used.dump(2) + "\n");

    const auto& m = rep.overall;
    std::printf("backtest complete: %d OOS months, avg %.4f, Sharpe %.3f\n",
                m.n_months, m.avg_return, m.sharpe);
    if (m.r2_oos_value) std::printf("  R2_OOS %.4f\n", *m.r2_oos_value);
    if (m.c_oos) std::printf("  coverage %.4f, length %.4f\n", *m.c_oos,
                             m.il_oos ? *m.il_oos : 0.0);
    return 0;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical Bayesian return forecasting and portfolio backtests"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("--quiet", quiet, "Only log errors");

  GenerateCmd gen;
  FitCmd fit;
  PredictCmd pred;
  DiagnoseCmd diag;
  BacktestCmd bt;
  int rc = 0;
  // Flag values are assigned while tokens are consumed, before callbacks run.
  auto launch = [&quiet](auto& cmd, int& out_rc) {
    if (quiet) bhport::log::threshold() = bhport::log::Level::kError;
    out_rc = cmd.run();
  };

  CLI::App* g = app.add_subcommand("generate", "Simulate a synthetic panel");
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--config", gen.config_path, "JSON config file");
  gen.on = g->add_option("--n", gen.n, "Assets");
  gen.op = g->add_option("--p", gen.p, "Characteristics per asset");
  gen.oq = g->add_option("--q", gen.q, "Macro predictors");
  gen.om = g->add_option("--months", gen.months, "Months to simulate");
  gen.oseed = g->add_option("--seed", gen.seed, "Random seed");
  gen.oar = g->add_option("--ar", gen.ar_coef, "Macro AR(1) coefficient");
  gen.ostart = g->add_option("--start", gen.start, "First month (YYYY-MM)");
  g->fallthrough();
  g->callback([&] { launch(gen, rc); });

  CLI::App* f = app.add_subcommand("fit", "Fit the hierarchical model");
  f->add_option("--returns", fit.returns_path, "Returns CSV")->required();
  f->add_option("--chars", fit.chars_path, "Characteristics CSV")->required();
  f->add_option("--macros", fit.macros_path, "Macros CSV")->required();
  f->add_option("--out", fit.out, "Output directory")->required();
  f->add_option("--config", fit.config_path, "JSON config file");
  fit.oprior = f->add_option("--prior", fit.prior, "Prior setting: mild or tight");
  fit.ows = f->add_option("--window-start", fit.window_start, "First month (YYYY-MM)");
  fit.owe = f->add_option("--window-end", fit.window_end, "Last month (YYYY-MM)");
  fit.oraw = f->add_flag("--raw-macros", fit.raw_macros,
                         "Use macro series as-is (skip window standardization)");
  fit.sampler.add(f);
  f->fallthrough();
  f->callback([&] { launch(fit, rc); });

  CLI::App* p = app.add_subcommand("predict", "One-month-ahead forecast");
  p->add_option("--model", pred.model_path, "Fitted model JSON")->required();
  p->add_option("--returns", pred.returns_path, "Returns CSV")->required();
  p->add_option("--chars", pred.chars_path, "Characteristics CSV")->required();
  p->add_option("--macros", pred.macros_path, "Macros CSV")->required();
  p->add_option("--out", pred.out, "Output directory (also prints to stdout)");
  p->add_option("--config", pred.config_path, "JSON config file");
  pred.odate = p->add_option("--date", pred.date,
                             "Feature month YYYY-MM (default: last in panel)");
  pred.olevel = p->add_option("--level", pred.level, "Interval level");
  pred.oparam = p->add_flag("--param-only", pred.param_only,
                            "Intervals from parameter uncertainty only");
  p->fallthrough();
  p->callback([&] { launch(pred, rc); });

  CLI::App* d = app.add_subcommand("diagnose", "ESS diagnostics from a trace CSV");
  d->add_option("--trace", diag.trace_path, "Trace CSV from fit")->required();
  d->add_option("--out", diag.out, "Output directory (also prints to stdout)");
  d->fallthrough();
  d->callback([&] { launch(diag, rc); });

  CLI::App* b = app.add_subcommand("backtest", "Rolling out-of-sample backtest");
  b->add_option("--returns", bt.returns_path, "Returns CSV")->required();
  b->add_option("--chars", bt.chars_path, "Characteristics CSV")->required();
  b->add_option("--macros", bt.macros_path, "Macros CSV")->required();
  b->add_option("--factors", bt.factors_path, "Factor CSV for risk adjustment");
  b->add_option("--out", bt.out, "Output directory")->required();
  b->add_option("--config", bt.config_path, "JSON config file");
  bt.oprior = b->add_option("--prior", bt.prior, "Prior setting: mild or tight");
  bt.ostrategy = b->add_option("--strategy", bt.strategy,
                               "bh, moving_average, or equal_weight");
  bt.owindow = b->add_option("--window", bt.window, "Training window in months");
  bt.orefit = b->add_option("--refit", bt.refit, "Months between refits");
  bt.orebalance = b->add_option("--rebalance", bt.rebalance, "Months between rebalances");
  bt.oma = b->add_option("--ma-window", bt.ma_window,
                         "Benchmark trailing-mean window (0 = training window)");
  bt.ojobs = b->add_option("--jobs", bt.jobs, "Concurrent refit fits");
  bt.ogamma = b->add_option("--gamma", bt.gamma, "Risk aversion");
  bt.oraw = b->add_flag("--raw-macros", bt.raw_macros,
                        "Use macro series as-is (skip window standardization)");
  bt.oresid = b->add_flag("--resid-cov", bt.resid_cov,
                          "Optimize against residual covariance only");
  bt.sampler.add(b);
  b->fallthrough();
  b->callback([&] { launch(bt, rc); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const bhport::ConfigError& e) {
    bhport::log::error("cli", e.what());
    return 2;
  } catch (const bhport::DataError& e) {
    bhport::log::error("cli", e.what());
    return 3;
  } catch (const bhport::NumericalError& e) {
    bhport::log::error("cli", e.what());
    return 4;
  } catch (const bhport::Error& e) {
    bhport::log::error("cli", e.what());
    return 2;
  } catch (const std::exception& e) {
    bhport::log::error("cli", std::string("unexpected: ") + e.what());
    return 4;
  }
  return rc;
}
