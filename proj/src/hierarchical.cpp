#include "bhport/hierarchical.hpp"

#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "bhport/csv.hpp"
#include "bhport/errors.hpp"
#include "bhport/log.hpp"
#include "bhport/spd.hpp"
#include "bhport/stats.hpp"

namespace bhport {

using ordered_json = nlohmann::ordered_json;

std::string prior_setting_name(PriorSetting s) {
  return s == PriorSetting::kMild ? "mild" : "tight";
}

PriorSetting prior_setting_from_name(const std::string& name) {
  if (name == "mild") return PriorSetting::kMild;
  if (name == "tight") return PriorSetting::kTight;
  throw ConfigError("unknown prior setting '" + name + "' (expected mild or tight)");
}

void HyperParams::validate(int n, int k) const {
  if (bbar_bar.size() != k || delta_bbar.rows() != k || delta_bbar.cols() != k ||
      v_b.rows() != k || v_b.cols() != k)
    throw ConfigError("hyperparameters: K-dimension mismatch");
  if (v_sigma.rows() != n || v_sigma.cols() != n)
    throw ConfigError("hyperparameters: N-dimension mismatch");
  if (!(nu_b > k - 1))
    throw ConfigError("hyperparameters: nu_b must exceed K - 1");
  if (!(nu_sigma > n - 1))
    throw ConfigError("hyperparameters: nu_sigma must exceed N - 1");
}

HyperParams default_hyperparams(PriorSetting setting, int n, int k) {
  HyperParams hp;
  hp.bbar_bar = Eigen::VectorXd::Zero(k);
  hp.delta_bbar = 0.1 * Eigen::MatrixXd::Identity(k, k);
  hp.nu_b = (setting == PriorSetting::kMild ? 1001.0 : 5001.0) + k;
  hp.v_b = 3.0 * Eigen::MatrixXd::Identity(k, k);
  hp.nu_sigma = n + 2;
  hp.v_sigma = Eigen::MatrixXd::Identity(n, n);
  return hp;
}

SurWorkspace::SurWorkspace(const SurSystem& sys) : sys_(&sys) {
  const int n = sys.dims.n;
  g_.assign(static_cast<std::size_t>(n) * n, Eigen::MatrixXd());
  ftr_.assign(static_cast<std::size_t>(n) * n, Eigen::VectorXd());
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j)
      g_[static_cast<std::size_t>(i) * n + j] =
          sys.blocks[i].transpose() * sys.blocks[j];
  update_responses(sys.responses);
}

void SurWorkspace::update_responses(const Eigen::VectorXd& stacked) {
  const int n = sys_->dims.n;
  const int t = sys_->dims.t;
  if (stacked.size() != static_cast<long>(n) * t)
    throw ConfigError("update_responses: stacked length mismatch");
  responses_.resize(n);
  for (int i = 0; i < n; ++i) responses_[i] = stacked.segment(i * t, t);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      ftr_[static_cast<std::size_t>(i) * n + j] =
          sys_->blocks[i].transpose() * responses_[j];
}

namespace {

// Solve (L L') x = rhs in place given the lower factor L.
void chol_solve_in_place(const Eigen::MatrixXd& l, Eigen::VectorXd& rhs) {
  l.triangularView<Eigen::Lower>().solveInPlace(rhs);
  l.transpose().triangularView<Eigen::Upper>().solveInPlace(rhs);
}

}  // namespace

void gibbs_step_b(ChainState& state, const SurWorkspace& ws, const HyperParams& hp,
                  RngStream& rng, int blocked_threshold) {
  const Dims& d = ws.dims();
  const int n = d.n, k = d.k;
  const long nk = static_cast<long>(n) * k;
  Eigen::MatrixXd sinv = spd_inverse(state.sigma, "step_b: sigma");
  Eigen::MatrixXd dbinv = spd_inverse(state.delta_b, "step_b: delta_b");
  const Eigen::VectorXd prior_pull = dbinv * state.bbar;

  if (nk <= blocked_threshold) {
    Eigen::MatrixXd prec(nk, nk);
    for (int i = 0; i < n; ++i) {
      for (int j = i; j < n; ++j) {
        Eigen::MatrixXd blk = sinv(i, j) * ws.g_upper(i, j);
        if (i == j) blk += dbinv;
        prec.block(i * k, j * k, k, k) = blk;
        if (i < j) prec.block(j * k, i * k, k, k) = blk.transpose();
      }
    }
    Eigen::VectorXd h(nk);
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXd hi = prior_pull;
      for (int j = 0; j < n; ++j) hi += sinv(i, j) * ws.ftr(i, j);
      h.segment(i * k, k) = hi;
    }
    Eigen::MatrixXd l = safe_cholesky(prec, "step_b: joint precision");
    Eigen::VectorXd mu = h;
    chol_solve_in_place(l, mu);
    Eigen::VectorXd draw = sample_mvn_prec_chol(mu, l, rng);
    for (int i = 0; i < n; ++i) state.b.row(i) = draw.segment(i * k, k).transpose();
    return;
  }

  // Blocked sweep: each b_i from its exact conditional given the others.
  for (int i = 0; i < n; ++i) {
    Eigen::MatrixXd pii = sinv(i, i) * ws.g_upper(i, i) + dbinv;
    Eigen::VectorXd hi = prior_pull + sinv(i, i) * ws.ftr(i, i);
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      hi += sinv(i, j) * ws.ftr(i, j);
      if (i < j)
        hi.noalias() -= sinv(i, j) * (ws.g_upper(i, j) * state.b.row(j).transpose());
      else
        hi.noalias() -=
            sinv(i, j) * (ws.g_upper(j, i).transpose() * state.b.row(j).transpose());
    }
    Eigen::MatrixXd l = safe_cholesky(pii, "step_b: blocked precision");
    Eigen::VectorXd mu = hi;
    chol_solve_in_place(l, mu);
    state.b.row(i) = sample_mvn_prec_chol(mu, l, rng).transpose();
  }
}

void gibbs_step_bbar(ChainState& state, const HyperParams& hp, RngStream& rng) {
  const int n = static_cast<int>(state.b.rows());
  Eigen::MatrixXd dbinv = spd_inverse(state.delta_b, "step_bbar: delta_b");
  Eigen::MatrixXd dbbar_inv = spd_inverse(hp.delta_bbar, "step_bbar: delta_bbar");
  Eigen::MatrixXd prec = dbbar_inv + n * dbinv;
  Eigen::VectorXd rhs =
      dbbar_inv * hp.bbar_bar + dbinv * state.b.colwise().sum().transpose();
  Eigen::MatrixXd l = safe_cholesky(prec, "step_bbar: precision");
  Eigen::VectorXd mu = rhs;
  chol_solve_in_place(l, mu);
  state.bbar = sample_mvn_prec_chol(mu, l, rng);
}

void gibbs_step_delta_b(ChainState& state, const HyperParams& hp, RngStream& rng) {
  const int n = static_cast<int>(state.b.rows());
  const int k = static_cast<int>(state.b.cols());
  Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(k, k);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd dev = state.b.row(i).transpose() - state.bbar;
    scatter.noalias() += dev * dev.transpose();
  }
  SpdMatrix scale(hp.v_b + scatter, "step_delta_b: scale");
  state.delta_b = sample_inverse_wishart(hp.nu_b + n, scale, rng).values();
}

void gibbs_step_sigma(ChainState& state, const SurWorkspace& ws,
                      const HyperParams& hp, RngStream& rng) {
  const Dims& d = ws.dims();
  Eigen::MatrixXd scale = hp.v_sigma;
  if (d.t > 0) {
    Eigen::MatrixXd resid(d.t, d.n);
    for (int i = 0; i < d.n; ++i)
      resid.col(i) =
          ws.response(i) - ws.sys().blocks[i] * state.b.row(i).transpose();
    scale.noalias() += resid.transpose() * resid;
  }
  SpdMatrix spd_scale(scale, "step_sigma: scale");
  state.sigma = sample_inverse_wishart(hp.nu_sigma + d.t, spd_scale, rng).values();
}

ChainState draw_from_prior(const HyperParams& hp, int n, RngStream& rng) {
  const int k = static_cast<int>(hp.bbar_bar.size());
  ChainState st;
  st.bbar = sample_mvn(hp.bbar_bar, SpdMatrix(hp.delta_bbar, "prior: delta_bbar"), rng);
  st.delta_b =
      sample_inverse_wishart(hp.nu_b, SpdMatrix(hp.v_b, "prior: v_b"), rng).values();
  SpdMatrix delta_b_spd(st.delta_b, "prior: delta_b draw");
  st.b.resize(n, k);
  for (int i = 0; i < n; ++i)
    st.b.row(i) = sample_mvn(st.bbar, delta_b_spd, rng).transpose();
  st.sigma =
      sample_inverse_wishart(hp.nu_sigma, SpdMatrix(hp.v_sigma, "prior: v_sigma"), rng)
          .values();
  return st;
}

Eigen::VectorXd draw_responses(const SurSystem& sys, const ChainState& state,
                               RngStream& rng) {
  const Dims& d = sys.dims;
  Eigen::MatrixXd l = safe_cholesky(state.sigma, "draw_responses: sigma");
  std::vector<Eigen::VectorXd> fb(d.n);
  for (int i = 0; i < d.n; ++i) fb[i] = sys.blocks[i] * state.b.row(i).transpose();
  Eigen::VectorXd out(static_cast<long>(d.n) * d.t);
  Eigen::VectorXd z(d.n);
  for (int t = 0; t < d.t; ++t) {
    for (int i = 0; i < d.n; ++i) z(i) = rng.normal();
    Eigen::VectorXd eps = l.triangularView<Eigen::Lower>() * z;
    for (int i = 0; i < d.n; ++i) out(i * d.t + t) = fb[i](t) + eps(i);
  }
  return out;
}

MonitorSet make_monitor_set(const Dims& dims, std::uint64_t seed, int b_elements) {
  MonitorSet ms;
  ms.k = dims.k;
  ms.n = dims.n;
  for (int k = 0; k < dims.k; ++k)
    ms.names.push_back("bbar[" + std::to_string(k) + "]");
  // Names stay comma-free so the three-column trace CSV parses cleanly.
  for (int k = 0; k < dims.k; ++k)
    ms.names.push_back("delta_b[" + std::to_string(k) + "][" + std::to_string(k) + "]");
  for (int i = 0; i < dims.n; ++i)
    for (int j = i; j < dims.n; ++j)
      ms.names.push_back("sigma[" + std::to_string(i) + "][" + std::to_string(j) + "]");
  const long nk = static_cast<long>(dims.n) * dims.k;
  const long want = std::min<long>(b_elements, nk);
  RngStream pick(seed, 0x6D6F6EULL);
  std::set<long> chosen;
  while (static_cast<long>(chosen.size()) < want)
    chosen.insert(static_cast<long>(pick.next_u64() % nk));
  for (long flat : chosen) {
    ms.b_rows.push_back(static_cast<int>(flat / dims.k));
    ms.b_cols.push_back(static_cast<int>(flat % dims.k));
    ms.names.push_back("b[" + std::to_string(ms.b_rows.back()) + "][" +
                       std::to_string(ms.b_cols.back()) + "]");
  }
  return ms;
}

std::vector<double> extract_monitors(const ChainState& state, const MonitorSet& ms) {
  std::vector<double> out;
  out.reserve(ms.names.size());
  for (int k = 0; k < ms.k; ++k) out.push_back(state.bbar(k));
  for (int k = 0; k < ms.k; ++k) out.push_back(state.delta_b(k, k));
  for (int i = 0; i < ms.n; ++i)
    for (int j = i; j < ms.n; ++j) out.push_back(state.sigma(i, j));
  for (std::size_t m = 0; m < ms.b_rows.size(); ++m)
    out.push_back(state.b(ms.b_rows[m], ms.b_cols[m]));
  return out;
}

namespace {

ChainState initial_state(const SurSystem& sys, const SurWorkspace& ws,
                         const HyperParams& hp) {
  const Dims& d = sys.dims;
  ChainState st;
  st.bbar = hp.bbar_bar;
  st.delta_b = hp.nu_b > d.k + 1
                   ? Eigen::MatrixXd(hp.v_b / (hp.nu_b - d.k - 1))
                   : Eigen::MatrixXd(Eigen::MatrixXd::Identity(d.k, d.k));
  st.b = Eigen::MatrixXd::Zero(d.n, d.k);
  if (d.t == 0) {
    for (int i = 0; i < d.n; ++i) st.b.row(i) = hp.bbar_bar.transpose();
    st.sigma = hp.nu_sigma > d.n + 1
                   ? Eigen::MatrixXd(hp.v_sigma / (hp.nu_sigma - d.n - 1))
                   : Eigen::MatrixXd(Eigen::MatrixXd::Identity(d.n, d.n));
    return st;
  }
  // Per-asset ridge start; sigma from its residuals.
  Eigen::MatrixXd resid(d.t, d.n);
  for (int i = 0; i < d.n; ++i) {
    Eigen::MatrixXd gi =
        ws.g_upper(i, i) + Eigen::MatrixXd::Identity(d.k, d.k);
    Eigen::LLT<Eigen::MatrixXd> llt(gi);
    Eigen::VectorXd bi = llt.solve(ws.ftr(i, i));
    st.b.row(i) = bi.transpose();
    resid.col(i) = ws.response(i) - sys.blocks[i] * bi;
  }
  st.bbar = st.b.colwise().mean().transpose();
  st.sigma = resid.transpose() * resid / static_cast<double>(d.t) +
             1e-6 * Eigen::MatrixXd::Identity(d.n, d.n);
  return st;
}

}  // namespace

PosteriorDraws run_chain(const SurSystem& sys, const HyperParams& hp,
                         const SamplerConfig& cfg) {
  const Dims& d = sys.dims;
  hp.validate(d.n, d.k);
  if (cfg.n_burn < 0 || cfg.n_burn >= cfg.n_total)
    throw ConfigError("run_chain: need 0 <= n_burn < n_total");
  const long nk = static_cast<long>(d.n) * d.k;
  if (cfg.retention == Retention::kSummary && nk > 8000)
    throw ConfigError("run_chain: summary retention caps N*K at 8000 (got " +
                      std::to_string(nk) + "); reduce the predictor set");

  SurWorkspace ws(sys);
  ChainState state = initial_state(sys, ws, hp);
  RngStream rng(cfg.seed, 0);

  PosteriorDraws out;
  out.retention = cfg.retention;
  out.meta = {cfg.n_total, cfg.n_burn, cfg.seed, d, sys.window_start_month,
              sys.window_end_month};
  out.monitor_set = make_monitor_set(d, cfg.seed, cfg.monitored_b_elements);
  out.monitor_chains.assign(out.monitor_set.names.size(), {});
  const int retained = cfg.n_total - cfg.n_burn;
  for (auto& chain : out.monitor_chains) chain.reserve(retained);
  if (cfg.retention == Retention::kFull) out.draws.reserve(retained);

  // Streaming moments of vec(B) (asset-major), Welford update.
  Eigen::VectorXd b_run_mean = Eigen::VectorXd::Zero(nk);
  Eigen::MatrixXd b_m2 = Eigen::MatrixXd::Zero(nk, nk);
  Eigen::VectorXd bbar_sum = Eigen::VectorXd::Zero(d.k);
  Eigen::MatrixXd delta_b_sum = Eigen::MatrixXd::Zero(d.k, d.k);
  Eigen::MatrixXd sigma_sum = Eigen::MatrixXd::Zero(d.n, d.n);
  Eigen::VectorXd flat(nk), delta_old(nk), delta_new(nk);
  long m_count = 0;

  for (int iter = 0; iter < cfg.n_total; ++iter) {
    try {
      gibbs_step_b(state, ws, hp, rng, cfg.blocked_threshold);
      gibbs_step_bbar(state, hp, rng);
      gibbs_step_delta_b(state, hp, rng);
      gibbs_step_sigma(state, ws, hp, rng);
    } catch (const NumericalError& e) {
      throw NumericalError(
          "run_chain: iteration " + std::to_string(iter + 1) + ": " + e.what(),
          e.pivot_index());
    }
    if (iter < cfg.n_burn) continue;

    if (cfg.retention == Retention::kFull) out.draws.push_back(state);
    std::vector<double> monitors = extract_monitors(state, out.monitor_set);
    for (std::size_t s = 0; s < monitors.size(); ++s)
      out.monitor_chains[s].push_back(monitors[s]);

    for (int i = 0; i < d.n; ++i)
      flat.segment(i * d.k, d.k) = state.b.row(i).transpose();
    ++m_count;
    delta_old = flat - b_run_mean;
    b_run_mean += delta_old / static_cast<double>(m_count);
    delta_new = flat - b_run_mean;
    b_m2.noalias() += delta_old * delta_new.transpose();
    bbar_sum += state.bbar;
    delta_b_sum += state.delta_b;
    sigma_sum += state.sigma;
  }

  const double m = static_cast<double>(m_count);
  out.b_mean.resize(d.n, d.k);
  for (int i = 0; i < d.n; ++i)
    out.b_mean.row(i) = b_run_mean.segment(i * d.k, d.k).transpose();
  out.b_cov = (b_m2 + b_m2.transpose()) / (2.0 * m);
  out.bbar_mean = bbar_sum / m;
  out.delta_b_mean = delta_b_sum / m;
  out.sigma_mean = sigma_sum / m;
  return out;
}

DiagnosticsReport diagnostics(const PosteriorDraws& draws) {
  if (draws.monitor_chains.empty() || draws.monitor_chains[0].size() < 100)
    throw ConfigError("diagnostics: need at least 100 retained draws");
  DiagnosticsReport rep;
  rep.names = draws.monitor_set.names;
  rep.n_draws = static_cast<int>(draws.monitor_chains[0].size());
  double sum_ratio = 0.0;
  double min_ratio = std::numeric_limits<double>::infinity();
  for (const auto& chain : draws.monitor_chains) {
    double e = ess(chain);
    double ratio = e / static_cast<double>(chain.size());
    rep.ess_values.push_back(e);
    rep.ess_ratios.push_back(ratio);
    sum_ratio += ratio;
    if (ratio < min_ratio) min_ratio = ratio;
  }
  rep.min_ratio = min_ratio;
  rep.mean_ratio = sum_ratio / static_cast<double>(rep.ess_ratios.size());
  return rep;
}

std::string trace_csv(const PosteriorDraws& draws) {
  std::string out = "iteration,parameter,value\n";
  const int m = draws.monitor_chains.empty()
                    ? 0
                    : static_cast<int>(draws.monitor_chains[0].size());
  for (int t = 0; t < m; ++t) {
    const std::string iter = std::to_string(draws.meta.n_burn + t + 1);
    for (std::size_t s = 0; s < draws.monitor_set.names.size(); ++s) {
      out += iter;
      out += ',';
      out += draws.monitor_set.names[s];
      out += ',';
      out += format_double(draws.monitor_chains[s][t]);
      out += '\n';
    }
  }
  return out;
}

std::string diagnostics_json(const DiagnosticsReport& report) {
  ordered_json j;
  j["n_draws"] = report.n_draws;
  j["min_ess_ratio"] = report.min_ratio;
  j["mean_ess_ratio"] = report.mean_ratio;
  ordered_json params = ordered_json::object();
  for (std::size_t s = 0; s < report.names.size(); ++s) {
    params[report.names[s]] = {{"ess", report.ess_values[s]},
                               {"ess_ratio", report.ess_ratios[s]}};
  }
  j["parameters"] = std::move(params);
  return j.dump(2) + "\n";
}

namespace {

ordered_json json_from_vector(const Eigen::VectorXd& v) {
  ordered_json arr = ordered_json::array();
  for (int i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

ordered_json json_from_matrix(const Eigen::MatrixXd& m) {
  ordered_json rows = ordered_json::array();
  for (int i = 0; i < m.rows(); ++i) {
    ordered_json row = ordered_json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::VectorXd vector_from_json(const ordered_json& j, const std::string& name) {
  if (!j.is_array()) throw DataError("model file: '" + name + "' must be an array");
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(i) = j[i].get<double>();
  return v;
}

Eigen::MatrixXd matrix_from_json(const ordered_json& j, const std::string& name) {
  if (!j.is_array())
    throw DataError("model file: '" + name + "' must be an array of rows");
  const std::size_t rows = j.size();
  std::size_t cols = rows == 0 ? 0 : j[0].size();
  Eigen::MatrixXd m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    if (j[i].size() != cols)
      throw DataError("model file: ragged rows in '" + name + "'");
    for (std::size_t c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
  }
  return m;
}

}  // namespace

FittedModel make_fitted_model(const PosteriorDraws& draws, const SurSystem& sys,
                              const HyperParams& hp, PriorSetting setting,
                              const std::vector<std::string>& asset_ids,
                              const std::vector<std::string>& char_ids,
                              const std::vector<std::string>& macro_ids) {
  FittedModel m;
  m.dims = sys.dims;
  m.prior_setting = setting;
  m.hp = hp;
  m.sampler.n_total = draws.meta.n_total;
  m.sampler.n_burn = draws.meta.n_burn;
  m.sampler.seed = draws.meta.seed;
  m.sampler.retention = draws.retention;
  m.b_mean = draws.b_mean;
  m.b_cov = draws.b_cov;
  m.sigma_mean = draws.sigma_mean;
  m.bbar_mean = draws.bbar_mean;
  m.delta_b_mean = draws.delta_b_mean;
  m.macro_map = sys.macro_map;
  m.asset_ids = asset_ids;
  m.char_ids = char_ids;
  m.macro_ids = macro_ids;
  m.window_start_month = sys.window_start_month;
  m.window_end_month = sys.window_end_month;
  return m;
}

std::string fitted_model_to_json(const FittedModel& model) {
  ordered_json j;
  j["format"] = "bhport-model-v1";
  j["dims"] = {{"n", model.dims.n}, {"t", model.dims.t}, {"k", model.dims.k},
               {"p", model.dims.p}, {"q", model.dims.q}};
  j["prior"] = {{"setting", prior_setting_name(model.prior_setting)},
                {"bbar_bar", json_from_vector(model.hp.bbar_bar)},
                {"delta_bbar", json_from_matrix(model.hp.delta_bbar)},
                {"nu_b", model.hp.nu_b},
                {"v_b", json_from_matrix(model.hp.v_b)},
                {"nu_sigma", model.hp.nu_sigma},
                {"v_sigma", json_from_matrix(model.hp.v_sigma)}};
  j["sampler"] = {{"n_total", model.sampler.n_total},
                  {"n_burn", model.sampler.n_burn},
                  {"seed", model.sampler.seed},
                  {"blocked_threshold", model.sampler.blocked_threshold},
                  {"retention",
                   model.sampler.retention == Retention::kFull ? "full" : "summary"},
                  {"monitored_b_elements", model.sampler.monitored_b_elements}};
  j["posterior"] = {{"b_mean", json_from_matrix(model.b_mean)},
                    {"b_cov", json_from_matrix(model.b_cov)},
                    {"bbar_mean", json_from_vector(model.bbar_mean)},
                    {"delta_b_mean", json_from_matrix(model.delta_b_mean)},
                    {"sigma_mean", json_from_matrix(model.sigma_mean)}};
  j["standardization"] = {{"macros_standardized", model.macro_map.enabled},
                          {"macro_mean", json_from_vector(model.macro_map.mean)},
                          {"macro_sd", json_from_vector(model.macro_map.sd)}};
  j["ids"] = {{"assets", model.asset_ids},
              {"chars", model.char_ids},
              {"macros", model.macro_ids}};
  j["window"] = {{"start", format_month(model.window_start_month)},
                 {"end", format_month(model.window_end_month)}};
  return j.dump(2) + "\n";
}

FittedModel fitted_model_from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw DataError(std::string("model file: invalid JSON: ") + e.what());
  }
  try {
    FittedModel m;
    if (j.at("format") != "bhport-model-v1")
      throw DataError("model file: unknown format tag");
    const auto& dims = j.at("dims");
    m.dims.n = dims.at("n").get<int>();
    m.dims.t = dims.at("t").get<int>();
    m.dims.k = dims.at("k").get<int>();
    m.dims.p = dims.at("p").get<int>();
    m.dims.q = dims.at("q").get<int>();
    const auto& prior = j.at("prior");
    m.prior_setting = prior_setting_from_name(prior.at("setting").get<std::string>());
    m.hp.bbar_bar = vector_from_json(prior.at("bbar_bar"), "bbar_bar");
    m.hp.delta_bbar = matrix_from_json(prior.at("delta_bbar"), "delta_bbar");
    m.hp.nu_b = prior.at("nu_b");
    m.hp.v_b = matrix_from_json(prior.at("v_b"), "v_b");
    m.hp.nu_sigma = prior.at("nu_sigma");
    m.hp.v_sigma = matrix_from_json(prior.at("v_sigma"), "v_sigma");
    const auto& sampler = j.at("sampler");
    m.sampler.n_total = sampler.at("n_total");
    m.sampler.n_burn = sampler.at("n_burn");
    m.sampler.seed = sampler.at("seed").get<std::uint64_t>();
    m.sampler.blocked_threshold = sampler.at("blocked_threshold");
    m.sampler.retention =
        sampler.at("retention") == "full" ? Retention::kFull : Retention::kSummary;
    m.sampler.monitored_b_elements = sampler.at("monitored_b_elements");
    const auto& post = j.at("posterior");
    m.b_mean = matrix_from_json(post.at("b_mean"), "b_mean");
    m.b_cov = matrix_from_json(post.at("b_cov"), "b_cov");
    m.bbar_mean = vector_from_json(post.at("bbar_mean"), "bbar_mean");
    m.delta_b_mean = matrix_from_json(post.at("delta_b_mean"), "delta_b_mean");
    m.sigma_mean = matrix_from_json(post.at("sigma_mean"), "sigma_mean");
    const auto& stdz = j.at("standardization");
    m.macro_map.enabled = stdz.at("macros_standardized");
    m.macro_map.mean = vector_from_json(stdz.at("macro_mean"), "macro_mean");
    m.macro_map.sd = vector_from_json(stdz.at("macro_sd"), "macro_sd");
    const auto& ids = j.at("ids");
    m.asset_ids = ids.at("assets").get<std::vector<std::string>>();
    m.char_ids = ids.at("chars").get<std::vector<std::string>>();
    m.macro_ids = ids.at("macros").get<std::vector<std::string>>();
    m.window_start_month =
        parse_month(j.at("window").at("start").get<std::string>(), "model file", 0);
    m.window_end_month =
        parse_month(j.at("window").at("end").get<std::string>(), "model file", 0);
    return m;
  } catch (const ordered_json::exception& e) {
    throw DataError(std::string("model file: missing or malformed field: ") +
                    e.what());
  }
}

}  // namespace bhport
