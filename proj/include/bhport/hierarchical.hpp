#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "bhport/panel.hpp"
#include "bhport/rng.hpp"

namespace bhport {

enum class PriorSetting { kMild, kTight };

std::string prior_setting_name(PriorSetting s);
PriorSetting prior_setting_from_name(const std::string& name);

// Hierarchy: b_i ~ N(bbar, delta_b); bbar ~ N(bbar_bar, delta_bbar);
// delta_b ~ IW(nu_b, v_b); sigma ~ IW(nu_sigma, v_sigma).
struct HyperParams {
  Eigen::VectorXd bbar_bar;    // K
  Eigen::MatrixXd delta_bbar;  // K x K
  double nu_b = 0.0;
  Eigen::MatrixXd v_b;  // K x K
  double nu_sigma = 0.0;
  Eigen::MatrixXd v_sigma;  // N x N

  void validate(int n, int k) const;
};

// mild: bbar_bar = 0, delta_bbar = 0.1 I, nu_b = 1001 + K, v_b = 3 I;
// tight: same with nu_b = 5001 + K. Both: nu_sigma = N + 2, v_sigma = I
// (the residual-covariance prior is a default, not an anchored value).
HyperParams default_hyperparams(PriorSetting setting, int n, int k);

struct ChainState {
  Eigen::MatrixXd b;        // N x K, row i is b_i
  Eigen::VectorXd bbar;     // K
  Eigen::MatrixXd delta_b;  // K x K
  Eigen::MatrixXd sigma;    // N x N
};

// Per-window precomputations shared by every iteration: cross-products
// G_ij = f_i' f_j (stored for i <= j) and ftr_ij = f_i' r_j. Responses can be
// swapped without touching G (the regressors are unchanged).
class SurWorkspace {
 public:
  explicit SurWorkspace(const SurSystem& sys);

  const SurSystem& sys() const { return *sys_; }
  const Dims& dims() const { return sys_->dims; }

  // Requires i <= j; the (j, i) block is the transpose.
  const Eigen::MatrixXd& g_upper(int i, int j) const {
    return g_[static_cast<std::size_t>(i) * dims().n + j];
  }
  const Eigen::VectorXd& ftr(int i, int j) const {
    return ftr_[static_cast<std::size_t>(i) * dims().n + j];
  }
  const Eigen::VectorXd& response(int i) const { return responses_[i]; }

  void update_responses(const Eigen::VectorXd& stacked);

 private:
  const SurSystem* sys_;
  std::vector<Eigen::MatrixXd> g_;
  std::vector<Eigen::VectorXd> ftr_;
  std::vector<Eigen::VectorXd> responses_;
};

// One conditional update each. step_b draws all of B jointly through the
// N*K-dimensional precision Cholesky; above blocked_threshold it switches to
// exact per-asset blocked sweeps with identical invariant distribution.
void gibbs_step_b(ChainState& state, const SurWorkspace& ws, const HyperParams& hp,
                  RngStream& rng, int blocked_threshold = 4000);
void gibbs_step_bbar(ChainState& state, const HyperParams& hp, RngStream& rng);
void gibbs_step_delta_b(ChainState& state, const HyperParams& hp, RngStream& rng);
void gibbs_step_sigma(ChainState& state, const SurWorkspace& ws,
                      const HyperParams& hp, RngStream& rng);

// Independent draw from the prior (used by initialization checks and the
// joint-distribution stationarity test).
ChainState draw_from_prior(const HyperParams& hp, int n, RngStream& rng);

// Draws stacked responses R = F*B + E with error rows iid N(0, sigma).
Eigen::VectorXd draw_responses(const SurSystem& sys, const ChainState& state,
                               RngStream& rng);

enum class Retention {
  kFull,     // keep every retained ChainState
  kSummary,  // keep streaming moments only (large fits)
};

struct SamplerConfig {
  int n_total = 3000;
  int n_burn = 1000;
  std::uint64_t seed = 0;
  int blocked_threshold = 4000;
  Retention retention = Retention::kFull;
  int monitored_b_elements = 50;
};

// Scalar series tracked for convergence diagnostics: all of bbar, the
// diagonal of delta_b, the upper triangle of sigma, and a seeded random
// subset of B elements.
struct MonitorSet {
  std::vector<std::string> names;
  std::vector<int> b_rows;  // parallel arrays for the monitored B elements
  std::vector<int> b_cols;
  int k = 0;
  int n = 0;
};

MonitorSet make_monitor_set(const Dims& dims, std::uint64_t seed, int b_elements);
std::vector<double> extract_monitors(const ChainState& state, const MonitorSet& ms);

struct DrawsMeta {
  int n_total = 0;
  int n_burn = 0;
  std::uint64_t seed = 0;
  Dims dims;
  int window_start_month = 0;
  int window_end_month = 0;
};

// Retained posterior draws plus streaming summaries. b_mean / b_cov flatten B
// asset-major (index i*K + k); b_cov uses the population (1/M) normalization.
struct PosteriorDraws {
  Retention retention = Retention::kFull;
  std::vector<ChainState> draws;  // full mode only
  Eigen::MatrixXd b_mean;         // N x K
  Eigen::MatrixXd b_cov;          // NK x NK
  Eigen::VectorXd bbar_mean;      // K
  Eigen::MatrixXd delta_b_mean;   // K x K
  Eigen::MatrixXd sigma_mean;     // N x N
  MonitorSet monitor_set;
  std::vector<std::vector<double>> monitor_chains;  // per name, length M
  DrawsMeta meta;

  int n_retained() const { return meta.n_total - meta.n_burn; }
};

// Runs the four-block scan n_total times from a data-informed start and
// retains the final n_total - n_burn states. Deterministic given (sys, hp,
// cfg). Numerical failures are annotated with the iteration number.
PosteriorDraws run_chain(const SurSystem& sys, const HyperParams& hp,
                         const SamplerConfig& cfg);

struct DiagnosticsReport {
  std::vector<std::string> names;
  std::vector<double> ess_values;
  std::vector<double> ess_ratios;
  double min_ratio = 0.0;
  double mean_ratio = 0.0;
  int n_draws = 0;
};

// ESS per monitored scalar (needs >= 100 retained draws).
DiagnosticsReport diagnostics(const PosteriorDraws& draws);

// Trace export: `iteration,parameter,value` with absolute 1-based iteration
// numbers (burn-in iterations are not exported).
std::string trace_csv(const PosteriorDraws& draws);
std::string diagnostics_json(const DiagnosticsReport& report);

// Everything the predictive module needs, serializable without raw draws.
struct FittedModel {
  Dims dims;
  PriorSetting prior_setting = PriorSetting::kMild;
  HyperParams hp;
  SamplerConfig sampler;
  Eigen::MatrixXd b_mean;   // N x K
  Eigen::MatrixXd b_cov;    // NK x NK
  Eigen::MatrixXd sigma_mean;
  Eigen::VectorXd bbar_mean;
  Eigen::MatrixXd delta_b_mean;
  MacroMap macro_map;
  std::vector<std::string> asset_ids, char_ids, macro_ids;
  int window_start_month = 0;
  int window_end_month = 0;
};

FittedModel make_fitted_model(const PosteriorDraws& draws, const SurSystem& sys,
                              const HyperParams& hp, PriorSetting setting,
                              const std::vector<std::string>& asset_ids,
                              const std::vector<std::string>& char_ids,
                              const std::vector<std::string>& macro_ids);
std::string fitted_model_to_json(const FittedModel& model);
FittedModel fitted_model_from_json(const std::string& text);

}  // namespace bhport
