// Gibbs sampler: conditional-distribution oracles, joint-distribution
// stationarity, determinism, diagnostics, and model serialization.

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "bhport/errors.hpp"
#include "bhport/hierarchical.hpp"
#include "bhport/panel.hpp"
#include "bhport/rng.hpp"
#include "bhport/spd.hpp"
#include "bhport/stats.hpp"

using namespace bhport;

namespace {

// Random small SUR system with fixed regressors and responses.
SurSystem tiny_sur(int n, int k, int t, std::uint64_t seed) {
  RngStream rng(seed, 900);
  SurSystem sys;
  sys.dims = {n, t, k, k - 1, 0};
  sys.blocks.assign(n, Eigen::MatrixXd(t, k));
  for (int i = 0; i < n; ++i) {
    for (int r = 0; r < t; ++r) {
      sys.blocks[i](r, 0) = 1.0;
      for (int c = 1; c < k; ++c) sys.blocks[i](r, c) = rng.uniform(-1.0, 1.0);
    }
  }
  sys.responses.resize(n * t);
  for (int i = 0; i < n * t; ++i) sys.responses(i) = 0.02 * rng.normal();
  sys.macro_map.enabled = false;
  sys.macro_map.mean = Eigen::VectorXd::Zero(0);
  sys.macro_map.sd = Eigen::VectorXd::Zero(0);
  return sys;
}

HyperParams moderate_hp(int n, int k) {
  HyperParams hp;
  hp.bbar_bar = Eigen::VectorXd::Zero(k);
  hp.delta_bbar = 0.04 * Eigen::MatrixXd::Identity(k, k);
  hp.nu_b = k + 4;
  hp.v_b = 0.06 * Eigen::MatrixXd::Identity(k, k);  // E[delta_b] = 0.02 I
  hp.nu_sigma = n + 4;
  hp.v_sigma = 0.03 * Eigen::MatrixXd::Identity(n, n);  // E[sigma] = 0.01 I
  return hp;
}

ChainState fixed_state(int n, int k, std::uint64_t seed) {
  RngStream rng(seed, 901);
  ChainState st;
  st.b.resize(n, k);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j) st.b(i, j) = 0.1 * rng.normal();
  st.bbar.resize(k);
  for (int j = 0; j < k; ++j) st.bbar(j) = 0.05 * rng.normal();
  st.delta_b = 0.02 * Eigen::MatrixXd::Identity(k, k);
  st.delta_b(0, 1) = st.delta_b(1, 0) = 0.005;
  st.sigma = 0.01 * Eigen::MatrixXd::Identity(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) st.sigma(i, j) = 0.002;
  return st;
}

}  // namespace

TEST_CASE("default hyperparameters implement both prior settings") {
  const int n = 25, k = 6;
  HyperParams mild = default_hyperparams(PriorSetting::kMild, n, k);
  CHECK(mild.bbar_bar.size() == k);
  CHECK(mild.bbar_bar.cwiseAbs().maxCoeff() == 0.0);
  CHECK(mild.delta_bbar.isApprox(0.1 * Eigen::MatrixXd::Identity(k, k)));
  CHECK(mild.nu_b == 1001.0 + k);
  CHECK(mild.v_b.isApprox(3.0 * Eigen::MatrixXd::Identity(k, k)));
  CHECK(mild.nu_sigma == n + 2.0);
  CHECK(mild.v_sigma.isApprox(Eigen::MatrixXd::Identity(n, n)));
  // Implied prior mean of delta_b: 3/(nu_b - k - 1) = 0.003 per coordinate,
  // i.e. a cross-asset dispersion of about 0.055 around the common slope.
  const double mild_disp = std::sqrt(3.0 / (mild.nu_b - k - 1.0));
  CHECK(mild_disp == doctest::Approx(0.0548).epsilon(0.01));

  HyperParams tight = default_hyperparams(PriorSetting::kTight, n, k);
  CHECK(tight.nu_b == 5001.0 + k);
  const double tight_disp = std::sqrt(3.0 / (tight.nu_b - k - 1.0));
  CHECK(tight_disp == doctest::Approx(0.0245).epsilon(0.01));

  mild.validate(n, k);
  tight.validate(n, k);
}

TEST_CASE("hyperparameter validation rejects inconsistent shapes") {
  HyperParams hp = default_hyperparams(PriorSetting::kMild, 4, 3);
  CHECK_THROWS_AS(hp.validate(4, 5), ConfigError);
  hp = default_hyperparams(PriorSetting::kMild, 4, 3);
  hp.nu_b = 2.0;  // needs nu_b > k - 1 for a proper prior... and > k+1 for a mean
  CHECK_THROWS_AS(hp.validate(4, 3), ConfigError);
}

TEST_CASE("prior setting names round-trip") {
  CHECK(prior_setting_name(PriorSetting::kMild) == "mild");
  CHECK(prior_setting_name(PriorSetting::kTight) == "tight");
  CHECK(prior_setting_from_name("mild") == PriorSetting::kMild);
  CHECK(prior_setting_from_name("tight") == PriorSetting::kTight);
  CHECK_THROWS_AS(prior_setting_from_name("loose"), ConfigError);
}

TEST_CASE("coefficient step reduces to per-asset least squares under a flat prior") {
  const int n = 2, k = 3, t = 60;
  SurSystem sys = tiny_sur(n, k, t, 41);
  SurWorkspace ws(sys);
  HyperParams hp = moderate_hp(n, k);

  ChainState st = fixed_state(n, k, 42);
  st.delta_b = 1e8 * Eigen::MatrixXd::Identity(k, k);  // flat hierarchy
  st.sigma = Eigen::MatrixXd::Zero(n, n);              // independent assets
  st.sigma(0, 0) = 0.010;
  st.sigma(1, 1) = 0.015;

  // With sigma diagonal and the hierarchy flat, the conditional for b_i is
  // centered on the per-asset OLS estimate.
  std::vector<Eigen::VectorXd> ols(n);
  for (int i = 0; i < n; ++i) {
    ols[i] = (sys.blocks[i].transpose() * sys.blocks[i])
                 .ldlt()
                 .solve(sys.blocks[i].transpose() * sys.response(i));
  }

  RngStream rng(43, 0);
  const int m = 4000;
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(n, k);
  for (int it = 0; it < m; ++it) {
    gibbs_step_b(st, ws, hp, rng);
    sum += st.b;
  }
  Eigen::MatrixXd avg = sum / m;
  for (int i = 0; i < n; ++i) {
    Eigen::MatrixXd cov =
        st.sigma(i, i) *
        (sys.blocks[i].transpose() * sys.blocks[i]).inverse();
    for (int j = 0; j < k; ++j) {
      const double se = std::sqrt(cov(j, j) / m);
      CHECK(std::abs(avg(i, j) - ols[i](j)) < 5 * se + 1e-9);
    }
  }
}

TEST_CASE("coefficient step collapses to the common mean under a tight hierarchy") {
  const int n = 3, k = 2, t = 30;
  SurSystem sys = tiny_sur(n, k, t, 44);
  SurWorkspace ws(sys);
  HyperParams hp = moderate_hp(n, k);
  ChainState st = fixed_state(n, k, 45);
  st.delta_b = 1e-12 * Eigen::MatrixXd::Identity(k, k);
  st.bbar << 0.30, -0.20;

  RngStream rng(46, 0);
  for (int it = 0; it < 50; ++it) {
    gibbs_step_b(st, ws, hp, rng);
    for (int i = 0; i < n; ++i) {
      CHECK(std::abs(st.b(i, 0) - 0.30) < 1e-3);
      CHECK(std::abs(st.b(i, 1) + 0.20) < 1e-3);
    }
  }
}

TEST_CASE("coefficient step matches the exact joint conditional") {
  const int n = 2, k = 2, t = 25;
  SurSystem sys = tiny_sur(n, k, t, 47);
  SurWorkspace ws(sys);
  HyperParams hp = moderate_hp(n, k);
  ChainState st = fixed_state(n, k, 48);

  // Exact conditional: precision P_ij = sigma^{ij} F_i'F_j + 1{i=j} delta^-1,
  // mean P^{-1} h with h_i = sum_j sigma^{ij} F_i'r_j + delta^-1 bbar.
  const int nk = n * k;
  Eigen::MatrixXd sigma_inv = st.sigma.inverse();
  Eigen::MatrixXd delta_inv = st.delta_b.inverse();
  Eigen::MatrixXd prec = Eigen::MatrixXd::Zero(nk, nk);
  Eigen::VectorXd h = Eigen::VectorXd::Zero(nk);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      prec.block(i * k, j * k, k, k) =
          sigma_inv(i, j) * (sys.blocks[i].transpose() * sys.blocks[j]);
      h.segment(i * k, k) +=
          sigma_inv(i, j) * (sys.blocks[i].transpose() * sys.response(j));
    }
    prec.block(i * k, i * k, k, k) += delta_inv;
    h.segment(i * k, k) += delta_inv * st.bbar;
  }
  Eigen::MatrixXd cov = prec.inverse();
  Eigen::VectorXd mean = cov * h;

  auto run_path = [&](int threshold, const char* label) {
    CAPTURE(label);
    RngStream rng(49, threshold);
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(nk);
    Eigen::MatrixXd sum2 = Eigen::MatrixXd::Zero(nk, nk);
    const int burn = 200, m = 6000;
    for (int it = 0; it < burn + m; ++it) {
      gibbs_step_b(st, ws, hp, rng, threshold);
      if (it < burn) continue;
      Eigen::VectorXd v(nk);
      for (int i = 0; i < n; ++i) v.segment(i * k, k) = st.b.row(i).transpose();
      sum += v;
      sum2 += v * v.transpose();
    }
    Eigen::VectorXd avg = sum / m;
    Eigen::MatrixXd second = sum2 / m - avg * avg.transpose();
    for (int a = 0; a < nk; ++a) {
      // Blocked sweeps are serially correlated; allow a generous SE margin.
      const double se = std::sqrt(cov(a, a) / m);
      CHECK(std::abs(avg(a) - mean(a)) < 8 * se + 1e-9);
      CHECK(second(a, a) == doctest::Approx(cov(a, a)).epsilon(0.15));
    }
  };
  run_path(4000, "joint");  // nk = 4 < threshold: joint draw
  run_path(1, "blocked");   // forces the per-asset sweep path
}

TEST_CASE("common-mean step matches its conjugate conditional") {
  const int n = 3, k = 2;
  HyperParams hp = moderate_hp(n, k);
  ChainState st = fixed_state(n, k, 50);

  Eigen::MatrixXd delta_inv = st.delta_b.inverse();
  Eigen::MatrixXd dbar_inv = hp.delta_bbar.inverse();
  Eigen::MatrixXd v = (dbar_inv + n * delta_inv).inverse();
  Eigen::VectorXd bsum = st.b.colwise().sum().transpose();
  Eigen::VectorXd mean = v * (dbar_inv * hp.bbar_bar + delta_inv * bsum);

  RngStream rng(51, 0);
  const int m = 20000;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(k);
  Eigen::MatrixXd sum2 = Eigen::MatrixXd::Zero(k, k);
  for (int it = 0; it < m; ++it) {
    gibbs_step_bbar(st, hp, rng);
    sum += st.bbar;
    sum2 += st.bbar * st.bbar.transpose();
  }
  Eigen::VectorXd avg = sum / m;
  Eigen::MatrixXd second = sum2 / m - avg * avg.transpose();
  for (int a = 0; a < k; ++a) {
    CHECK(std::abs(avg(a) - mean(a)) < 5 * std::sqrt(v(a, a) / m));
    CHECK(second(a, a) == doctest::Approx(v(a, a)).epsilon(0.1));
  }
  CHECK(second(0, 1) == doctest::Approx(v(0, 1)).epsilon(0.35));
}

TEST_CASE("dispersion step matches the inverse-wishart conditional") {
  const int n = 6, k = 2;
  HyperParams hp = moderate_hp(n, k);
  ChainState st = fixed_state(n, k, 52);

  Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(k, k);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd d = st.b.row(i).transpose() - st.bbar;
    scatter += d * d.transpose();
  }
  Eigen::MatrixXd expect = (hp.v_b + scatter) / (hp.nu_b + n - k - 1.0);

  RngStream rng(53, 0);
  const int m = 20000;
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(k, k);
  Eigen::MatrixXd sumsq = Eigen::MatrixXd::Zero(k, k);
  for (int it = 0; it < m; ++it) {
    gibbs_step_delta_b(st, hp, rng);
    sum += st.delta_b;
    sumsq += st.delta_b.cwiseProduct(st.delta_b);
  }
  Eigen::MatrixXd avg = sum / m;
  for (int a = 0; a < k; ++a) {
    for (int b = 0; b < k; ++b) {
      const double sd =
          std::sqrt(sumsq(a, b) / m - avg(a, b) * avg(a, b));
      CHECK(std::abs(avg(a, b) - expect(a, b)) < 5 * sd / std::sqrt(m) + 1e-12);
    }
  }
}

TEST_CASE("dispersion step with zero scatter reproduces the prior scale mean") {
  const int n = 4, k = 2;
  HyperParams hp = moderate_hp(n, k);
  ChainState st = fixed_state(n, k, 54);
  for (int i = 0; i < n; ++i) st.b.row(i) = st.bbar.transpose();

  RngStream rng(55, 0);
  const int m = 20000;
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(k, k);
  for (int it = 0; it < m; ++it) {
    gibbs_step_delta_b(st, hp, rng);
    sum += st.delta_b;
  }
  Eigen::MatrixXd expect = hp.v_b / (hp.nu_b + n - k - 1.0);
  CHECK((sum / m - expect).cwiseAbs().maxCoeff() < 3e-4);
}

TEST_CASE("covariance step matches the inverse-wishart conditional") {
  const int n = 2, k = 2, t = 20;
  SurSystem sys = tiny_sur(n, k, t, 56);
  SurWorkspace ws(sys);
  HyperParams hp = moderate_hp(n, k);
  ChainState st = fixed_state(n, k, 57);

  Eigen::MatrixXd resid(t, n);
  for (int i = 0; i < n; ++i) {
    resid.col(i) = sys.response(i) - sys.blocks[i] * st.b.row(i).transpose();
  }
  Eigen::MatrixXd expect =
      (hp.v_sigma + resid.transpose() * resid) / (hp.nu_sigma + t - n - 1.0);

  RngStream rng(58, 0);
  const int m = 20000;
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd sumsq = Eigen::MatrixXd::Zero(n, n);
  for (int it = 0; it < m; ++it) {
    gibbs_step_sigma(st, ws, hp, rng);
    sum += st.sigma;
    sumsq += st.sigma.cwiseProduct(st.sigma);
  }
  Eigen::MatrixXd avg = sum / m;
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      const double sd = std::sqrt(sumsq(a, b) / m - avg(a, b) * avg(a, b));
      CHECK(std::abs(avg(a, b) - expect(a, b)) < 5 * sd / std::sqrt(m) + 1e-12);
    }
  }
}

TEST_CASE("covariance step without data draws from the prior") {
  const int n = 2, k = 3;
  SurSystem sys = SurSystem::empty(n, k);
  SurWorkspace ws(sys);
  HyperParams hp = moderate_hp(n, k);
  ChainState st = fixed_state(n, k, 59);

  RngStream rng(60, 0);
  const int m = 20000;
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(n, n);
  for (int it = 0; it < m; ++it) {
    gibbs_step_sigma(st, ws, hp, rng);
    sum += st.sigma;
  }
  Eigen::MatrixXd expect = hp.v_sigma / (hp.nu_sigma - n - 1.0);
  CHECK((sum / m - expect).cwiseAbs().maxCoeff() < 5e-4);
}

TEST_CASE("prior draws are reproducible and have prior moments") {
  const int n = 2, k = 2;
  HyperParams hp = moderate_hp(n, k);
  RngStream a(61, 0), b(61, 0);
  ChainState s1 = draw_from_prior(hp, n, a);
  ChainState s2 = draw_from_prior(hp, n, b);
  CHECK(s1.b.cwiseEqual(s2.b).all());
  CHECK(s1.bbar.cwiseEqual(s2.bbar).all());
  CHECK(s1.delta_b.cwiseEqual(s2.delta_b).all());
  CHECK(s1.sigma.cwiseEqual(s2.sigma).all());

  RngStream rng(62, 0);
  const int m = 30000;
  double sum_bbar = 0.0, sum_bbar2 = 0.0, sum_sigma = 0.0, sum_b_var = 0.0;
  for (int it = 0; it < m; ++it) {
    ChainState st = draw_from_prior(hp, n, rng);
    sum_bbar += st.bbar(0);
    sum_bbar2 += st.bbar(0) * st.bbar(0);
    sum_sigma += st.sigma(0, 0);
    sum_b_var += (st.b(0, 0) - st.bbar(0)) * (st.b(0, 0) - st.bbar(0));
  }
  CHECK(std::abs(sum_bbar / m) < 5 * std::sqrt(0.04 / m));
  CHECK(sum_bbar2 / m == doctest::Approx(0.04).epsilon(0.05));
  // E[sigma_00] = v/(nu - n - 1) = 0.03/3; E[(b-bbar)^2] = E[delta_00] = 0.02.
  CHECK(sum_sigma / m == doctest::Approx(0.01).epsilon(0.05));
  CHECK(sum_b_var / m == doctest::Approx(0.02).epsilon(0.08));
}

TEST_CASE("gibbs scan preserves the joint prior-data distribution") {
  // Marginal-conditional vs successive-conditional moments agree.
  const int n = 2, k = 2, t = 3;
  SurSystem sys = tiny_sur(n, k, t, 63);
  HyperParams hp = moderate_hp(n, k);

  const int n_stats = 10;
  auto stats_of = [&](const ChainState& st, const Eigen::VectorXd& r,
                      double* out) {
    out[0] = st.bbar(0);
    out[1] = st.bbar(1);
    out[2] = st.b(0, 0);
    out[3] = st.b(1, 1);
    out[4] = st.delta_b(0, 0);
    out[5] = st.delta_b(0, 1);
    out[6] = st.sigma(0, 0);
    out[7] = st.sigma(0, 1);
    out[8] = r(0);
    out[9] = st.bbar(0) * st.bbar(0);
  };

  const int m = 60000;
  std::vector<std::vector<double>> mc(n_stats, std::vector<double>(m));
  {
    RngStream rng(64, 0);
    double buf[n_stats];
    for (int it = 0; it < m; ++it) {
      ChainState st = draw_from_prior(hp, n, rng);
      Eigen::VectorXd r = draw_responses(sys, st, rng);
      stats_of(st, r, buf);
      for (int s = 0; s < n_stats; ++s) mc[s][it] = buf[s];
    }
  }

  std::vector<std::vector<double>> sc(n_stats, std::vector<double>(m));
  {
    RngStream rng(65, 0);
    SurSystem work = sys;
    SurWorkspace ws(work);
    ChainState st = draw_from_prior(hp, n, rng);
    Eigen::VectorXd r = draw_responses(work, st, rng);
    ws.update_responses(r);
    double buf[n_stats];
    for (int it = 0; it < m; ++it) {
      gibbs_step_b(st, ws, hp, rng);
      gibbs_step_bbar(st, hp, rng);
      gibbs_step_delta_b(st, hp, rng);
      gibbs_step_sigma(st, ws, hp, rng);
      r = draw_responses(work, st, rng);
      ws.update_responses(r);
      stats_of(st, r, buf);
      for (int s = 0; s < n_stats; ++s) sc[s][it] = buf[s];
    }
  }

  for (int s = 0; s < n_stats; ++s) {
    CAPTURE(s);
    const double m1 = mean(mc[s]);
    const double m2 = mean(sc[s]);
    const double v1 = sample_sd(mc[s]) * sample_sd(mc[s]);
    const double v2 = sample_sd(sc[s]) * sample_sd(sc[s]);
    const double se =
        std::sqrt(v1 / m + v2 / ess(sc[s]));
    const double z = (m1 - m2) / se;
    CHECK(std::abs(z) < 4.5);
  }
}

TEST_CASE("chains are deterministic and retention modes agree") {
  SurSystem sys = tiny_sur(3, 3, 40, 66);
  HyperParams hp = moderate_hp(3, 3);
  SamplerConfig cfg;
  cfg.n_total = 500;
  cfg.n_burn = 100;
  cfg.seed = 7;
  cfg.retention = Retention::kFull;

  PosteriorDraws full = run_chain(sys, hp, cfg);
  PosteriorDraws again = run_chain(sys, hp, cfg);
  CHECK(full.b_mean.cwiseEqual(again.b_mean).all());
  CHECK(full.b_cov.cwiseEqual(again.b_cov).all());
  CHECK(full.sigma_mean.cwiseEqual(again.sigma_mean).all());
  for (std::size_t i = 0; i < full.monitor_chains.size(); ++i) {
    CHECK(full.monitor_chains[i] == again.monitor_chains[i]);
  }

  cfg.retention = Retention::kSummary;
  PosteriorDraws summary = run_chain(sys, hp, cfg);
  CHECK(summary.draws.empty());
  CHECK(full.b_mean.cwiseEqual(summary.b_mean).all());
  CHECK(full.b_cov.cwiseEqual(summary.b_cov).all());
  CHECK(full.delta_b_mean.cwiseEqual(summary.delta_b_mean).all());

  SamplerConfig other = cfg;
  other.seed = 8;
  PosteriorDraws diff = run_chain(sys, hp, other);
  CHECK_FALSE(full.b_mean.cwiseEqual(diff.b_mean).all());
}

TEST_CASE("streaming moments match brute-force moments over retained draws") {
  SurSystem sys = tiny_sur(3, 4, 40, 67);
  HyperParams hp = moderate_hp(3, 4);
  SamplerConfig cfg;
  cfg.n_total = 500;
  cfg.n_burn = 100;
  cfg.seed = 9;
  cfg.retention = Retention::kFull;
  PosteriorDraws draws = run_chain(sys, hp, cfg);
  REQUIRE(static_cast<int>(draws.draws.size()) == 400);

  const int nk = 12;
  Eigen::VectorXd mean_bf = Eigen::VectorXd::Zero(nk);
  for (const ChainState& st : draws.draws) {
    for (int i = 0; i < 3; ++i)
      mean_bf.segment(i * 4, 4) += st.b.row(i).transpose();
  }
  mean_bf /= 400.0;
  Eigen::MatrixXd cov_bf = Eigen::MatrixXd::Zero(nk, nk);
  for (const ChainState& st : draws.draws) {
    Eigen::VectorXd v(nk);
    for (int i = 0; i < 3; ++i) v.segment(i * 4, 4) = st.b.row(i).transpose();
    cov_bf += (v - mean_bf) * (v - mean_bf).transpose();
  }
  cov_bf /= 400.0;

  Eigen::VectorXd mean_stream(nk);
  for (int i = 0; i < 3; ++i)
    mean_stream.segment(i * 4, 4) = draws.b_mean.row(i).transpose();
  const double scale = cov_bf.cwiseAbs().maxCoeff();
  CHECK((mean_stream - mean_bf).cwiseAbs().maxCoeff() < 1e-10 * std::max(1.0, scale));
  CHECK((draws.b_cov - cov_bf).cwiseAbs().maxCoeff() < 1e-10 * std::max(1.0, scale));

  // Every retained state is finite with SPD covariance matrices.
  for (const ChainState& st : draws.draws) {
    CHECK(st.b.allFinite());
    CHECK(Eigen::LLT<Eigen::MatrixXd>(st.sigma).info() == Eigen::Success);
    CHECK(Eigen::LLT<Eigen::MatrixXd>(st.delta_b).info() == Eigen::Success);
  }
}

TEST_CASE("sampler configuration is validated") {
  SurSystem sys = tiny_sur(2, 2, 20, 68);
  HyperParams hp = moderate_hp(2, 2);
  SamplerConfig cfg;
  cfg.n_total = 100;
  cfg.n_burn = 100;
  CHECK_THROWS_AS(run_chain(sys, hp, cfg), ConfigError);
  cfg.n_total = 0;
  cfg.n_burn = 0;
  CHECK_THROWS_AS(run_chain(sys, hp, cfg), ConfigError);
}

TEST_CASE("monitor sets are deterministic and in range") {
  Dims dims{5, 40, 6, 3, 1};
  MonitorSet a = make_monitor_set(dims, 123, 50);
  MonitorSet b = make_monitor_set(dims, 123, 50);
  CHECK(a.names == b.names);
  CHECK(a.b_rows == b.b_rows);
  CHECK(a.b_cols == b.b_cols);
  // bbar (k) + delta_b diagonal (k) + sigma upper triangle + monitored B.
  const std::size_t expect = 6 + 6 + 5 * 6 / 2 + std::min(50, 5 * 6);
  CHECK(a.names.size() == expect);
  for (std::size_t i = 0; i < a.b_rows.size(); ++i) {
    CHECK(a.b_rows[i] >= 0);
    CHECK(a.b_rows[i] < 5);
    CHECK(a.b_cols[i] >= 0);
    CHECK(a.b_cols[i] < 6);
  }

  ChainState st = fixed_state(5, 6, 69);
  std::vector<double> vals = extract_monitors(st, a);
  REQUIRE(vals.size() == a.names.size());
  CHECK(vals[0] == st.bbar(0));
  CHECK(vals[6] == st.delta_b(0, 0));
}

TEST_CASE("trace export matches the recorded chains") {
  SurSystem sys = tiny_sur(2, 2, 20, 70);
  HyperParams hp = moderate_hp(2, 2);
  SamplerConfig cfg;
  cfg.n_total = 150;
  cfg.n_burn = 30;
  cfg.seed = 5;
  PosteriorDraws draws = run_chain(sys, hp, cfg);
  const std::string csv = trace_csv(draws);
  REQUIRE(csv.rfind("iteration,parameter,value\n", 0) == 0);

  // Count lines: header + monitors * retained draws.
  const std::size_t lines = std::count(csv.begin(), csv.end(), '\n');
  CHECK(lines == 1 + draws.monitor_set.names.size() * 120);
  // First data line is iteration 31 of the first monitor with its value.
  const std::string expect_prefix =
      "31," + draws.monitor_set.names[0] + "," ;
  CHECK(csv.find(expect_prefix) != std::string::npos);
}

TEST_CASE("diagnostics report effective sample sizes per monitor") {
  SurSystem sys = tiny_sur(2, 2, 30, 71);
  HyperParams hp = moderate_hp(2, 2);
  SamplerConfig cfg;
  cfg.n_total = 400;
  cfg.n_burn = 100;
  cfg.seed = 6;
  PosteriorDraws draws = run_chain(sys, hp, cfg);
  DiagnosticsReport rep = diagnostics(draws);
  CHECK(rep.n_draws == 300);
  CHECK(rep.names.size() == draws.monitor_set.names.size());
  REQUIRE(rep.ess_values.size() == rep.names.size());
  double min_seen = 1e9, sum = 0.0;
  for (std::size_t i = 0; i < rep.ess_values.size(); ++i) {
    CHECK(rep.ess_values[i] >= 1.0);
    CHECK(rep.ess_ratios[i] == doctest::Approx(rep.ess_values[i] / 300.0));
    min_seen = std::min(min_seen, rep.ess_ratios[i]);
    sum += rep.ess_ratios[i];
  }
  CHECK(rep.min_ratio == doctest::Approx(min_seen));
  CHECK(rep.mean_ratio == doctest::Approx(sum / rep.ess_ratios.size()));

  const std::string js = diagnostics_json(rep);
  CHECK(js.find("\"min_ess_ratio\"") != std::string::npos);

  SamplerConfig tiny = cfg;
  tiny.n_total = 120;
  tiny.n_burn = 60;
  PosteriorDraws few = run_chain(sys, hp, tiny);
  CHECK_THROWS_AS(diagnostics(few), ConfigError);
}

TEST_CASE("fitted models serialize losslessly") {
  PanelDataset ds;
  ds.dates = {2400, 2401, 2402, 2403, 2404, 2405};
  ds.asset_ids = {"x", "y"};
  ds.char_ids = {"c"};
  ds.macro_ids = {"m"};
  ds.returns = Eigen::MatrixXd::Random(6, 2) * 0.05;
  ds.chars = {Eigen::MatrixXd::Random(6, 2)};
  ds.macros = Eigen::MatrixXd::Random(6, 1);
  SurSystem sys = build_sur(ds, 2400, 2405, true);
  HyperParams hp = moderate_hp(2, sys.dims.k);
  SamplerConfig cfg;
  cfg.n_total = 200;
  cfg.n_burn = 50;
  cfg.seed = 11;
  PosteriorDraws draws = run_chain(sys, hp, cfg);
  FittedModel model = make_fitted_model(draws, sys, hp, PriorSetting::kMild,
                                        ds.asset_ids, ds.char_ids, ds.macro_ids);

  const std::string text = fitted_model_to_json(model);
  FittedModel back = fitted_model_from_json(text);
  CHECK(back.dims.n == model.dims.n);
  CHECK(back.dims.k == model.dims.k);
  CHECK(back.dims.p == model.dims.p);
  CHECK(back.dims.q == model.dims.q);
  CHECK(back.prior_setting == model.prior_setting);
  CHECK(back.b_mean.cwiseEqual(model.b_mean).all());
  CHECK(back.b_cov.cwiseEqual(model.b_cov).all());
  CHECK(back.sigma_mean.cwiseEqual(model.sigma_mean).all());
  CHECK(back.bbar_mean.cwiseEqual(model.bbar_mean).all());
  CHECK(back.delta_b_mean.cwiseEqual(model.delta_b_mean).all());
  CHECK(back.macro_map.enabled == model.macro_map.enabled);
  CHECK(back.macro_map.mean.cwiseEqual(model.macro_map.mean).all());
  CHECK(back.macro_map.sd.cwiseEqual(model.macro_map.sd).all());
  CHECK(back.asset_ids == model.asset_ids);
  CHECK(back.char_ids == model.char_ids);
  CHECK(back.macro_ids == model.macro_ids);
  CHECK(back.window_start_month == model.window_start_month);
  CHECK(back.window_end_month == model.window_end_month);
  CHECK(back.sampler.n_total == model.sampler.n_total);
  CHECK(back.sampler.seed == model.sampler.seed);
  CHECK(back.hp.nu_b == model.hp.nu_b);
  CHECK(back.hp.v_b.cwiseEqual(model.hp.v_b).all());

  CHECK_THROWS_AS(fitted_model_from_json("{ not json"), DataError);
  CHECK_THROWS_AS(fitted_model_from_json("{\"format\":\"other\"}"), DataError);
}

TEST_CASE("posterior concentrates around synthetic truth") {
  // Small end-to-end recovery: strong signal, modest dimensions.
  const int n = 4, p = 1, q = 1, t_total = 160;
  Eigen::MatrixXd b_true(n, 4);
  b_true << 0.010, 0.030, -0.020, 0.015,
            0.005, 0.025, -0.015, 0.010,
            0.012, 0.035, -0.025, 0.020,
            0.008, 0.028, -0.018, 0.012;
  Eigen::MatrixXd sigma_true = 0.0016 * Eigen::MatrixXd::Identity(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) sigma_true(i, j) = 0.0004;

  RngStream rng(72, 0);
  SurSystem sys;
  sys.dims = {n, t_total, 4, p, q};
  sys.blocks.assign(n, Eigen::MatrixXd(t_total, 4));
  Eigen::MatrixXd chol = safe_cholesky(sigma_true, "test");
  sys.responses.resize(n * t_total);
  Eigen::MatrixXd eps(t_total, n);
  for (int r = 0; r < t_total; ++r) {
    Eigen::VectorXd zvec(n);
    for (int i = 0; i < n; ++i) zvec(i) = rng.normal();
    eps.row(r) = (chol * zvec).transpose();
  }
  for (int i = 0; i < n; ++i) {
    for (int r = 0; r < t_total; ++r) {
      Eigen::VectorXd z(1), x(1);
      z << rng.uniform(-1.0, 1.0);
      x << rng.normal();
      sys.blocks[i].row(r) = build_features(z, x).transpose();
      sys.responses(i * t_total + r) =
          sys.blocks[i].row(r).dot(b_true.row(i)) + eps(r, i);
    }
  }
  sys.macro_map.enabled = false;

  HyperParams hp = default_hyperparams(PriorSetting::kMild, n, 4);
  SamplerConfig cfg;
  cfg.n_total = 1200;
  cfg.n_burn = 400;
  cfg.seed = 13;
  cfg.retention = Retention::kSummary;
  PosteriorDraws draws = run_chain(sys, hp, cfg);

  int within = 0, total = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 4; ++j) {
      const double sd = std::sqrt(draws.b_cov(i * 4 + j, i * 4 + j));
      if (std::abs(draws.b_mean(i, j) - b_true(i, j)) < 4 * sd) ++within;
      ++total;
    }
  }
  CHECK(within >= total - 1);  // allow one 4-sd miss out of 16
  for (int i = 0; i < n; ++i) {
    CHECK(draws.sigma_mean(i, i) ==
          doctest::Approx(sigma_true(i, i)).epsilon(0.35));
  }
}
