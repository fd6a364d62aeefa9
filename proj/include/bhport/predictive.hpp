#pragma once

#include <Eigen/Dense>
#include <vector>

#include "bhport/hierarchical.hpp"

namespace bhport {

// One-month-ahead posterior predictive moments. cov_param carries parameter
// uncertainty (congruence of the posterior covariance of B with the feature
// vectors); cov_resid is the posterior mean of sigma; cov_total is their sum.
struct PredictiveMoments {
  Eigen::VectorXd mean;        // N
  Eigen::MatrixXd cov_param;   // N x N
  Eigen::MatrixXd cov_resid;   // N x N
  Eigen::MatrixXd cov_total;   // N x N
};

struct IntervalForecast {
  Eigen::VectorXd lower;  // N
  Eigen::VectorXd upper;  // N
  double level = 0.95;
};

// mean_i = f_i' E[b_i]; cov_param_ij = f_i' Cov(b_i, b_j) f_j with the draw
// covariance of B (population normalization over retained draws).
PredictiveMoments predict_moments(const FittedModel& model,
                                  const std::vector<Eigen::VectorXd>& features);

// Bounds mean_i +/- z * sd_i; sd from cov_total by default, cov_param when
// use_total is off. The 95% multiplier is exactly 1.96.
IntervalForecast predictive_interval(const PredictiveMoments& m, double level,
                                     bool use_total = true);

// Pooled out-of-sample R^2 against a benchmark forecast.
double r2_oos(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& actual,
              const Eigen::MatrixXd& benchmark);

// Fraction of cells with lower < actual < upper (strict).
double coverage(const std::vector<IntervalForecast>& intervals,
                const Eigen::MatrixXd& actual);

// Mean interval width over all cells.
double interval_length(const std::vector<IntervalForecast>& intervals);

}  // namespace bhport
