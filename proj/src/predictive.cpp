#include "bhport/predictive.hpp"

#include <cmath>

#include "bhport/errors.hpp"
#include "bhport/stats.hpp"

namespace bhport {

PredictiveMoments predict_moments(const FittedModel& model,
                                  const std::vector<Eigen::VectorXd>& features) {
  const int n = model.dims.n;
  const int k = model.dims.k;
  if (static_cast<int>(features.size()) != n)
    throw ConfigError("predict_moments: need one feature vector per asset");
  for (const auto& f : features)
    if (f.size() != k)
      throw ConfigError("predict_moments: feature length " +
                        std::to_string(f.size()) + " does not match fitted K = " +
                        std::to_string(k));

  PredictiveMoments out;
  out.mean.resize(n);
  for (int i = 0; i < n; ++i)
    out.mean(i) = features[i].dot(model.b_mean.row(i).transpose());

  // cv.col(j) = Cov(vec B, b_j) f_j, then cov_param_ij = f_i' cv rows of i.
  Eigen::MatrixXd cv(static_cast<long>(n) * k, n);
  for (int j = 0; j < n; ++j)
    cv.col(j) = model.b_cov.middleCols(j * k, k) * features[j];
  out.cov_param.resize(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      out.cov_param(i, j) = features[i].dot(cv.col(j).segment(i * k, k));
  out.cov_param = 0.5 * (out.cov_param + out.cov_param.transpose()).eval();
  out.cov_resid = model.sigma_mean;
  out.cov_total = out.cov_param + out.cov_resid;
  return out;
}

IntervalForecast predictive_interval(const PredictiveMoments& m, double level,
                                     bool use_total) {
  const double z = z_for_level(level);
  const Eigen::MatrixXd& cov = use_total ? m.cov_total : m.cov_param;
  const int n = static_cast<int>(m.mean.size());
  IntervalForecast out;
  out.level = level;
  out.lower.resize(n);
  out.upper.resize(n);
  for (int i = 0; i < n; ++i) {
    double var = cov(i, i);
    double sd = var > 0.0 ? std::sqrt(var) : 0.0;
    out.lower(i) = m.mean(i) - z * sd;
    out.upper(i) = m.mean(i) + z * sd;
  }
  return out;
}

double r2_oos(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& actual,
              const Eigen::MatrixXd& benchmark) {
  if (pred.rows() != actual.rows() || pred.cols() != actual.cols() ||
      benchmark.rows() != actual.rows() || benchmark.cols() != actual.cols())
    throw ConfigError("r2_oos: shape mismatch");
  double sse_pred = (pred - actual).squaredNorm();
  double sse_bench = (benchmark - actual).squaredNorm();
  if (sse_bench == 0.0)
    throw MetricError("r2_oos: benchmark matches actuals exactly; R^2 undefined");
  return 1.0 - sse_pred / sse_bench;
}

double coverage(const std::vector<IntervalForecast>& intervals,
                const Eigen::MatrixXd& actual) {
  if (static_cast<long>(intervals.size()) != actual.rows())
    throw ConfigError("coverage: interval count does not match rows of actuals");
  long total = 0, inside = 0;
  for (long t = 0; t < actual.rows(); ++t) {
    const auto& iv = intervals[t];
    if (iv.lower.size() != actual.cols())
      throw ConfigError("coverage: interval width does not match columns");
    for (long i = 0; i < actual.cols(); ++i) {
      ++total;
      if (iv.lower(i) < actual(t, i) && actual(t, i) < iv.upper(i)) ++inside;
    }
  }
  if (total == 0) throw ConfigError("coverage: empty input");
  return static_cast<double>(inside) / static_cast<double>(total);
}

double interval_length(const std::vector<IntervalForecast>& intervals) {
  long total = 0;
  double sum = 0.0;
  for (const auto& iv : intervals) {
    for (long i = 0; i < iv.lower.size(); ++i) {
      sum += iv.upper(i) - iv.lower(i);
      ++total;
    }
  }
  if (total == 0) throw ConfigError("interval_length: empty input");
  return sum / static_cast<double>(total);
}

}  // namespace bhport
