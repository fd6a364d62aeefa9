#include "bhport/spd.hpp"

#include <cmath>

#include "bhport/errors.hpp"
#include "bhport/log.hpp"

namespace bhport {

namespace {

// Scalar Cholesky scan used only on failure, to identify the bad pivot.
int failing_pivot_index(Eigen::MatrixXd a) {
  const int n = static_cast<int>(a.rows());
  for (int k = 0; k < n; ++k) {
    double pivot = a(k, k);
    if (!(pivot > 0.0) || !std::isfinite(pivot)) return k;
    double root = std::sqrt(pivot);
    a(k, k) = root;
    for (int i = k + 1; i < n; ++i) a(i, k) /= root;
    for (int j = k + 1; j < n; ++j)
      for (int i = j; i < n; ++i) a(i, j) -= a(i, k) * a(j, k);
  }
  return n - 1;
}

}  // namespace

Eigen::MatrixXd safe_cholesky(const Eigen::MatrixXd& m, const std::string& context) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() == Eigen::Success)
    return llt.matrixL();
  const double ladder[] = {1e-12, 1e-10, 1e-8};
  for (double jitter : ladder) {
    Eigen::MatrixXd jittered = m;
    jittered.diagonal().array() += jitter;
    llt.compute(jittered);
    log::warn("spd", context + ": Cholesky failed, applied diagonal jitter " +
                         std::to_string(jitter));
    if (llt.info() == Eigen::Success)
      return llt.matrixL();
  }
  int pivot = failing_pivot_index(m);
  throw NumericalError(context + ": matrix is not positive definite (pivot " +
                           std::to_string(pivot) + " nonpositive)",
                       pivot);
}

Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& m, const std::string& context) {
  Eigen::MatrixXd l = safe_cholesky(m, context);
  Eigen::MatrixXd inv = Eigen::MatrixXd::Identity(m.rows(), m.cols());
  l.triangularView<Eigen::Lower>().solveInPlace(inv);
  l.transpose().triangularView<Eigen::Upper>().solveInPlace(inv);
  return 0.5 * (inv + inv.transpose());
}

SpdMatrix::SpdMatrix(Eigen::MatrixXd m, std::string context)
    : context_(std::move(context)) {
  if (m.rows() != m.cols())
    throw ConfigError(context_ + ": matrix must be square");
  double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-8 * scale)
    throw NumericalError(context_ + ": matrix is not symmetric (relative asymmetry " +
                         std::to_string(asym / scale) + ")");
  m_ = 0.5 * (m + m.transpose());
}

const Eigen::MatrixXd& SpdMatrix::chol() const {
  if (!chol_) chol_ = safe_cholesky(m_, context_);
  return *chol_;
}

Eigen::VectorXd sample_mvn(const Eigen::VectorXd& mean, const SpdMatrix& cov,
                           RngStream& rng) {
  if (cov.dim() != mean.size())
    throw ConfigError("sample_mvn: mean/cov dimension mismatch");
  const Eigen::MatrixXd& l = cov.chol();
  Eigen::VectorXd z(mean.size());
  for (int i = 0; i < z.size(); ++i) z(i) = rng.normal();
  return mean + l.triangularView<Eigen::Lower>() * z;
}

Eigen::VectorXd sample_mvn_prec_chol(const Eigen::VectorXd& mean,
                                     const Eigen::MatrixXd& prec_chol,
                                     RngStream& rng) {
  Eigen::VectorXd z(mean.size());
  for (int i = 0; i < z.size(); ++i) z(i) = rng.normal();
  return mean + prec_chol.transpose().triangularView<Eigen::Upper>().solve(z);
}

SpdMatrix sample_inverse_wishart(double nu, const SpdMatrix& scale, RngStream& rng) {
  const int d = scale.dim();
  if (!(nu > d - 1))
    throw ConfigError("sample_inverse_wishart: nu must exceed dim - 1 (nu=" +
                      std::to_string(nu) + ", dim=" + std::to_string(d) + ")");
  const Eigen::MatrixXd& lv = scale.chol();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < d; ++i) {
    a(i, i) = std::sqrt(rng.chi_square(nu - i));
    for (int j = 0; j < i; ++j) a(i, j) = rng.normal();
  }
  // M' = inv(A) * Lv'; result = M*M' = (M')' * (M').
  Eigen::MatrixXd mt =
      a.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd(lv.transpose()));
  Eigen::MatrixXd out = mt.transpose() * mt;
  return SpdMatrix(0.5 * (out + out.transpose()), "inverse_wishart_draw");
}

}  // namespace bhport
