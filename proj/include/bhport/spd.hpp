#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>

#include "bhport/rng.hpp"

namespace bhport {

// Cholesky with a jitter ladder: if the exact factorization fails, absolute
// diagonal jitter 1e-12, 1e-10, 1e-8 is tried in turn (each application
// logged). Exhausting the ladder throws NumericalError carrying the index of
// the first nonpositive pivot. `context` names the matrix in logs and errors.
Eigen::MatrixXd safe_cholesky(const Eigen::MatrixXd& m, const std::string& context);

// Symmetric positive-definite matrix with a cached lower Cholesky factor.
// Construction averages the input with its transpose; asymmetry beyond 1e-8
// relative is rejected as not-a-covariance.
class SpdMatrix {
 public:
  explicit SpdMatrix(Eigen::MatrixXd m, std::string context = "spd");

  int dim() const { return static_cast<int>(m_.rows()); }
  const Eigen::MatrixXd& values() const { return m_; }

  // Lower-triangular factor L with L*L' = values(); computed once and cached.
  const Eigen::MatrixXd& chol() const;

 private:
  Eigen::MatrixXd m_;
  std::string context_;
  mutable std::optional<Eigen::MatrixXd> chol_;
};

// Inverse of an SPD matrix via Cholesky solves (jitter ladder applies).
Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& m, const std::string& context);

// Draw mean + L*z with z standard normal and L the Cholesky factor of cov.
Eigen::VectorXd sample_mvn(const Eigen::VectorXd& mean, const SpdMatrix& cov,
                           RngStream& rng);

// Draw from N(mean, P^-1) given the lower Cholesky factor L of the precision
// P: mean + solve(L', z). Avoids forming the covariance.
Eigen::VectorXd sample_mvn_prec_chol(const Eigen::VectorXd& mean,
                                     const Eigen::MatrixXd& prec_chol,
                                     RngStream& rng);

// Draw from the inverse-Wishart IW(nu, scale) via the Bartlett construction:
// with scale = Lv*Lv' and A the Bartlett lower-triangular factor of a
// Wishart(nu, I) draw, the result is M*M' where M = Lv*inv(A'). Only
// triangular solves are used; neither inv(scale) nor the Wishart draw is
// materialized. Requires nu > dim - 1.
SpdMatrix sample_inverse_wishart(double nu, const SpdMatrix& scale, RngStream& rng);

}  // namespace bhport
