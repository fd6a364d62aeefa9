#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace bhport {

// Convex quadratic program: minimize 1/2 x'Hx + g'x subject to
// a_eq x = b_eq and a_in x <= b_in. H must be positive semidefinite and
// positive definite on the feasible directions the solver explores (the
// release filter lets callers rule out the directions where it is not).
struct QpProblem {
  Eigen::MatrixXd h;
  Eigen::VectorXd g;
  Eigen::MatrixXd a_eq;  // m_e x n (may have zero rows)
  Eigen::VectorXd b_eq;
  Eigen::MatrixXd a_in;  // m_i x n (may have zero rows)
  Eigen::VectorXd b_in;
  // Veto on dropping an inequality from the working set: called with the row
  // index and the current in-working-set flags; false keeps the row active.
  std::function<bool(int, const std::vector<bool>&)> release_filter;
};

struct QpResult {
  Eigen::VectorXd x;
  Eigen::VectorXd eq_multipliers;  // m_e, free sign
  Eigen::VectorXd in_multipliers;  // m_i, >= 0, zero off the active set
  double objective = 0.0;          // 1/2 x'Hx + g'x
  int iterations = 0;
};

// Primal active-set method from a feasible start; each subproblem is solved
// by null-space reduction. Verifies the KKT conditions (stationarity 1e-6,
// feasibility 1e-8, complementary slackness) before returning and throws
// NumericalError if they fail or the iteration cap is hit.
QpResult solve_qp(const QpProblem& p, const Eigen::VectorXd& x0);

}  // namespace bhport
