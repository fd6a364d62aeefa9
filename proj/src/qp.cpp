#include "bhport/qp.hpp"

#include <cmath>
#include <limits>

#include "bhport/errors.hpp"

namespace bhport {

namespace {

constexpr double kActiveTol = 1e-9;
constexpr double kReleaseTol = 1e-9;
constexpr double kStepTol = 1e-11;

Eigen::MatrixXd stack_working(const QpProblem& p, const std::vector<bool>& in_set) {
  int rows = static_cast<int>(p.a_eq.rows());
  for (bool f : in_set) rows += f ? 1 : 0;
  Eigen::MatrixXd c(rows, p.h.rows());
  int r = 0;
  for (int i = 0; i < p.a_eq.rows(); ++i) c.row(r++) = p.a_eq.row(i);
  for (std::size_t i = 0; i < in_set.size(); ++i)
    if (in_set[i]) c.row(r++) = p.a_in.row(static_cast<int>(i));
  return c;
}

}  // namespace

QpResult solve_qp(const QpProblem& p, const Eigen::VectorXd& x0) {
  const int n = static_cast<int>(p.h.rows());
  const int m_e = static_cast<int>(p.a_eq.rows());
  const int m_i = static_cast<int>(p.a_in.rows());
  if (p.h.cols() != n || p.g.size() != n)
    throw ConfigError("solve_qp: objective dimension mismatch");
  if ((m_e > 0 && p.a_eq.cols() != n) || p.b_eq.size() != m_e ||
      (m_i > 0 && p.a_in.cols() != n) || p.b_in.size() != m_i)
    throw ConfigError("solve_qp: constraint dimension mismatch");

  Eigen::VectorXd x = x0;
  const double scale =
      std::max({1.0, p.h.cwiseAbs().maxCoeff(), p.g.cwiseAbs().maxCoeff()});

  std::vector<bool> in_set(m_i, false);
  for (int i = 0; i < m_i; ++i)
    in_set[i] = (p.b_in(i) - p.a_in.row(i).dot(x)) <= kActiveTol;

  Eigen::VectorXd lambda_eq = Eigen::VectorXd::Zero(m_e);
  Eigen::VectorXd lambda_in = Eigen::VectorXd::Zero(m_i);
  const int max_iter = 50 * (n + m_e + m_i) + 20;
  int iter = 0;

  for (; iter < max_iter; ++iter) {
    Eigen::MatrixXd c = stack_working(p, in_set);
    Eigen::VectorXd grad = p.h * x + p.g;

    // Step within the working-set subspace.
    Eigen::VectorXd step = Eigen::VectorXd::Zero(n);
    if (c.rows() == 0) {
      Eigen::LDLT<Eigen::MatrixXd> ldlt(p.h);
      step = -ldlt.solve(grad);
      if (((p.h * step + grad).cwiseAbs().maxCoeff()) > 1e-7 * scale)
        throw NumericalError("solve_qp: unconstrained subproblem is singular");
    } else {
      Eigen::FullPivLU<Eigen::MatrixXd> lu(c);
      lu.setThreshold(1e-10);
      Eigen::MatrixXd z = lu.kernel();
      if (z.cols() > 0 && !(z.cols() == 1 && z.isZero(0.0))) {
        Eigen::MatrixXd hz = z.transpose() * p.h * z;
        Eigen::VectorXd rhs = -z.transpose() * grad;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(hz);
        Eigen::VectorXd q = ldlt.solve(rhs);
        if ((hz * q - rhs).cwiseAbs().maxCoeff() > 1e-7 * scale * (1.0 + q.norm()))
          throw NumericalError("solve_qp: reduced Hessian is singular");
        step = z * q;
      }
    }

    if (step.cwiseAbs().maxCoeff() <= kStepTol * (1.0 + x.cwiseAbs().maxCoeff())) {
      // Stationary on the working set: check multipliers.
      Eigen::VectorXd lambda;
      if (c.rows() > 0)
        lambda = c.transpose().colPivHouseholderQr().solve(-grad);
      lambda_eq.setZero();
      lambda_in.setZero();
      int r = 0;
      for (int i = 0; i < m_e; ++i) lambda_eq(i) = lambda(r++);
      int worst = -1;
      double worst_val = -kReleaseTol * scale;
      for (int i = 0; i < m_i; ++i) {
        if (!in_set[i]) continue;
        lambda_in(i) = lambda(r++);
        if (lambda_in(i) < worst_val &&
            (!p.release_filter || p.release_filter(i, in_set))) {
          worst_val = lambda_in(i);
          worst = i;
        }
      }
      if (worst < 0) break;  // optimal
      in_set[worst] = false;
      lambda_in(worst) = 0.0;
      continue;
    }

    // Longest feasible step along the computed direction.
    double alpha = 1.0;
    int blocking = -1;
    for (int i = 0; i < m_i; ++i) {
      if (in_set[i]) continue;
      double d = p.a_in.row(i).dot(step);
      if (d <= 1e-13 * scale) continue;
      double room = p.b_in(i) - p.a_in.row(i).dot(x);
      double a = room / d;
      if (a < 0.0) a = 0.0;
      if (a < alpha) {
        alpha = a;
        blocking = i;
      }
    }
    x += alpha * step;
    if (blocking >= 0 && alpha < 1.0) in_set[blocking] = true;
  }
  if (iter >= max_iter)
    throw NumericalError("solve_qp: active-set iteration cap reached");

  // Verify the KKT system at the returned point.
  Eigen::VectorXd grad = p.h * x + p.g;
  Eigen::VectorXd stat = grad;
  if (m_e > 0) stat += p.a_eq.transpose() * lambda_eq;
  if (m_i > 0) stat += p.a_in.transpose() * lambda_in;
  if (stat.cwiseAbs().maxCoeff() > 1e-6 * scale)
    throw NumericalError("solve_qp: stationarity residual exceeds tolerance");
  for (int i = 0; i < m_e; ++i)
    if (std::fabs(p.a_eq.row(i).dot(x) - p.b_eq(i)) > 1e-8)
      throw NumericalError("solve_qp: equality feasibility violated");
  for (int i = 0; i < m_i; ++i) {
    double slack = p.b_in(i) - p.a_in.row(i).dot(x);
    if (slack < -1e-8)
      throw NumericalError("solve_qp: inequality feasibility violated");
    if (lambda_in(i) < -1e-8)
      throw NumericalError("solve_qp: negative inequality multiplier");
    if (lambda_in(i) * std::max(slack, 0.0) > 1e-6 * scale)
      throw NumericalError("solve_qp: complementary slackness violated");
  }

  QpResult result;
  result.x = x;
  result.eq_multipliers = lambda_eq;
  result.in_multipliers = lambda_in.cwiseMax(0.0);
  result.objective = 0.5 * x.dot(p.h * x) + p.g.dot(x);
  result.iterations = iter;
  return result;
}

}  // namespace bhport
