#include "bhport/portfolio.hpp"

#include <cmath>
#include <limits>

#include "bhport/errors.hpp"
#include "bhport/log.hpp"
#include "bhport/qp.hpp"

namespace bhport {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double objective(const Eigen::VectorXd& w, const Eigen::VectorXd& mu,
                 const Eigen::MatrixXd& cov, double gamma) {
  return w.dot(mu) - 0.5 * gamma * w.dot(cov * w);
}

// Covariance made safely factorizable: semidefinite inputs get a relative
// diagonal bump of 1e-10 * trace/N, logged.
Eigen::MatrixXd regularized(const Eigen::MatrixXd& cov) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() == Eigen::Success) return cov;
  double bump = 1e-10 * cov.trace() / static_cast<double>(cov.rows());
  if (!(bump > 0.0)) bump = 1e-12;
  log::warn("portfolio", "covariance is semidefinite; adding diagonal jitter " +
                             std::to_string(bump));
  Eigen::MatrixXd out = cov;
  out.diagonal().array() += bump;
  return out;
}

// A point inside the w-space box/simplex (caps validated nonempty).
Eigen::VectorXd box_feasible_point(int n, const PortfolioConstraints& cons) {
  if (cons.full_investment) return Eigen::VectorXd::Constant(n, 1.0 / n);
  return Eigen::VectorXd::Zero(n);
}

// Minimal-L1 move from prev into the box (and onto the simplex when fully
// invested): per-coordinate clamping is pointwise optimal, and any remaining
// mass mismatch costs exactly its absolute size wherever it is placed.
Eigen::VectorXd min_turnover_feasible(const Eigen::VectorXd& prev,
                                      const PortfolioConstraints& cons) {
  const int n = static_cast<int>(prev.size());
  const double lo = cons.long_only ? 0.0 : -kInf;
  const double hi = cons.max_weight;
  Eigen::VectorXd w = prev;
  for (int i = 0; i < n; ++i) w(i) = std::min(std::max(w(i), lo), hi);
  if (!cons.full_investment) return w;
  double deficit = 1.0 - w.sum();
  for (int i = 0; i < n && std::fabs(deficit) > 1e-15; ++i) {
    if (deficit > 0.0) {
      double room = hi - w(i);
      double add = std::min(room, deficit);
      w(i) += add;
      deficit -= add;
    } else {
      double room = w(i) - lo;
      double sub = std::min(room, -deficit);
      w(i) -= sub;
      deficit += sub;
    }
  }
  if (std::fabs(deficit) > 1e-12)
    throw FeasibilityError("full_investment: the box cannot absorb unit mass");
  return w;
}

}  // namespace

void PortfolioConstraints::validate(int n) const {
  if (max_turnover < 0.0)
    throw ConfigError("max_turnover must be nonnegative");
  if (!(max_weight > 0.0))
    throw ConfigError("max_weight must be positive");
  if (full_investment && max_weight * n < 1.0 - 1e-12)
    throw FeasibilityError("max_weight * N < 1: the full-investment box is empty");
  if (prev_weights && prev_weights->size() != n)
    throw ConfigError("prev_weights length does not match the asset count");
}

WeightVector weights_unconstrained(const Eigen::VectorXd& mu, const SpdMatrix& cov,
                                   double gamma) {
  if (!(gamma > 0.0)) throw ConfigError("gamma must be positive");
  if (cov.dim() != mu.size())
    throw ConfigError("weights_unconstrained: mu/cov dimension mismatch");
  const Eigen::MatrixXd& l = cov.chol();
  Eigen::VectorXd w = mu;
  l.triangularView<Eigen::Lower>().solveInPlace(w);
  l.transpose().triangularView<Eigen::Upper>().solveInPlace(w);
  w /= gamma;
  WeightVector out;
  out.weights = w;
  out.objective_value = objective(w, mu, cov.values(), gamma);
  return out;
}

WeightVector weights_constrained(const Eigen::VectorXd& mu, const SpdMatrix& cov,
                                 double gamma, const PortfolioConstraints& cons) {
  const int n = static_cast<int>(mu.size());
  if (!(gamma > 0.0)) throw ConfigError("gamma must be positive");
  if (cov.dim() != n)
    throw ConfigError("weights_constrained: mu/cov dimension mismatch");
  cons.validate(n);

  const Eigen::MatrixXd sigma = regularized(cov.values());
  const bool turnover_active =
      cons.prev_weights.has_value() && cons.max_turnover < kInf;

  QpProblem qp;

  if (!turnover_active) {
    // Solve directly in weight space.
    qp.h = gamma * sigma;
    qp.g = -mu;
    if (cons.full_investment) {
      qp.a_eq = Eigen::MatrixXd::Ones(1, n);
      qp.b_eq = Eigen::VectorXd::Ones(1);
    } else {
      qp.a_eq = Eigen::MatrixXd(0, n);
      qp.b_eq = Eigen::VectorXd(0);
    }
    std::vector<Eigen::VectorXd> rows;
    std::vector<double> rhs;
    if (cons.long_only)
      for (int i = 0; i < n; ++i) {
        rows.push_back(-Eigen::VectorXd::Unit(n, i));
        rhs.push_back(0.0);
      }
    if (cons.max_weight < kInf)
      for (int i = 0; i < n; ++i) {
        rows.push_back(Eigen::VectorXd::Unit(n, i));
        rhs.push_back(cons.max_weight);
      }
    qp.a_in.resize(static_cast<int>(rows.size()), n);
    qp.b_in.resize(static_cast<int>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      qp.a_in.row(static_cast<int>(r)) = rows[r].transpose();
      qp.b_in(static_cast<int>(r)) = rhs[r];
    }

    QpResult res = solve_qp(qp, box_feasible_point(n, cons));
    WeightVector out;
    out.weights = res.x;
    for (int i = 0; i < n; ++i)
      if (std::fabs(out.weights(i)) < 1e-12) out.weights(i) = 0.0;
    out.objective_value = objective(out.weights, mu, cov.values(), gamma);
    return out;
  }

  // Turnover-capped: variables (u, v) >= 0 with w = prev + u - v and
  // sum(u + v) <= max_turnover. The release filter keeps u_i and v_i from
  // being simultaneously free, which keeps the reduced Hessian definite.
  const Eigen::VectorXd& prev = *cons.prev_weights;
  Eigen::VectorXd w0 = min_turnover_feasible(prev, cons);
  double min_turnover = (w0 - prev).cwiseAbs().sum();
  if (min_turnover > cons.max_turnover + 1e-12)
    throw FeasibilityError(
        "max_turnover: reaching the feasible region from prev_weights needs L1 "
        "movement " +
        std::to_string(min_turnover) + " > budget " +
        std::to_string(cons.max_turnover));

  const int dim = 2 * n;
  qp.h.resize(dim, dim);
  qp.h.topLeftCorner(n, n) = gamma * sigma;
  qp.h.bottomRightCorner(n, n) = gamma * sigma;
  qp.h.topRightCorner(n, n) = -gamma * sigma;
  qp.h.bottomLeftCorner(n, n) = -gamma * sigma;
  Eigen::VectorXd grad_w = gamma * (sigma * prev) - mu;
  qp.g.resize(dim);
  qp.g.head(n) = grad_w;
  qp.g.tail(n) = -grad_w;

  if (cons.full_investment) {
    qp.a_eq.resize(1, dim);
    qp.a_eq.leftCols(n) = Eigen::MatrixXd::Ones(1, n);
    qp.a_eq.rightCols(n) = -Eigen::MatrixXd::Ones(1, n);
    qp.b_eq = Eigen::VectorXd::Constant(1, 1.0 - prev.sum());
  } else {
    qp.a_eq = Eigen::MatrixXd(0, dim);
    qp.b_eq = Eigen::VectorXd(0);
  }

  std::vector<Eigen::VectorXd> rows;
  std::vector<double> rhs;
  std::vector<int> u_bound_row(n, -1), v_bound_row(n, -1);
  for (int i = 0; i < n; ++i) {  // -u_i <= 0
    Eigen::VectorXd r = Eigen::VectorXd::Zero(dim);
    r(i) = -1.0;
    u_bound_row[i] = static_cast<int>(rows.size());
    rows.push_back(r);
    rhs.push_back(0.0);
  }
  for (int i = 0; i < n; ++i) {  // -v_i <= 0
    Eigen::VectorXd r = Eigen::VectorXd::Zero(dim);
    r(n + i) = -1.0;
    v_bound_row[i] = static_cast<int>(rows.size());
    rows.push_back(r);
    rhs.push_back(0.0);
  }
  if (cons.long_only)
    for (int i = 0; i < n; ++i) {  // -(u_i - v_i) <= prev_i
      Eigen::VectorXd r = Eigen::VectorXd::Zero(dim);
      r(i) = -1.0;
      r(n + i) = 1.0;
      rows.push_back(r);
      rhs.push_back(prev(i));
    }
  if (cons.max_weight < kInf)
    for (int i = 0; i < n; ++i) {  // u_i - v_i <= cap - prev_i
      Eigen::VectorXd r = Eigen::VectorXd::Zero(dim);
      r(i) = 1.0;
      r(n + i) = -1.0;
      rows.push_back(r);
      rhs.push_back(cons.max_weight - prev(i));
    }
  {  // sum(u + v) <= max_turnover
    rows.push_back(Eigen::VectorXd::Ones(dim));
    rhs.push_back(cons.max_turnover);
  }
  qp.a_in.resize(static_cast<int>(rows.size()), dim);
  qp.b_in.resize(static_cast<int>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    qp.a_in.row(static_cast<int>(r)) = rows[r].transpose();
    qp.b_in(static_cast<int>(r)) = rhs[r];
  }
  qp.release_filter = [u_bound_row, v_bound_row, n](int row,
                                                    const std::vector<bool>& act) {
    for (int i = 0; i < n; ++i) {
      if (row == u_bound_row[i]) return act[v_bound_row[i]];
      if (row == v_bound_row[i]) return act[u_bound_row[i]];
    }
    return true;
  };

  Eigen::VectorXd x0(dim);
  x0.head(n) = (w0 - prev).cwiseMax(0.0);
  x0.tail(n) = (prev - w0).cwiseMax(0.0);

  QpResult res = solve_qp(qp, x0);
  WeightVector out;
  out.weights = prev + res.x.head(n) - res.x.tail(n);
  for (int i = 0; i < n; ++i)
    if (std::fabs(out.weights(i)) < 1e-12) out.weights(i) = 0.0;
  out.objective_value = objective(out.weights, mu, cov.values(), gamma);
  return out;
}

WeightVector ew_weights(int n) {
  if (n < 1) throw ConfigError("ew_weights: need at least one asset");
  WeightVector out;
  out.weights = Eigen::VectorXd::Constant(n, 1.0 / n);
  out.objective_value = 0.0;
  return out;
}

}  // namespace bhport
