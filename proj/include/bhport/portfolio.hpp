#pragma once

#include <Eigen/Dense>
#include <optional>

#include "bhport/spd.hpp"

namespace bhport {

// Long-only, fully-invested, position-capped, turnover-capped by default.
// The turnover bound is total L1 change versus prev_weights and is inactive
// at the first rebalance (no prev_weights) or when set to infinity.
struct PortfolioConstraints {
  bool long_only = true;
  bool full_investment = true;
  double max_weight = 0.5;
  double max_turnover = 0.5;
  std::optional<Eigen::VectorXd> prev_weights;

  void validate(int n) const;
};

struct WeightVector {
  Eigen::VectorXd weights;
  double objective_value = 0.0;  // w'mu - (gamma/2) w' cov w
};

// Exact unconstrained maximizer (1/gamma) cov^-1 mu.
WeightVector weights_unconstrained(const Eigen::VectorXd& mu, const SpdMatrix& cov,
                                   double gamma);

// Global maximizer of w'mu - (gamma/2) w' cov w over the constraint polytope,
// via active-set QP. The turnover bound is enforced through a nonnegative
// buy/sell split. Infeasible constraint sets raise FeasibilityError naming
// the binding constraint.
WeightVector weights_constrained(const Eigen::VectorXd& mu, const SpdMatrix& cov,
                                 double gamma, const PortfolioConstraints& cons);

WeightVector ew_weights(int n);

}  // namespace bhport
