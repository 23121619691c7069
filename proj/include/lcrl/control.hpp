// Optimal feedback synthesis and exact cost evaluation of linear policies.
#pragma once

#include "lcrl/model.hpp"

#include <cmath>
#include <ostream>
#include <string>
#include <vector>

namespace lcrl {

/// P_t on a uniform grid, P_T = G.
struct RiccatiSolution {
  std::vector<double> times;
  std::vector<Matrix> P;
};

namespace detail {

/// Right-hand side of dP/dt = -(A'P + PA - P S P + Q), S = B R^{-1} B'.
inline Matrix riccati_rhs(const Matrix& A, const Matrix& S, const Matrix& Q, const Matrix& P) {
  return -(A.transpose() * P + P * A - P * S * P + Q);
}

inline Eigen::LLT<Matrix> factor_control_weight(const Matrix& R) {
  Eigen::LLT<Matrix> llt(R);
  if (llt.info() != Eigen::Success || !R.allFinite())
    throw ValidationError("R must be symmetric positive definite");
  // LLT does not detect near-singular factors; reject them explicitly.
  const Vector d = Matrix(llt.matrixL()).diagonal();
  if (d.minCoeff() <= 1e-12 * std::max(1.0, d.maxCoeff()))
    throw ValidationError("R is singular");
  return llt;
}

inline void require_lq_dims(const ModelTheta& theta, const LQCost& cost) {
  const Eigen::Index n = theta.n();
  const Eigen::Index k = theta.k();
  if (theta.A.cols() != n || theta.B.rows() != n || cost.Q.rows() != n || cost.Q.cols() != n ||
      cost.G.rows() != n || cost.G.cols() != n || cost.R.rows() != k || cost.R.cols() != k)
    throw ValidationError("LQ dimensions are inconsistent");
}

}  // namespace detail

/// Integrates the Riccati equation backward from P_T = G with classical RK4 on
/// the uniform grid of step ~dt, symmetrizing after each step.
inline RiccatiSolution solve_riccati(const ModelTheta& theta, const LQCost& cost, double horizon,
                                     double dt) {
  detail::require_lq_dims(theta, cost);
  const int steps = step_count(horizon, dt);
  const double h = horizon / steps;
  const auto llt = detail::factor_control_weight(cost.R);
  const Matrix S = theta.B * llt.solve(theta.B.transpose());
  const Matrix& A = theta.A;
  const Matrix& Q = cost.Q;

  RiccatiSolution sol;
  sol.times = uniform_grid(horizon, steps);
  sol.P.resize(static_cast<std::size_t>(steps) + 1);
  Matrix P = 0.5 * (cost.G + cost.G.transpose());
  sol.P.back() = P;
  constexpr double kPsdTol = -1e-6;
  for (int j = steps; j > 0; --j) {
    // Backward step: P(t - h) from P(t).
    const Matrix k1 = detail::riccati_rhs(A, S, Q, P);
    const Matrix k2 = detail::riccati_rhs(A, S, Q, P - 0.5 * h * k1);
    const Matrix k3 = detail::riccati_rhs(A, S, Q, P - 0.5 * h * k2);
    const Matrix k4 = detail::riccati_rhs(A, S, Q, P - h * k3);
    P -= (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    P = 0.5 * (P + P.transpose()).eval();
    if (!P.allFinite())
      throw NumericalError("Riccati solution became non-finite at grid index " + std::to_string(j - 1));
    const double lmin = detail::min_eigenvalue(P);
    if (lmin < kPsdTol * std::max(1.0, P.cwiseAbs().maxCoeff()))
      throw NumericalError("Riccati solution lost positive semidefiniteness at grid index " +
                           std::to_string(j - 1));
    sol.P[static_cast<std::size_t>(j - 1)] = P;
  }
  return sol;
}

/// K_t = -R^{-1} B' P_t on the Riccati grid.
inline LinearGainPolicy lq_feedback(const ModelTheta& theta, const RiccatiSolution& riccati,
                                    const LQCost& cost) {
  detail::require_lq_dims(theta, cost);
  if (riccati.P.size() != riccati.times.size() || riccati.P.empty())
    throw ValidationError("Riccati solution grid is malformed");
  const auto llt = detail::factor_control_weight(cost.R);
  const Matrix BT = theta.B.transpose();
  LinearGainPolicy policy;
  policy.times = riccati.times;
  policy.gains.reserve(riccati.P.size());
  for (const Matrix& P : riccati.P) {
    if (P.rows() != theta.n() || P.cols() != theta.n())
      throw ValidationError("Riccati matrix dimension does not match theta");
    policy.gains.push_back(-llt.solve(BT * P));
  }
  return policy;
}

/// Greedy LQ feedback for the parameter `theta`.
inline LinearGainPolicy greedy_policy(const ModelTheta& theta, const LQCost& cost, double horizon,
                                      double dt) {
  return lq_feedback(theta, solve_riccati(theta, cost, horizon, dt), cost);
}

/// Gradient of z -> ln sum_i exp(z_i), computed with max-subtraction.
inline Vector softmax(const Vector& z) {
  const double zmax = z.maxCoeff();
  Vector e = (z.array() - zmax).exp();
  return e / e.sum();
}

/// Componentwise sign(z) * max(|z| - kappa, 0).
inline Vector soft_threshold(const Vector& z, double kappa) {
  return z.unaryExpr([kappa](double v) {
    const double m = std::abs(v) - kappa;
    return m > 0.0 ? std::copysign(m, v) : 0.0;
  });
}

/// phi(t, x, y) = argmin_a <B a, y> + f(t, x, a), the pointwise Hamiltonian
/// minimizer. With z = -B'y:
///   LQ            a = R^{-1} z
///   L1LQ          a_i = soft(z_i, kappa) / R_ii
///   EntropyLinear a = softmax((z - fbar(t, x)) / rho)
inline Vector conjugate_map(const CostSpec& cost, const ModelTheta& theta, double t, const Vector& x,
                            const Vector& y) {
  if (y.size() != theta.n()) throw ValidationError("adjoint vector has the wrong length");
  const Vector z = -theta.B.transpose() * y;
  return std::visit(
      [&](const auto& c) -> Vector {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, LQCost>) {
          return detail::factor_control_weight(c.R).solve(z);
        } else if constexpr (std::is_same_v<T, L1LQCost>) {
          if (!c.R.isDiagonal(0.0)) throw ValidationError("L1 cost requires a diagonal R");
          return soft_threshold(z, c.kappa).cwiseQuotient(c.R.diagonal());
        } else {
          return softmax((z - c.fbar(t, x)) / c.rho);
        }
      },
      cost);
}

namespace detail {

inline Matrix policy_gain_at(const Policy& policy, double t, Eigen::Index k, Eigen::Index n) {
  if (const auto* lg = std::get_if<LinearGainPolicy>(&policy)) return gain_at(*lg, t);
  return Matrix::Zero(k, n);
}

inline Vector policy_offset(const Policy& policy, Eigen::Index k) {
  if (const auto* lg = std::get_if<LinearGainPolicy>(&policy))
    return lg->offset.size() > 0 ? lg->offset : Vector(Vector::Zero(k));
  if (const auto* c = std::get_if<ConstantPolicy>(&policy)) return c->action;
  throw ValidationError("exact cost evaluation needs a linear or constant policy");
}

}  // namespace detail

/// Expected cost of an affine feedback a = K(t) x + o under the true dynamics,
/// from the mean/covariance ODEs
///   mu' = (A + B K) mu + B o,
///   Sigma' = (A + B K) Sigma + Sigma (A + B K)' + sigma sigma' + rate E[Y Y'],
/// and the running cost E f = (mu'Q~mu + tr(Q~ Sigma))/2 + cross terms, all
/// integrated with RK4 on the uniform grid. A LinearGain policy's grid must
/// coincide with that grid.
inline double evaluate_lq_cost(const ModelTheta& truth, const NoiseSpec& noise, const LQCost& cost,
                               const Policy& policy, const Vector& x0, double horizon, double dt) {
  detail::require_lq_dims(truth, cost);
  const int steps = step_count(horizon, dt);
  const double h = horizon / steps;
  const Eigen::Index n = truth.n();
  const Eigen::Index k = truth.k();
  if (x0.size() != n) throw ValidationError("x0 has the wrong length");
  if (action_dim(policy) != k) throw ValidationError("policy action dimension does not match B");
  if (const auto* lg = std::get_if<LinearGainPolicy>(&policy)) {
    if (lg->times.size() != static_cast<std::size_t>(steps) + 1 || lg->gains.size() != lg->times.size())
      throw ValidationError("policy grid does not match the evaluation grid");
    for (int j = 0; j <= steps; ++j)
      if (std::abs(lg->times[static_cast<std::size_t>(j)] - horizon * j / steps) > 1e-9 * horizon)
        throw ValidationError("policy grid does not match the evaluation grid");
  }
  const Vector offset = detail::policy_offset(policy, k);
  const Matrix noise_rate = noise.sigma * noise.sigma.transpose() + noise.jump_covariance_rate(n);
  const Matrix& A = truth.A;
  const Matrix& B = truth.B;
  const Matrix& Q = cost.Q;
  const Matrix& R = cost.R;

  const Vector drift_offset = B * offset;
  const double offset_cost = offset.dot(R * offset);

  struct Rates {
    Vector mean;
    Matrix cov;
    double cost;
  };
  // Moment and cost rates at time t for the state (m, S).
  auto rates = [&](double t, const Vector& m, const Matrix& S) {
    const Matrix K = detail::policy_gain_at(policy, t, k, n);
    const Matrix Acl = A + B * K;
    const Matrix Qt = Q + K.transpose() * R * K;
    const Vector cross = K.transpose() * (R * offset);
    return Rates{Acl * m + drift_offset, Acl * S + S * Acl.transpose() + noise_rate,
                 0.5 * (m.dot(Qt * m) + (Qt * S).trace() + 2.0 * cross.dot(m) + offset_cost)};
  };

  Vector mu = x0;
  Matrix Sigma = Matrix::Zero(n, n);
  double total = 0.0;
  for (int j = 0; j < steps; ++j) {
    const double t = horizon * j / steps;
    const Rates r1 = rates(t, mu, Sigma);
    const Rates r2 = rates(t + 0.5 * h, mu + 0.5 * h * r1.mean, Sigma + 0.5 * h * r1.cov);
    const Rates r3 = rates(t + 0.5 * h, mu + 0.5 * h * r2.mean, Sigma + 0.5 * h * r2.cov);
    const Rates r4 = rates(t + h, mu + h * r3.mean, Sigma + h * r3.cov);
    total += (h / 6.0) * (r1.cost + 2.0 * r2.cost + 2.0 * r3.cost + r4.cost);
    mu += (h / 6.0) * (r1.mean + 2.0 * r2.mean + 2.0 * r3.mean + r4.mean);
    Sigma += (h / 6.0) * (r1.cov + 2.0 * r2.cov + 2.0 * r3.cov + r4.cov);
    Sigma = 0.5 * (Sigma + Sigma.transpose()).eval();
    if (!mu.allFinite() || !Sigma.allFinite() || !std::isfinite(total))
      throw NumericalError("moment equations diverged at grid index " + std::to_string(j));
  }
  total += 0.5 * (mu.dot(cost.G * mu) + (cost.G * Sigma).trace());
  return total;
}

/// Optimal value x0'P_0 x0/2 + (1/2) int tr(P_t Gamma) dt, Gamma the noise
/// covariance rate (trapezoid on the Riccati grid).
inline double lq_value(const RiccatiSolution& riccati, const NoiseSpec& noise, const Vector& x0) {
  const Eigen::Index n = x0.size();
  const Matrix gamma = noise.sigma * noise.sigma.transpose() + noise.jump_covariance_rate(n);
  double integral = 0.0;
  for (std::size_t j = 0; j + 1 < riccati.times.size(); ++j) {
    const double h = riccati.times[j + 1] - riccati.times[j];
    integral += 0.5 * h * ((riccati.P[j] * gamma).trace() + (riccati.P[j + 1] * gamma).trace());
  }
  return 0.5 * x0.dot(riccati.P.front() * x0) + 0.5 * integral;
}

inline const LQCost& require_lq(const CostSpec& cost) {
  const auto* lq = std::get_if<LQCost>(&cost);
  if (lq == nullptr) throw ValidationError("operation requires an LQ cost");
  return *lq;
}

/// Expected cost of the greedy policy for `theta` run on the instance's true dynamics.
inline double greedy_cost(const ModelTheta& theta, const ProblemInstance& inst, double dt) {
  const LQCost& cost = require_lq(inst.cost);
  const Policy policy = greedy_policy(theta, cost, inst.horizon, dt);
  return evaluate_lq_cost(inst.theta, inst.noise, cost, policy, inst.x0, inst.horizon, dt);
}

/// Tolerance on negative gaps; both costs come from the same evaluator, so a
/// negative value beyond it means the Riccati feedback is inconsistent.
inline constexpr double kGapTolerance = 1e-9;

/// J^{truth}(psi^{wrong}) - J^{truth}(psi^{truth}) for the instance's LQ cost,
/// where psi^{theta} is the greedy feedback for theta.
inline double performance_gap(const ModelTheta& truth, const ModelTheta& wrong,
                              const ProblemInstance& inst, double dt) {
  ProblemInstance true_inst = inst;
  true_inst.theta = truth;
  const double optimal = greedy_cost(truth, true_inst, dt);
  const double suboptimal = greedy_cost(wrong, true_inst, dt);
  const double gap = suboptimal - optimal;
  if (gap < -kGapTolerance * std::max(1.0, std::abs(optimal)))
    throw NumericalError("negative performance gap " + std::to_string(gap));
  return gap;
}

/// CSV with columns t, P_11, P_12, ..., P_nn (row-major).
inline void write_riccati_csv(std::ostream& os, const RiccatiSolution& sol) {
  const Eigen::Index n = sol.P.empty() ? 0 : sol.P.front().rows();
  os << "t";
  for (Eigen::Index i = 1; i <= n; ++i)
    for (Eigen::Index j = 1; j <= n; ++j) os << ",P_" << i << '_' << j;
  os << '\n';
  const auto old_precision = os.precision(17);
  for (std::size_t s = 0; s < sol.times.size(); ++s) {
    os << sol.times[s];
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) os << ',' << sol.P[s](i, j);
    os << '\n';
  }
  os.precision(old_precision);
}

}  // namespace lcrl
