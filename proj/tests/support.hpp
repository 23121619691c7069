// Instance builders shared by the test suites.
#pragma once

#include "lcrl/lcrl.hpp"

#include <cmath>

namespace lcrl::testing {

inline Matrix scalar_matrix(double v) { return Matrix::Constant(1, 1, v); }

inline Vector scalar_vector(double v) { return Vector::Constant(1, v); }

/// dX = (a X + b u) dt + s dW, f = (q x^2 + r u^2)/2, g = G x^2/2.
inline ProblemInstance scalar_lq(double a, double b, double s, double q, double r, double g, double T,
                                 double x0 = 0.0) {
  ProblemInstance inst;
  inst.theta = {scalar_matrix(a), scalar_matrix(b)};
  inst.noise.sigma = scalar_matrix(s);
  inst.cost = LQCost{scalar_matrix(q), scalar_matrix(r), scalar_matrix(g)};
  inst.horizon = T;
  inst.x0 = scalar_vector(x0);
  return inst;
}

inline ModelTheta paper_theta() {
  Matrix A(3, 3);
  A << 1.01, 0.01, 0.0, 0.01, 1.01, 0.01, 0.0, 0.01, 1.01;
  return {A, Matrix::Identity(3, 3)};
}

inline ModelTheta paper_theta0() {
  Matrix A(3, 3), B(3, 3);
  A << 1.6243, -0.6118, -0.5282, -1.0730, 0.8654, -2.3015, 1.7448, -0.7612, 0.3190;
  B << -0.2494, 1.4621, -2.0601, -0.3224, -0.3841, 1.1338, -1.0999, -0.1724, -0.8779;
  return {A, B};
}

/// The three-dimensional benchmark: B = sigma = R = I, Q = 0.1 I, G = 0, T = 1.5, x0 = 0.
inline ProblemInstance paper_instance() {
  ProblemInstance inst;
  inst.theta = paper_theta();
  inst.noise.sigma = Matrix::Identity(3, 3);
  inst.cost = LQCost{0.1 * Matrix::Identity(3, 3), Matrix::Identity(3, 3), Matrix::Zero(3, 3)};
  inst.horizon = 1.5;
  inst.x0 = Vector::Zero(3);
  return inst;
}

inline constexpr double kPaperDt = 0.015;

// Fixed open-loop-rich gain schedule on [0, 1.5]; keeps the regressors well conditioned.
inline LinearGainPolicy exploratory_policy() {
  Matrix perm(3, 3);
  perm << 0, 1, 0, 0, 0, 1, 1, 0, 0;
  return {{0.0, 0.5, 1.0, 1.5},
          {-Matrix::Identity(3, 3), 0.5 * perm, -0.5 * perm.transpose(), 0.3 * Matrix::Identity(3, 3)},
          Vector::Zero(3)};
}

inline GLSConfig paper_gls(int m0, std::uint64_t seed) {
  GLSConfig c;
  c.instance = paper_instance();
  c.theta0 = paper_theta0();
  c.m0 = m0;
  c.updates = 11;
  c.dt = kPaperDt;
  c.seed = seed;
  c.ridge = RidgeNormalization::per_sample;
  return c;
}

/// Closed-form scalar Riccati solution for A = 0, B = R = 1, G = 0.
inline double tanh_riccati(double q, double T, double t) { return std::sqrt(q) * std::tanh(std::sqrt(q) * (T - t)); }

}  // namespace lcrl::testing
