// Ridge-regularized least-squares identification of theta = (A, B).
#pragma once

#include "lcrl/model.hpp"
#include "lcrl/sde.hpp"

#include <cmath>
#include <limits>

namespace lcrl {

struct Estimate {
  ModelTheta theta;
  double condition_number = 1.0;  // of the ridge-shifted U
  double lambda_min_U = 0.0;      // identifiability proxy
  int episodes = 0;
};

/// theta^T = (U + (c/m) I)^{-1} V via a Cholesky solve, with c = ridge_scale.
/// c = 1 is the ridge per unit time. c = dt places the same 1/m ridge on the
/// per-sample Gram matrix sum_j Z_j Z_j' instead (a discrete-time regression of
/// dX/dt on Z).
inline Estimate lse(const SuffStats& stats, double ridge_scale = 1.0) {
  if (stats.episodes < 1) throw ValidationError("estimator needs at least one episode");
  if (!(ridge_scale > 0.0)) throw ValidationError("ridge scale must be positive");
  const Eigen::Index p = stats.U.rows();
  const Eigen::Index n = stats.V.cols();
  if (stats.U.cols() != p || stats.V.rows() != p || n >= p)
    throw ValidationError("sufficient statistics have inconsistent shapes");

  const Matrix shifted =
      0.5 * (stats.U + stats.U.transpose()) + Matrix::Identity(p, p) * (ridge_scale / static_cast<double>(stats.episodes));
  Eigen::LLT<Matrix> llt(shifted);
  if (llt.info() != Eigen::Success) throw NumericalError("ridge-shifted U is not positive definite");
  const Matrix theta_t = llt.solve(stats.V);  // (n+k) x n
  if (!theta_t.allFinite()) throw NumericalError("least-squares solve produced non-finite values");

  Eigen::SelfAdjointEigenSolver<Matrix> es_shifted(shifted, Eigen::EigenvaluesOnly);
  Eigen::SelfAdjointEigenSolver<Matrix> es_u(0.5 * (stats.U + stats.U.transpose()), Eigen::EigenvaluesOnly);

  Estimate est;
  est.theta = ModelTheta::from_stacked(theta_t.transpose(), n);
  const double lo = es_shifted.eigenvalues().minCoeff();
  est.condition_number = lo > 0.0 ? es_shifted.eigenvalues().maxCoeff() / lo
                                   : std::numeric_limits<double>::infinity();
  est.lambda_min_U = es_u.eigenvalues().minCoeff();
  est.episodes = stats.episodes;
  return est;
}

/// Frobenius relative errors. When a reference block has zero norm the
/// absolute error is reported for it and `absolute` is set.
struct EstimationError {
  double rel_A = 0.0;
  double rel_B = 0.0;
  double rel_theta = 0.0;
  bool absolute = false;
};

inline EstimationError estimation_error(const ModelTheta& estimate, const ModelTheta& truth) {
  if (estimate.A.rows() != truth.A.rows() || estimate.A.cols() != truth.A.cols() ||
      estimate.B.rows() != truth.B.rows() || estimate.B.cols() != truth.B.cols())
    throw ValidationError("estimate and truth have different shapes");
  EstimationError e;
  auto rel = [&e](const Matrix& diff, const Matrix& ref) {
    const double scale = ref.norm();
    if (scale == 0.0) {
      e.absolute = true;
      return diff.norm();
    }
    return diff.norm() / scale;
  };
  e.rel_A = rel(estimate.A - truth.A, truth.A);
  e.rel_B = rel(estimate.B - truth.B, truth.B);
  e.rel_theta = rel(estimate.stacked() - truth.stacked(), truth.stacked());
  return e;
}

inline EstimationError estimation_error(const Estimate& est, const ModelTheta& truth) {
  return estimation_error(est.theta, truth);
}

}  // namespace lcrl
