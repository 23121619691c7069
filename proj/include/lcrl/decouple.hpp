// Decoupling field v(t, x) of scalar linear-convex problems.
//
// v solves the backward quasilinear equation
//
//   v_t + (A x + B phi(t, x, v)) v_x + sigma^2 v_xx / 2 + A v + f_x(t, x, phi) = 0,
//   v(T, x) = g'(x),
//
// and the optimal feedback is psi(t, x) = phi(t, x, v(t, x)).
#pragma once

#include "lcrl/control.hpp"
#include "lcrl/model.hpp"

#include <cmath>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace lcrl {

struct GridParams {
  double x_max = 0.0;  // 0 selects the default half-width
  double dx = 0.05;
  double dt = 0.0;  // 0 selects a stable step automatically
};

struct DecouplingField {
  std::vector<double> times;  // uniform, t_0 = 0 .. t_M = T
  std::vector<double> xs;     // uniform on [-x_max, x_max]
  Matrix v;                   // times.size() x xs.size()

  [[nodiscard]] double dt() const { return times.size() > 1 ? times[1] - times[0] : 0.0; }
  [[nodiscard]] double dx() const { return xs.size() > 1 ? xs[1] - xs[0] : 0.0; }
};

/// Grid time step violates the explicit-scheme stability bound.
class StabilityError : public NumericalError {
 public:
  StabilityError(const std::string& what, double required_dt) : NumericalError(what), required_dt(required_dt) {}
  double required_dt;
};

/// 6 max(1, std of the uncontrolled state at T).
inline double default_x_max(const ProblemInstance& inst) {
  const double a = inst.theta.A(0, 0);
  const double s2 = inst.noise.sigma.squaredNorm();
  const double T = inst.horizon;
  const double var = std::abs(a) * T > 1e-12 ? s2 * std::expm1(2.0 * a * T) / (2.0 * a) : s2 * T;
  return 6.0 * std::max(1.0, std::sqrt(var) + std::abs(inst.x0[0]));
}

namespace detail {

inline void require_scalar_problem(const ProblemInstance& inst) {
  require_valid(inst);
  if (inst.theta.n() != 1 || inst.theta.k() != 1)
    throw ValidationError("decoupling fields require a scalar state and a scalar action");
  if (inst.noise.has_jumps()) throw ValidationError("decoupling fields do not support jumps");
}

inline Vector scalar(double v) {
  Vector out(1);
  out[0] = v;
  return out;
}

/// One explicit backward step from `next` (time t + dt) to `out` (time t).
/// Returns the largest dt (sigma^2/dx^2 + |b|/dx) seen, which must be <= 1.
inline double backward_step(const ProblemInstance& inst, const std::vector<double>& xs, double t, double dt,
                            const Vector& next, Vector& out) {
  const double A = inst.theta.A(0, 0);
  const double B = inst.theta.B(0, 0);
  const double s2 = inst.noise.sigma.squaredNorm();
  const double dx = xs[1] - xs[0];
  const auto N = static_cast<Eigen::Index>(xs.size());
  double courant = 0.0;
  for (Eigen::Index i = 1; i + 1 < N; ++i) {
    const double x = xs[static_cast<std::size_t>(i)];
    const Vector xv = scalar(x);
    const Vector a = conjugate_map(inst.cost, inst.theta, t + dt, xv, scalar(next[i]));
    const double b = A * x + B * a[0];
    const double vx = b > 0.0 ? (next[i + 1] - next[i]) / dx : (next[i] - next[i - 1]) / dx;
    const double vxx = (next[i + 1] - 2.0 * next[i] + next[i - 1]) / (dx * dx);
    const double fx = running_cost_state_gradient(inst.cost, t + dt, xv, a)[0];
    out[i] = next[i] + dt * (b * vx + 0.5 * s2 * vxx + A * next[i] + fx);
    courant = std::max(courant, dt * (s2 / (dx * dx) + std::abs(b) / dx));
  }
  out[0] = 2.0 * out[1] - out[2];
  out[N - 1] = 2.0 * out[N - 2] - out[N - 3];
  return courant;
}

}  // namespace detail

/// Explicit backward scheme with upwinded v_x, centered v_xx and linear
/// extrapolation at +-x_max. The step must satisfy
/// dt (sigma^2/dx^2 + max|b|/dx) <= 1 at every slice; a violation raises a
/// StabilityError carrying the largest admissible dt. With grid.dt = 0 the
/// step is chosen from the terminal slice and halved until the bound holds.
inline DecouplingField solve_field(const ProblemInstance& inst, GridParams grid = {}) {
  detail::require_scalar_problem(inst);
  if (!(grid.dx > 0.0)) throw ValidationError("dx must be positive");
  if (grid.x_max < 0.0) throw ValidationError("x_max must be nonnegative");
  if (grid.dt < 0.0) throw ValidationError("dt must be nonnegative");
  const double x_max =
      grid.x_max > 0.0 ? grid.x_max : 0.5 * grid.dx * std::ceil(2.0 * default_x_max(inst) / grid.dx - 1e-9);
  const int cells = static_cast<int>(std::lround(2.0 * x_max / grid.dx));
  if (cells < 4 || std::abs(cells * grid.dx - 2.0 * x_max) > 1e-6 * grid.dx)
    throw ValidationError("2 x_max must be a multiple of dx spanning at least 4 cells");

  DecouplingField field;
  field.xs.resize(static_cast<std::size_t>(cells) + 1);
  for (int i = 0; i <= cells; ++i) field.xs[static_cast<std::size_t>(i)] = -x_max + 2.0 * x_max * i / cells;
  const double dx = field.xs[1] - field.xs[0];
  const auto N = static_cast<Eigen::Index>(field.xs.size());

  Vector terminal(N);
  for (Eigen::Index i = 0; i < N; ++i)
    terminal[i] = terminal_gradient(inst.cost, detail::scalar(field.xs[static_cast<std::size_t>(i)]))[0];

  const double T = inst.horizon;
  auto run = [&](int steps) {
    const double dt = T / steps;
    field.times = uniform_grid(T, steps);
    field.v.resize(steps + 1, N);
    field.v.row(steps) = terminal.transpose();
    Vector next = terminal;
    Vector cur(N);
    for (int j = steps - 1; j >= 0; --j) {
      const double courant = detail::backward_step(inst, field.xs, field.times[static_cast<std::size_t>(j)], dt, next, cur);
      if (courant > 1.0 + 1e-12) {
        std::ostringstream msg;
        msg << "stability bound violated at time index " << j << ": dt = " << dt << " needs to be at most "
            << dt / courant;
        throw StabilityError(msg.str(), dt / courant);
      }
      if (!cur.allFinite()) throw NumericalError("decoupling field diverged at time index " + std::to_string(j));
      field.v.row(j) = cur.transpose();
      next.swap(cur);
    }
  };

  if (grid.dt > 0.0) {
    run(step_count(T, grid.dt));
    return field;
  }

  // Initial guess from the terminal slice with a safety factor of 1/2.
  const double A = inst.theta.A(0, 0);
  const double B = inst.theta.B(0, 0);
  const double s2 = inst.noise.sigma.squaredNorm();
  double drift = 0.0;
  for (Eigen::Index i = 0; i < N; ++i) {
    const double x = field.xs[static_cast<std::size_t>(i)];
    const Vector a = conjugate_map(inst.cost, inst.theta, T, detail::scalar(x), detail::scalar(terminal[i]));
    drift = std::max(drift, std::abs(A * x + B * a[0]));
  }
  const double rate = s2 / (dx * dx) + drift / dx;
  int steps = std::max(1, static_cast<int>(std::ceil(2.0 * T * rate)));
  for (int attempt = 0;; ++attempt) {
    try {
      run(steps);
      return field;
    } catch (const StabilityError& e) {
      if (attempt >= 20) throw;
      steps = std::max(2 * steps, static_cast<int>(std::ceil(T / (0.5 * e.required_dt))));
    }
  }
}

/// psi(t_j, x_i) = phi(t_j, x_i, v(t_j, x_i)) as a tabulated policy.
inline TabulatedPolicy field_to_policy(const DecouplingField& field, const CostSpec& cost, const ModelTheta& theta) {
  if (theta.n() != 1 || theta.k() != 1)
    throw ValidationError("decoupling fields require a scalar state and a scalar action");
  TabulatedPolicy p;
  p.times = field.times;
  p.xs = field.xs;
  p.values.resize(field.v.rows(), field.v.cols());
  for (Eigen::Index j = 0; j < field.v.rows(); ++j)
    for (Eigen::Index i = 0; i < field.v.cols(); ++i)
      p.values(j, i) = conjugate_map(cost, theta, field.times[static_cast<std::size_t>(j)],
                                     detail::scalar(field.xs[static_cast<std::size_t>(i)]),
                                     detail::scalar(field.v(j, i)))[0];
  return p;
}

/// CSV with columns t, x, v, psi.
inline void write_field_csv(std::ostream& os, const DecouplingField& field, const TabulatedPolicy& policy) {
  os << "t,x,v,psi\n";
  const auto old = os.precision(17);
  for (Eigen::Index j = 0; j < field.v.rows(); ++j)
    for (Eigen::Index i = 0; i < field.v.cols(); ++i)
      os << field.times[static_cast<std::size_t>(j)] << ',' << field.xs[static_cast<std::size_t>(i)] << ','
         << field.v(j, i) << ',' << policy.values(j, i) << '\n';
  os.precision(old);
}

}  // namespace lcrl
