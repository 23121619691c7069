// Euler-Maruyama simulation of the controlled jump diffusion and the
// sufficient statistics of the least-squares estimator.
#pragma once

#include "lcrl/model.hpp"
#include "lcrl/parallel.hpp"
#include "lcrl/random.hpp"

#include <cstdint>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace lcrl {

/// One episode on the uniform grid t_j = j * dt, j = 0..M.
struct Trajectory {
  double dt = 0.0;
  Matrix states;      // (M+1) x n
  Matrix controls;    // M x k, controls.row(j) = psi(t_j, X_j)
  Matrix increments;  // M x n, X_{j+1} - X_j
  double cost = 0.0;  // left-Riemann running cost plus terminal cost

  [[nodiscard]] int steps() const { return static_cast<int>(controls.rows()); }
  [[nodiscard]] double time(int j) const { return j * dt; }
};

/// U = (1/m) sum_i int Z Z' dt and V = (1/m) sum_i int Z dX' with Z = (X; a)
/// evaluated at the left grid point.
struct SuffStats {
  Matrix U;  // (n+k) x (n+k)
  Matrix V;  // (n+k) x n
  int episodes = 0;
};

namespace detail {

/// Raw compound-Poisson increment over one step (not compensated).
inline Vector jump_increment(const NoiseSpec& noise, double dt, Eigen::Index n, Rng& rng) {
  Vector out = Vector::Zero(n);
  std::poisson_distribution<int> count_dist(noise.jump_rate * dt);
  const int count = count_dist(rng);
  if (count == 0) return out;
  if (const auto* d = std::get_if<DiscreteMarks>(&noise.marks)) {
    std::discrete_distribution<std::size_t> pick(d->probs.begin(), d->probs.end());
    for (int c = 0; c < count; ++c) out += d->marks[pick(rng)];
  } else if (const auto* e = std::get_if<ExponentialMarks>(&noise.marks)) {
    std::exponential_distribution<double> expo(1.0);
    for (int c = 0; c < count; ++c)
      for (Eigen::Index i = 0; i < n; ++i) out[i] += e->scale[i] * expo(rng);
  }
  return out;
}

/// Per-episode sums sum_j Z Z' dt and sum_j Z dX'.
inline void episode_sums(const Trajectory& tr, Matrix& zz, Matrix& zdx) {
  const Eigen::Index n = tr.states.cols();
  const Eigen::Index k = tr.controls.cols();
  zz.setZero(n + k, n + k);
  zdx.setZero(n + k, n);
  Vector z(n + k);
  for (int j = 0; j < tr.steps(); ++j) {
    z.head(n) = tr.states.row(j).transpose();
    z.tail(k) = tr.controls.row(j).transpose();
    zz.noalias() += (z * tr.dt) * z.transpose();
    zdx.noalias() += z * tr.increments.row(j);
  }
}

inline SuffStats reduce_sums(const std::vector<Matrix>& zz, const std::vector<Matrix>& zdx) {
  if (zz.empty()) throw ValidationError("cannot accumulate an empty set of trajectories");
  SuffStats s;
  s.U = Matrix::Zero(zz.front().rows(), zz.front().cols());
  s.V = Matrix::Zero(zdx.front().rows(), zdx.front().cols());
  for (std::size_t i = 0; i < zz.size(); ++i) {
    s.U += zz[i];
    s.V += zdx[i];
  }
  s.episodes = static_cast<int>(zz.size());
  s.U /= static_cast<double>(s.episodes);
  s.V /= static_cast<double>(s.episodes);
  s.U = 0.5 * (s.U + s.U.transpose()).eval();
  return s;
}

}  // namespace detail

/// Simulates one episode of
///   X_{j+1} = X_j + (A X_j + B a_j) dt + sigma dW_j + dJ_j - rate * E[mark] dt
/// under the feedback policy, from a generator seeded by `seed`.
inline Trajectory simulate(const ProblemInstance& inst, const Policy& policy, double dt,
                           std::uint64_t seed) {
  const int steps = step_count(inst.horizon, dt);
  dt = inst.horizon / steps;
  const Eigen::Index n = inst.theta.n();
  const Eigen::Index k = inst.theta.k();
  if (action_dim(policy) != k) throw ValidationError("policy action dimension does not match B");
  if (std::holds_alternative<TabulatedPolicy>(policy) && n != 1)
    throw ValidationError("tabulated policies require a scalar state");

  const Matrix& A = inst.theta.A;
  const Matrix& B = inst.theta.B;
  const Matrix& sigma = inst.noise.sigma;
  const Eigen::Index d = sigma.cols();
  const bool jumps = inst.noise.has_jumps();
  const Vector compensator =
      jumps ? Vector(inst.noise.jump_rate * dt * inst.noise.mark_mean(n)) : Vector::Zero(n);
  const double sqrt_dt = std::sqrt(dt);

  Rng rng = make_rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Trajectory tr;
  tr.dt = dt;
  tr.states.resize(steps + 1, n);
  tr.controls.resize(steps, k);
  tr.increments.resize(steps, n);
  tr.states.row(0) = inst.x0.transpose();

  Vector x = inst.x0;
  Vector dw(d);
  Vector dx(n);
  double cost = 0.0;
  for (int j = 0; j < steps; ++j) {
    const double t = j * dt;
    const Vector a = act(policy, t, x);
    cost += running_cost(inst.cost, t, x, a) * dt;
    for (Eigen::Index i = 0; i < d; ++i) dw[i] = sqrt_dt * normal(rng);
    dx.noalias() = (A * x + B * a) * dt;
    dx.noalias() += sigma * dw;
    if (jumps) dx += detail::jump_increment(inst.noise, dt, n, rng) - compensator;
    const Vector next = x + dx;
    if (!next.allFinite())
      throw NumericalError("simulation produced a non-finite state at step " + std::to_string(j));
    tr.controls.row(j) = a.transpose();
    tr.increments.row(j) = (next - x).transpose();
    tr.states.row(j + 1) = next.transpose();
    x = next;
  }
  tr.cost = cost + terminal_cost(inst.cost, x);
  return tr;
}

/// Averages the per-episode integrals over the trajectories (sum, then divide).
inline SuffStats accumulate(std::span<const Trajectory> trajectories) {
  if (trajectories.empty()) throw ValidationError("cannot accumulate an empty set of trajectories");
  const Trajectory& first = trajectories.front();
  std::vector<Matrix> zz(trajectories.size());
  std::vector<Matrix> zdx(trajectories.size());
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const Trajectory& tr = trajectories[i];
    if (tr.steps() != first.steps() || tr.dt != first.dt || tr.states.cols() != first.states.cols() ||
        tr.controls.cols() != first.controls.cols())
      throw ValidationError("trajectories must share grid and dimensions");
    detail::episode_sums(tr, zz[i], zdx[i]);
  }
  return detail::reduce_sums(zz, zdx);
}

struct Batch {
  std::vector<Trajectory> trajectories;
  SuffStats stats;
};

/// Seed of episode `index` in a batch seeded by `seed`.
inline std::uint64_t episode_seed(std::uint64_t seed, std::size_t index) {
  return derive_seed(seed, index);
}

namespace detail {

inline Trajectory simulate_episode(const ProblemInstance& inst, const Policy& policy, double dt,
                                   std::uint64_t seed, std::size_t index) {
  try {
    return simulate(inst, policy, dt, episode_seed(seed, index));
  } catch (const NumericalError& e) {
    throw NumericalError("episode " + std::to_string(index) + ": " + e.what());
  }
}

}  // namespace detail

/// m independent episodes; episode i uses episode_seed(seed, i).
inline Batch simulate_batch(const ProblemInstance& inst, const Policy& policy, double dt, int m,
                            std::uint64_t seed, int threads = 1) {
  if (m < 1) throw ValidationError("batch size must be at least 1");
  Batch batch;
  batch.trajectories.resize(static_cast<std::size_t>(m));
  parallel_for(batch.trajectories.size(), threads, [&](std::size_t i) {
    batch.trajectories[i] = detail::simulate_episode(inst, policy, dt, seed, i);
  });
  batch.stats = accumulate(batch.trajectories);
  return batch;
}

/// Sufficient statistics and pathwise costs of a batch without keeping the
/// trajectories. Bit-identical to simulate_batch(...).stats.
struct BatchSummary {
  SuffStats stats;
  std::vector<double> costs;
};

inline BatchSummary summarize_batch(const ProblemInstance& inst, const Policy& policy, double dt,
                                    int m, std::uint64_t seed, int threads = 1) {
  if (m < 1) throw ValidationError("batch size must be at least 1");
  const auto count = static_cast<std::size_t>(m);
  std::vector<Matrix> zz(count);
  std::vector<Matrix> zdx(count);
  BatchSummary out;
  out.costs.resize(count);
  parallel_for(count, threads, [&](std::size_t i) {
    const Trajectory tr = detail::simulate_episode(inst, policy, dt, seed, i);
    detail::episode_sums(tr, zz[i], zdx[i]);
    out.costs[i] = tr.cost;
  });
  out.stats = detail::reduce_sums(zz, zdx);
  return out;
}

/// CSV with columns t, x_1..x_n, a_1..a_k, dx_1..dx_n. The final row carries
/// X_M only.
inline void write_trajectory_csv(std::ostream& os, const Trajectory& tr) {
  const Eigen::Index n = tr.states.cols();
  const Eigen::Index k = tr.controls.cols();
  os << "t";
  for (Eigen::Index i = 1; i <= n; ++i) os << ",x_" << i;
  for (Eigen::Index i = 1; i <= k; ++i) os << ",a_" << i;
  for (Eigen::Index i = 1; i <= n; ++i) os << ",dx_" << i;
  os << '\n';
  const auto old_precision = os.precision(17);
  for (int j = 0; j <= tr.steps(); ++j) {
    os << tr.time(j);
    for (Eigen::Index i = 0; i < n; ++i) os << ',' << tr.states(j, i);
    for (Eigen::Index i = 0; i < k; ++i) {
      os << ',';
      if (j < tr.steps()) os << tr.controls(j, i);
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      os << ',';
      if (j < tr.steps()) os << tr.increments(j, i);
    }
    os << '\n';
  }
  os.precision(old_precision);
}

}  // namespace lcrl
