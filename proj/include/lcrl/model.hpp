// Problem-instance types shared by every lcrl module.
//
// A linear-convex control problem is
//
//   dX_t = (A X_t + B a_t) dt + sigma dW_t + dJ_t,   X_0 = x0,
//   J(a) = E[ int_0^T f(t, X_t, a_t) dt + g(X_T) ],
//
// where J is a compensated compound-Poisson process and f is convex in a.
// Quadratic terms carry a factor 1/2 throughout: f = (x'Qx + a'Ra)/2 and
// g = x'Gx/2, so that the value function of the LQ problem is x'P_t x/2.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace lcrl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input: bad dimensions, violated invariants, unsupported variant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A computation diverged or lost accuracy (overflow, indefinite Riccati, CFL).
class NumericalError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Drift parameters
// ---------------------------------------------------------------------------

/// Drift parameter pair theta = (A, B); A is n x n, B is n x k.
struct ModelTheta {
  Matrix A;
  Matrix B;

  [[nodiscard]] Eigen::Index n() const { return A.rows(); }
  [[nodiscard]] Eigen::Index k() const { return B.cols(); }

  /// [A B], the n x (n+k) matrix acting on Z = (x; a).
  [[nodiscard]] Matrix stacked() const {
    Matrix out(n(), n() + k());
    out << A, B;
    return out;
  }

  static ModelTheta from_stacked(const Matrix& theta, Eigen::Index n) {
    return ModelTheta{theta.leftCols(n), theta.rightCols(theta.cols() - n)};
  }
};

// ---------------------------------------------------------------------------
// Noise
// ---------------------------------------------------------------------------

struct NoMarks {};

/// Finitely many bounded marks with the given probabilities.
struct DiscreteMarks {
  std::vector<Vector> marks;
  std::vector<double> probs;
};

/// Componentwise independent marks scale_i * E_i with E_i ~ Exp(1).
struct ExponentialMarks {
  Vector scale;
};

using MarkLaw = std::variant<NoMarks, DiscreteMarks, ExponentialMarks>;

/// Diffusion loading plus a finite-activity compound-Poisson jump part.
/// The identity mark map is used, so jumps add the mark vector to the state.
struct NoiseSpec {
  Matrix sigma;  // n x d
  double jump_rate = 0.0;
  MarkLaw marks = NoMarks{};
  double tail_order = 0.0;

  [[nodiscard]] bool has_jumps() const {
    return jump_rate > 0.0 && !std::holds_alternative<NoMarks>(marks);
  }

  [[nodiscard]] Vector mark_mean(Eigen::Index n) const {
    Vector mean = Vector::Zero(n);
    if (const auto* d = std::get_if<DiscreteMarks>(&marks)) {
      for (std::size_t i = 0; i < d->marks.size(); ++i) mean += d->probs[i] * d->marks[i];
    } else if (const auto* e = std::get_if<ExponentialMarks>(&marks)) {
      mean = e->scale;
    }
    return mean;
  }

  /// E[Y Y^T] for a single mark Y.
  [[nodiscard]] Matrix mark_second_moment(Eigen::Index n) const {
    Matrix m = Matrix::Zero(n, n);
    if (const auto* d = std::get_if<DiscreteMarks>(&marks)) {
      for (std::size_t i = 0; i < d->marks.size(); ++i)
        m += d->probs[i] * d->marks[i] * d->marks[i].transpose();
    } else if (const auto* e = std::get_if<ExponentialMarks>(&marks)) {
      m = e->scale * e->scale.transpose();
      m.diagonal() *= 2.0;  // E[E_i^2] = 2
    }
    return m;
  }

  /// Covariance rate of the compensated jump martingale.
  [[nodiscard]] Matrix jump_covariance_rate(Eigen::Index n) const {
    if (!has_jumps()) return Matrix::Zero(n, n);
    return jump_rate * mark_second_moment(n);
  }
};

// ---------------------------------------------------------------------------
// Costs
// ---------------------------------------------------------------------------

/// f = (x'Qx + a'Ra)/2, g = x'Gx/2.
struct LQCost {
  Matrix Q;
  Matrix R;
  Matrix G;
};

/// f = (x'Qx + a'Ra)/2 + kappa |a|_1 with R diagonal, g = x'Gx/2.
struct L1LQCost {
  Matrix Q;
  Matrix R;
  Matrix G;
  double kappa = 0.0;
};

/// fbar(t, x) = offset + t * time_slope + state * x, a k-vector.
struct AffineField {
  Vector offset;
  Vector time_slope;
  Matrix state;  // k x n

  [[nodiscard]] Vector operator()(double t, const Vector& x) const {
    return offset + t * time_slope + state * x;
  }
};

/// f = x'Qx/2 + <fbar(t,x), a> + rho * sum_i a_i ln a_i on the simplex, +inf off it.
struct EntropyLinearCost {
  AffineField fbar;
  double rho = 1.0;
  Matrix Q;
  Matrix G;
};

using CostSpec = std::variant<LQCost, L1LQCost, EntropyLinearCost>;

inline const Matrix& state_weight(const CostSpec& cost) {
  return std::visit([](const auto& c) -> const Matrix& { return c.Q; }, cost);
}

inline const Matrix& terminal_weight(const CostSpec& cost) {
  return std::visit([](const auto& c) -> const Matrix& { return c.G; }, cost);
}

inline Eigen::Index control_dim(const CostSpec& cost) {
  return std::visit(
      [](const auto& c) -> Eigen::Index {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, EntropyLinearCost>)
          return c.fbar.offset.size();
        else
          return c.R.rows();
      },
      cost);
}

inline double entropy(const Vector& a) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i)
    if (a[i] > 0.0) s += a[i] * std::log(a[i]);
  return s;
}

/// Running cost f(t, x, a); +inf when a lies outside the effective domain.
inline double running_cost(const CostSpec& cost, double t, const Vector& x, const Vector& a) {
  return std::visit(
      [&](const auto& c) -> double {
        using T = std::decay_t<decltype(c)>;
        const double state_part = 0.5 * x.dot(c.Q * x);
        if constexpr (std::is_same_v<T, LQCost>) {
          return state_part + 0.5 * a.dot(c.R * a);
        } else if constexpr (std::is_same_v<T, L1LQCost>) {
          return state_part + 0.5 * a.dot(c.R * a) + c.kappa * a.lpNorm<1>();
        } else {
          constexpr double kSimplexTol = 1e-9;
          if ((a.array() < -kSimplexTol).any() || std::abs(a.sum() - 1.0) > kSimplexTol)
            return std::numeric_limits<double>::infinity();
          return state_part + c.fbar(t, x).dot(a) + c.rho * entropy(a.cwiseMax(0.0));
        }
      },
      cost);
}

/// Gradient of f(t, ., a) in the state variable.
inline Vector running_cost_state_gradient(const CostSpec& cost, double /*t*/, const Vector& x,
                                          const Vector& a) {
  return std::visit(
      [&](const auto& c) -> Vector {
        using T = std::decay_t<decltype(c)>;
        Vector grad = 0.5 * (c.Q + c.Q.transpose()) * x;
        if constexpr (std::is_same_v<T, EntropyLinearCost>) grad += c.fbar.state.transpose() * a;
        return grad;
      },
      cost);
}

inline double terminal_cost(const CostSpec& cost, const Vector& x) {
  return 0.5 * x.dot(terminal_weight(cost) * x);
}

inline Vector terminal_gradient(const CostSpec& cost, const Vector& x) {
  const Matrix& G = terminal_weight(cost);
  return 0.5 * (G + G.transpose()) * x;
}

// ---------------------------------------------------------------------------
// Policies
// ---------------------------------------------------------------------------

/// psi(t, x) = K(t) x + offset. K is sampled on the time grid; between grid
/// points it is reconstructed by cubic interpolation of the neighbouring gains,
/// and it is held constant outside the grid.
struct LinearGainPolicy {
  std::vector<double> times;
  std::vector<Matrix> gains;  // k x n each
  Vector offset;              // empty means zero
};

/// Scalar-state, scalar-action table. Piecewise constant (left) in t, linear in x,
/// linearly extrapolated outside the spatial grid.
struct TabulatedPolicy {
  std::vector<double> times;
  std::vector<double> xs;
  Matrix values;  // times.size() x xs.size()
};

struct ConstantPolicy {
  Vector action;
};

using Policy = std::variant<LinearGainPolicy, TabulatedPolicy, ConstantPolicy>;

namespace detail {

/// Index j of the last grid time t_j <= t (clamped to the grid).
inline std::size_t left_index(const std::vector<double>& times, double t) {
  if (times.size() <= 1) return 0;
  const double tol = 1e-9 * std::max(1.0, std::abs(times.back() - times.front()));
  auto it = std::upper_bound(times.begin(), times.end(), t + tol);
  if (it == times.begin()) return 0;
  return static_cast<std::size_t>(std::distance(times.begin(), it) - 1);
}

inline double interp_linear(const std::vector<double>& xs, const Eigen::Ref<const Vector>& row,
                            double x) {
  const std::size_t n = xs.size();
  if (n == 1) return row[0];
  std::size_t i;
  if (x <= xs.front()) {
    i = 0;
  } else if (x >= xs.back()) {
    i = n - 2;
  } else {
    i = static_cast<std::size_t>(std::upper_bound(xs.begin(), xs.end(), x) - xs.begin()) - 1;
    i = std::min(i, n - 2);
  }
  const double w = (x - xs[i]) / (xs[i + 1] - xs[i]);
  return (1.0 - w) * row[static_cast<Eigen::Index>(i)] + w * row[static_cast<Eigen::Index>(i + 1)];
}

/// Cubic Lagrange interpolation through (up to) four consecutive grid gains.
inline Matrix gain_at(const LinearGainPolicy& p, double t) {
  const std::vector<double>& ts = p.times;
  const std::size_t j = left_index(ts, t);
  const double tol = 1e-9 * std::max(1.0, std::abs(ts.back() - ts.front()));
  if (ts.size() == 1 || std::abs(t - ts[j]) <= tol || t <= ts.front() || t >= ts.back())
    return p.gains[j];
  const std::size_t order = std::min<std::size_t>(4, ts.size());
  const std::size_t start =
      std::min(j > 0 ? j - 1 : 0, ts.size() - order);
  Matrix K = Matrix::Zero(p.gains[j].rows(), p.gains[j].cols());
  for (std::size_t a = start; a < start + order; ++a) {
    double w = 1.0;
    for (std::size_t b = start; b < start + order; ++b)
      if (b != a) w *= (t - ts[b]) / (ts[a] - ts[b]);
    K += w * p.gains[a];
  }
  return K;
}

}  // namespace detail

inline Vector act(const Policy& policy, double t, const Vector& x) {
  return std::visit(
      [&](const auto& p) -> Vector {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, LinearGainPolicy>) {
          Vector a = detail::gain_at(p, t) * x;
          if (p.offset.size() > 0) a += p.offset;
          return a;
        } else if constexpr (std::is_same_v<T, TabulatedPolicy>) {
          const auto j = static_cast<Eigen::Index>(detail::left_index(p.times, t));
          Vector a(1);
          a[0] = detail::interp_linear(p.xs, p.values.row(j).transpose(), x[0]);
          return a;
        } else {
          return p.action;
        }
      },
      policy);
}

inline Eigen::Index action_dim(const Policy& policy) {
  return std::visit(
      [](const auto& p) -> Eigen::Index {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, LinearGainPolicy>)
          return p.gains.empty() ? 0 : p.gains.front().rows();
        else if constexpr (std::is_same_v<T, TabulatedPolicy>)
          return 1;
        else
          return p.action.size();
      },
      policy);
}

// ---------------------------------------------------------------------------
// Problem instance and validation
// ---------------------------------------------------------------------------

struct ProblemInstance {
  ModelTheta theta;
  NoiseSpec noise;
  CostSpec cost;
  double horizon = 1.0;
  Vector x0;
};

namespace detail {

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline bool symmetric(const Matrix& m, double tol = 1e-10) {
  return m.rows() == m.cols() && (m - m.transpose()).cwiseAbs().maxCoeff() <= tol * std::max(1.0, m.cwiseAbs().maxCoeff());
}

inline double min_eigenvalue(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

inline void check_square(std::vector<std::string>& out, const Matrix& m, Eigen::Index dim,
                         const std::string& name) {
  if (m.rows() != dim || m.cols() != dim)
    out.push_back(name + " must be " + std::to_string(dim) + "x" + std::to_string(dim));
}

inline void check_psd(std::vector<std::string>& out, const Matrix& m, const std::string& name) {
  if (!m.allFinite()) {
    out.push_back(name + " has non-finite entries");
    return;
  }
  if (!symmetric(m)) out.push_back(name + " must be symmetric");
  if (min_eigenvalue(m) < -1e-10) out.push_back(name + " must be positive semidefinite");
}

inline void check_grid(std::vector<std::string>& out, const std::vector<double>& g,
                       const std::string& name) {
  if (g.empty()) out.push_back(name + " must be non-empty");
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!std::isfinite(g[i])) out.push_back(name + " has non-finite entries");
    if (i > 0 && !(g[i] > g[i - 1])) {
      out.push_back(name + " must be strictly increasing");
      break;
    }
  }
}

}  // namespace detail

/// Every invariant violation of the policy (empty when well formed).
inline std::vector<std::string> validate(const Policy& policy) {
  std::vector<std::string> out;
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, LinearGainPolicy>) {
          detail::check_grid(out, p.times, "policy time grid");
          if (p.gains.size() != p.times.size()) out.push_back("gain count must match time grid length");
          for (const auto& K : p.gains) {
            if (!K.allFinite()) {
              out.push_back("gains must be finite");
              break;
            }
            if (K.rows() != p.gains.front().rows() || K.cols() != p.gains.front().cols()) {
              out.push_back("gains must share one shape");
              break;
            }
          }
          if (p.offset.size() > 0 && !p.gains.empty() && p.offset.size() != p.gains.front().rows())
            out.push_back("offset length must match action dimension");
        } else if constexpr (std::is_same_v<T, TabulatedPolicy>) {
          detail::check_grid(out, p.times, "policy time grid");
          detail::check_grid(out, p.xs, "policy spatial grid");
          if (p.values.rows() != static_cast<Eigen::Index>(p.times.size()) ||
              p.values.cols() != static_cast<Eigen::Index>(p.xs.size()))
            out.push_back("tabulated values must be (time grid) x (spatial grid)");
          if (!p.values.allFinite()) out.push_back("tabulated values must be finite");
        } else {
          if (!p.action.allFinite()) out.push_back("constant action must be finite");
        }
      },
      policy);
  return out;
}

/// Every invariant violation of the instance (empty when well formed).
/// Deterministic and side-effect free.
inline std::vector<std::string> validate(const ProblemInstance& inst) {
  std::vector<std::string> out;
  const Matrix& A = inst.theta.A;
  const Matrix& B = inst.theta.B;
  const Eigen::Index n = A.rows();
  const Eigen::Index k = B.cols();

  if (n <= 0) out.push_back("state dimension must be positive");
  if (k <= 0) out.push_back("control dimension must be positive");
  if (A.cols() != n) out.push_back("A must be square");
  if (B.rows() != n) out.push_back("B must have as many rows as A");
  if (!A.allFinite() || !B.allFinite()) out.push_back("theta entries must be finite");

  if (!(inst.horizon > 0.0) || !std::isfinite(inst.horizon)) out.push_back("horizon must be positive");
  if (inst.x0.size() != n) out.push_back("x0 must have length n");
  if (!inst.x0.allFinite()) out.push_back("x0 must be finite");

  // noise
  const NoiseSpec& ns = inst.noise;
  if (ns.sigma.rows() != n || ns.sigma.cols() < 1) out.push_back("sigma must be n x d with d >= 1");
  if (!ns.sigma.allFinite()) out.push_back("sigma must be finite");
  if (!(ns.jump_rate >= 0.0) || !std::isfinite(ns.jump_rate)) out.push_back("jump rate must be nonnegative");
  if (!(ns.tail_order >= 0.0 && ns.tail_order <= 1.0)) out.push_back("tail order must lie in [0, 1]");
  std::visit(
      [&](const auto& law) {
        using T = std::decay_t<decltype(law)>;
        if constexpr (std::is_same_v<T, NoMarks>) {
          if (ns.jump_rate != 0.0) out.push_back("jump rate must be 0 without a mark law");
        } else if constexpr (std::is_same_v<T, DiscreteMarks>) {
          if (law.marks.empty() || law.marks.size() != law.probs.size())
            out.push_back("discrete marks need one probability per mark");
          double total = 0.0;
          for (double p : law.probs) {
            if (!(p >= 0.0)) out.push_back("mark probabilities must be nonnegative");
            total += p;
          }
          if (std::abs(total - 1.0) > 1e-9) out.push_back("mark probabilities must sum to 1");
          for (const auto& m : law.marks)
            if (m.size() != n || !m.allFinite()) {
              out.push_back("marks must be finite n-vectors");
              break;
            }
          if (ns.tail_order != 0.0) out.push_back("bounded marks require tail order 0");
        } else {
          if (law.scale.size() != n || !law.scale.allFinite() || (law.scale.array() < 0.0).any())
            out.push_back("exponential mark scale must be a nonnegative n-vector");
          if (ns.tail_order != 1.0) out.push_back("exponential-tail marks require tail order 1");
        }
      },
      ns.marks);

  // cost
  std::visit(
      [&](const auto& c) {
        using T = std::decay_t<decltype(c)>;
        detail::check_square(out, c.Q, n, "Q");
        detail::check_square(out, c.G, n, "G");
        if (c.Q.rows() == n && c.Q.cols() == n) detail::check_psd(out, c.Q, "Q");
        if (c.G.rows() == n && c.G.cols() == n) detail::check_psd(out, c.G, "G");
        if constexpr (std::is_same_v<T, EntropyLinearCost>) {
          if (!(c.rho > 0.0)) out.push_back("rho must be positive");
          if (c.fbar.offset.size() != k || c.fbar.time_slope.size() != k || c.fbar.state.rows() != k ||
              c.fbar.state.cols() != n)
            out.push_back("fbar coefficients must be k-vectors and a k x n matrix");
        } else {
          detail::check_square(out, c.R, k, "R");
          if (c.R.rows() == k && c.R.cols() == k) {
            if (!c.R.allFinite() || !detail::symmetric(c.R))
              out.push_back("R must be symmetric");
            else if (detail::min_eigenvalue(c.R) <= 0.0)
              out.push_back("R must be positive definite");
          }
          if constexpr (std::is_same_v<T, L1LQCost>) {
            if (!(c.kappa >= 0.0)) out.push_back("kappa must be nonnegative");
            if (c.R.rows() == k && c.R.cols() == k && !c.R.isDiagonal(0.0))
              out.push_back("R must be diagonal for the L1 cost");
          }
        }
      },
      inst.cost);
  return out;
}

inline void require_valid(const ProblemInstance& inst) {
  const auto v = validate(inst);
  if (v.empty()) return;
  std::string msg = "invalid problem instance:";
  for (const auto& s : v) msg += " " + s + ";";
  throw ValidationError(msg);
}

/// Number of uniform steps of size ~dt covering [0, horizon]; dt must divide the
/// horizon up to rounding.
inline int step_count(double horizon, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ValidationError("time step must be positive");
  const double ratio = horizon / dt;
  const double steps = std::round(ratio);
  if (steps < 1.0 || std::abs(ratio - steps) > 1e-6 * std::max(1.0, ratio))
    throw ValidationError("time step must divide the horizon");
  return static_cast<int>(steps);
}

inline std::vector<double> uniform_grid(double horizon, int steps) {
  std::vector<double> t(static_cast<std::size_t>(steps) + 1);
  for (int j = 0; j <= steps; ++j) t[static_cast<std::size_t>(j)] = horizon * j / steps;
  return t;
}

}  // namespace lcrl
