// Sub-Weibull diagnostics, concentration experiments for the estimator
// statistics, and Monte-Carlo cost evaluation.
#pragma once

#include "lcrl/model.hpp"
#include "lcrl/parallel.hpp"
#include "lcrl/random.hpp"
#include "lcrl/sde.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace lcrl {

// ---------------------------------------------------------------------------
// Moment growth
// ---------------------------------------------------------------------------

/// Fit of the growth of q -> ||X||_{L^q}.
struct MomentGrowth {
  double index = std::numeric_limits<double>::quiet_NaN();  // estimated 1/alpha
  double loglog_slope = std::numeric_limits<double>::quiet_NaN();  // raw slope of ln||X||_q vs ln q
  bool finite = false;
  int q_max = 0;
};

namespace detail {

/// Empirical ln ||X||_q and the delta-method variance of that estimate.
inline void log_moment(std::span<const double> samples, int q, double& value, double& variance) {
  // Work with |X| / max|X| so that high powers stay in range.
  double peak = 0.0;
  for (double s : samples) peak = std::max(peak, std::abs(s));
  const double n = static_cast<double>(samples.size());
  double sum = 0.0, sum2 = 0.0;
  for (double s : samples) {
    const double p = std::pow(std::abs(s) / peak, q);
    sum += p;
    sum2 += p * p;
  }
  const double mean = sum / n;
  const double var_p = std::max(0.0, sum2 / n - mean * mean);
  value = std::log(peak) + std::log(mean) / q;
  variance = var_p / (n * mean * mean * q * q);
}

/// Weighted residual of y_q - lnGamma(kappa (q+1))/q against c + d/q.
inline double profile_rss(const std::vector<double>& qs, const std::vector<double>& ys,
                          const std::vector<double>& ws, double kappa) {
  double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::vector<double> r(qs.size());
  for (std::size_t i = 0; i < qs.size(); ++i) {
    const double x = 1.0 / qs[i];
    const double y = ys[i] - (kappa > 0.0 ? std::lgamma(kappa * (qs[i] + 1.0)) / qs[i] : 0.0);
    r[i] = y;
    sw += ws[i];
    sx += ws[i] * x;
    sy += ws[i] * y;
    sxx += ws[i] * x * x;
    sxy += ws[i] * x * y;
  }
  const double det = sw * sxx - sx * sx;
  const double d = det != 0.0 ? (sw * sxy - sx * sy) / det : 0.0;
  const double c = (sy - d * sx) / sw;
  double rss = 0.0;
  for (std::size_t i = 0; i < qs.size(); ++i) {
    const double e = r[i] - c - d / qs[i];
    rss += ws[i] * e * e;
  }
  return rss;
}

}  // namespace detail

/// Growth index of q -> ||X||_{L^q} over q = 2..q_max.
///
/// A variable with tail P(|X| > x) ~ exp(-x^alpha) has E|X|^q proportional to
/// Gamma((q+1)/alpha), so ln||X||_q = c + d/q + lnGamma(kappa (q+1))/q with
/// kappa = 1/alpha. The index is the kappa in [0, 3] minimizing the weighted
/// residual of that profile, with weights from the delta-method variance of
/// each empirical moment; kappa = 0 is the bounded profile without the Gamma
/// term. The raw log-log slope is reported alongside.
inline MomentGrowth moment_growth_index(std::span<const double> samples, int q_max = 10) {
  if (q_max < 6) throw ValidationError("q_max must be at least 6");
  if (samples.size() < 2) throw ValidationError("moment growth needs at least two samples");
  MomentGrowth out;
  out.q_max = q_max;
  for (double s : samples)
    if (!std::isfinite(s)) return out;
  const auto [lo, hi] = std::minmax_element(samples.begin(), samples.end(),
                                            [](double a, double b) { return std::abs(a) < std::abs(b); });
  if (std::abs(*hi) == 0.0) return out;
  if (std::abs(*lo) == std::abs(*hi)) {
    out.index = 0.0;
    out.loglog_slope = 0.0;
    out.finite = true;
    return out;
  }

  std::vector<double> qs, ys, ws;
  for (int q = 2; q <= q_max; ++q) {
    double y = 0.0, v = 0.0;
    detail::log_moment(samples, q, y, v);
    if (!std::isfinite(y) || !std::isfinite(v)) return out;
    qs.push_back(q);
    ys.push_back(y);
    ws.push_back(v);
  }
  const double floor = std::max(1e-300, 1e-12 * *std::max_element(ws.begin(), ws.end()));
  for (double& w : ws) w = 1.0 / std::max(w, floor);

  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < qs.size(); ++i) {
    const double x = std::log(qs[i]);
    sx += x;
    sy += ys[i];
    sxx += x * x;
    sxy += x * ys[i];
  }
  const double cnt = static_cast<double>(qs.size());
  out.loglog_slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);

  constexpr double kMax = 3.0;
  constexpr int kGrid = 300;
  double best_k = 0.0;
  double best = detail::profile_rss(qs, ys, ws, 0.0);
  for (int g = 1; g <= kGrid; ++g) {
    const double k = kMax * g / kGrid;
    const double r = detail::profile_rss(qs, ys, ws, k);
    if (r < best) {
      best = r;
      best_k = k;
    }
  }
  double a = std::max(0.0, best_k - kMax / kGrid);
  double b = std::min(kMax, best_k + kMax / kGrid);
  if (best_k > 0.0) {
    const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
    for (int it = 0; it < 60; ++it) {
      const double c1 = b - phi * (b - a);
      const double c2 = a + phi * (b - a);
      if (detail::profile_rss(qs, ys, ws, c1) < detail::profile_rss(qs, ys, ws, c2))
        b = c2;
      else
        a = c1;
    }
    best_k = 0.5 * (a + b);
  }
  out.index = best_k;
  out.finite = true;
  return out;
}

// ---------------------------------------------------------------------------
// Orlicz norm
// ---------------------------------------------------------------------------

struct OrliczEstimate {
  double alpha = 0.0;
  double norm = 0.0;
  std::size_t samples = 0;
  double growth_index = std::numeric_limits<double>::quiet_NaN();
  /// False when the largest sample alone carries at least half of the
  /// defining sum, i.e. the estimate reflects the sample maximum rather than
  /// the tail of the law.
  bool resolved = true;
};

/// inf{t > 0 : mean(exp((|X|/t)^alpha) - 1) <= 1} by bisection to 1e-6 relative.
inline OrliczEstimate orlicz_norm(std::span<const double> samples, double alpha) {
  if (!(alpha > 0.0)) throw ValidationError("alpha must be positive");
  if (samples.size() < 100) throw ValidationError("Orlicz norm needs at least 100 samples");
  OrliczEstimate est;
  est.alpha = alpha;
  est.samples = samples.size();
  double peak = 0.0;
  for (double s : samples) {
    if (!std::isfinite(s)) throw ValidationError("samples must be finite");
    peak = std::max(peak, std::abs(s));
  }
  if (samples.size() >= 10000) {
    const MomentGrowth g = moment_growth_index(samples, 10);
    est.growth_index = g.index;
  }
  if (peak == 0.0) return est;

  std::vector<double> y(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) y[i] = std::abs(samples[i]) / peak;
  const double n = static_cast<double>(y.size());
  auto excess = [&](double u) {
    double s = 0.0;
    for (double v : y) s += std::expm1(std::pow(v / u, alpha));
    return s / n;
  };
  // Every term is at most exp(ln 2) - 1 = 1 at the upper bracket.
  double hi = std::pow(std::log(2.0), -1.0 / alpha);
  double lo = 0.5 * hi;
  while (excess(lo) <= 1.0) {
    hi = lo;
    lo *= 0.5;
  }
  while (hi - lo > 1e-7 * hi) {
    const double mid = 0.5 * (lo + hi);
    if (excess(mid) <= 1.0)
      hi = mid;
    else
      lo = mid;
  }
  est.norm = hi * peak;
  est.resolved = std::expm1(std::pow(1.0 / hi, alpha)) < 0.5 * n;
  return est;
}

// ---------------------------------------------------------------------------
// Burkholder constants
// ---------------------------------------------------------------------------

struct BurkholderConstants {
  double log_C = 0.0;        // ln (sqrt(e/2) q)^q
  double log_C_tilde = 0.0;  // ln 21 e^q q^{2q}
};

inline BurkholderConstants burkholder_bound(double q) {
  if (!(q >= 2.0)) throw ValidationError("Burkholder constants need q >= 2");
  BurkholderConstants c;
  c.log_C = q * (0.5 - 0.5 * std::log(2.0) + std::log(q));
  c.log_C_tilde = std::log(21.0) + q + 2.0 * q * std::log(q);
  return c;
}

// ---------------------------------------------------------------------------
// Monte-Carlo cost
// ---------------------------------------------------------------------------

struct MonteCarloCost {
  double mean = 0.0;
  double std_error = 0.0;
  int episodes = 0;
};

/// Pathwise costs of `episodes` independent episodes; episode i uses
/// episode_seed(seed, i).
inline std::vector<double> episode_costs(const ProblemInstance& inst, const Policy& policy, double dt,
                                         int episodes, std::uint64_t seed, int threads = 1) {
  if (episodes < 1) throw ValidationError("episode count must be positive");
  std::vector<double> costs(static_cast<std::size_t>(episodes));
  parallel_for(costs.size(), threads, [&](std::size_t i) {
    const Trajectory tr = detail::simulate_episode(inst, policy, dt, seed, i);
    if (!std::isfinite(tr.cost))
      throw NumericalError("episode " + std::to_string(i) +
                           ": infinite cost (control outside the domain of the running cost)");
    costs[i] = tr.cost;
  });
  return costs;
}

inline MonteCarloCost mc_cost(const ProblemInstance& inst, const Policy& policy, double dt, int episodes,
                              std::uint64_t seed, int threads = 1) {
  if (episodes < 2) throw ValidationError("Monte-Carlo cost needs at least two episodes");
  const std::vector<double> costs = episode_costs(inst, policy, dt, episodes, seed, threads);
  MonteCarloCost out;
  out.episodes = episodes;
  const double m = static_cast<double>(episodes);
  double sum = 0.0;
  for (double c : costs) sum += c;
  out.mean = sum / m;
  double ss = 0.0;
  for (double c : costs) ss += (c - out.mean) * (c - out.mean);
  out.std_error = std::sqrt(ss / (m - 1.0) / m);
  return out;
}

// ---------------------------------------------------------------------------
// Concentration of the sufficient statistics
// ---------------------------------------------------------------------------

/// Entry (row, col) of U or of V.
struct StatSelector {
  enum class Which { U, V } which = Which::U;
  Eigen::Index row = 0;
  Eigen::Index col = 0;

  [[nodiscard]] double operator()(const SuffStats& s) const {
    const Matrix& M = which == Which::U ? s.U : s.V;
    if (row < 0 || col < 0 || row >= M.rows() || col >= M.cols())
      throw ValidationError("statistic selector is out of range");
    return M(row, col);
  }
};

struct ConcentrationPoint {
  int m = 0;
  double probability = 0.0;
  double std_error = 0.0;  // binomial standard error
};

struct ConcentrationCurve {
  std::vector<ConcentrationPoint> points;
  double reference = 0.0;   // pilot value of the statistic
  int pilot_episodes = 0;
  double decay_slope = std::numeric_limits<double>::quiet_NaN();  // slope of -ln p against m
  bool decay_defined = false;
  bool nonincreasing = true;  // within two binomial standard errors
};

struct ConcentrationConfig {
  StatSelector selector;
  double epsilon = 0.1;
  std::vector<int> m_list;
  int trials = 200;
  double dt = 0.01;
  std::uint64_t seed = 0;
  int threads = 1;
};

/// Empirical P(|S_m - S_ref| >= epsilon) for each m. The reference comes from a
/// pilot batch of 10 max(m) episodes seeded by derive_seed(seed, 0); trial t at
/// list position i uses derive_seed(derive_seed(seed, i + 1), t).
inline ConcentrationCurve concentration_curve(const ProblemInstance& inst, const Policy& policy,
                                              const ConcentrationConfig& cfg) {
  if (cfg.m_list.empty()) throw ValidationError("m list must not be empty");
  if (cfg.trials < 200) throw ValidationError("concentration needs at least 200 trials per m");
  if (!(cfg.epsilon > 0.0)) throw ValidationError("epsilon must be positive");
  for (int m : cfg.m_list)
    if (m < 1) throw ValidationError("every m must be at least 1");
  require_valid(inst);

  ConcentrationCurve curve;
  const int m_max = *std::max_element(cfg.m_list.begin(), cfg.m_list.end());
  curve.pilot_episodes = 10 * m_max;
  curve.reference =
      cfg.selector(summarize_batch(inst, policy, cfg.dt, curve.pilot_episodes, derive_seed(cfg.seed, 0), cfg.threads)
                       .stats);

  for (std::size_t i = 0; i < cfg.m_list.size(); ++i) {
    const int m = cfg.m_list[i];
    const std::uint64_t base = derive_seed(cfg.seed, i + 1);
    std::vector<char> hit(static_cast<std::size_t>(cfg.trials), 0);
    parallel_for(hit.size(), cfg.threads, [&](std::size_t t) {
      const SuffStats s = summarize_batch(inst, policy, cfg.dt, m, derive_seed(base, t)).stats;
      hit[t] = std::abs(cfg.selector(s) - curve.reference) >= cfg.epsilon ? 1 : 0;
    });
    double count = 0.0;
    for (char h : hit) count += h;
    ConcentrationPoint p;
    p.m = m;
    p.probability = count / cfg.trials;
    p.std_error = std::sqrt(std::max(p.probability * (1.0 - p.probability), 0.25 / cfg.trials) / cfg.trials);
    curve.points.push_back(p);
  }

  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto& a = curve.points[i - 1];
    const auto& b = curve.points[i];
    if (b.m > a.m && b.probability > a.probability + 2.0 * std::hypot(a.std_error, b.std_error))
      curve.nonincreasing = false;
  }

  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int cnt = 0;
  for (const auto& p : curve.points) {
    if (p.probability <= 0.0) continue;
    const double x = p.m;
    const double y = -std::log(p.probability);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++cnt;
  }
  if (cnt >= 2 && cnt * sxx - sx * sx > 0.0) {
    curve.decay_slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
    curve.decay_defined = true;
  }
  return curve;
}

/// CSV with columns m, probability, stderr.
inline void write_concentration_csv(std::ostream& os, const ConcentrationCurve& curve) {
  os << "m,probability,stderr\n";
  const auto old = os.precision(17);
  for (const auto& p : curve.points) os << p.m << ',' << p.probability << ',' << p.std_error << '\n';
  os.precision(old);
}

// ---------------------------------------------------------------------------
// Path functionals
// ---------------------------------------------------------------------------

/// sup_j |X_j|_inf over the simulated grid of each of `episodes` episodes.
inline std::vector<double> sup_functional_samples(const ProblemInstance& inst, const Policy& policy, double dt,
                                                  int episodes, std::uint64_t seed, int threads = 1) {
  if (episodes < 1) throw ValidationError("episode count must be positive");
  std::vector<double> out(static_cast<std::size_t>(episodes));
  parallel_for(out.size(), threads, [&](std::size_t i) {
    const Trajectory tr = detail::simulate_episode(inst, policy, dt, seed, i);
    out[i] = tr.states.cwiseAbs().maxCoeff();
  });
  return out;
}

}  // namespace lcrl
