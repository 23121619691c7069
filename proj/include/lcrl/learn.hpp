// Greedy least-squares (GLS) episodic learning with a doubling schedule.
//
// Update l runs the greedy LQ feedback for the current estimate theta_l on the
// true dynamics for m_l = 2^l m0 episodes, then re-estimates theta_{l+1} from
// that batch. Regret accumulates the expected excess cost of every episode.
#pragma once

#include "lcrl/control.hpp"
#include "lcrl/estimate.hpp"
#include "lcrl/parallel.hpp"
#include "lcrl/random.hpp"
#include "lcrl/sde.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace lcrl {

enum class RegretMode {
  expected,  // exact expected gap of each executed policy
  realized,  // pathwise episode cost minus the optimal expected cost
};

/// Where the 1/m ridge of the estimator is placed.
enum class RidgeNormalization {
  per_time,    // U + I/m with U the time integral
  per_sample,  // U + (dt/m) I, i.e. I/m added to the per-step Gram matrix
};

struct GLSConfig {
  ProblemInstance instance;  // holds the true theta
  ModelTheta theta0;
  int m0 = 4;
  int updates = 11;
  double delta = 0.1;
  std::uint64_t seed = 0;
  double dt = 0.015;
  bool pooled = false;  // estimate from all batches so far instead of the latest one
  RegretMode regret = RegretMode::expected;
  RidgeNormalization ridge = RidgeNormalization::per_time;
  int threads = 1;

  [[nodiscard]] double ridge_scale() const {
    return ridge == RidgeNormalization::per_time ? 1.0 : instance.horizon / step_count(instance.horizon, dt);
  }
};

struct UpdateRecord {
  int index = 0;
  ModelTheta theta;
  EstimationError error;
  int batch = 0;              // episodes run with psi^{theta_l}; 0 for the final estimate
  double gap = 0.0;           // J(psi^{theta_l}) - J(psi^{theta*}) per episode
  double relative_gap = 0.0;  // gap / J(psi^{theta*})
  double lambda_min_U = std::numeric_limits<double>::quiet_NaN();
  double condition_number = std::numeric_limits<double>::quiet_NaN();
};

struct GLSReport {
  std::vector<UpdateRecord> records;
  std::vector<double> regret;  // regret[N] = R(N), N = 0..total_episodes
  int total_episodes = 0;
  double optimal_cost = 0.0;
  double delta = 0.0;
  double theoretical_batch_exponent = 3.0;  // beta in m0 = C (-ln delta)^beta
  double theoretical_m0_over_C = 0.0;       // (-ln delta)^beta
  std::uint64_t seed = 0;
  bool aborted = false;
  int abort_update = -1;
  std::string abort_reason;
};

inline void validate(const GLSConfig& config) {
  require_valid(config.instance);
  require_lq(config.instance.cost);
  if (config.m0 < 1) throw ValidationError("m0 must be at least 1");
  if (config.updates < 1) throw ValidationError("number of updates must be at least 1");
  if (!(config.dt > 0.0)) throw ValidationError("dt must be positive");
  if (!(config.delta > 0.0 && config.delta < 0.25)) throw ValidationError("delta must lie in (0, 1/4)");
  if (config.updates + std::log2(static_cast<double>(config.m0)) > 30)
    throw ValidationError("batch sizes overflow");
  if (config.theta0.A.rows() != config.instance.theta.A.rows() ||
      config.theta0.A.cols() != config.instance.theta.A.cols() ||
      config.theta0.B.rows() != config.instance.theta.B.rows() ||
      config.theta0.B.cols() != config.instance.theta.B.cols())
    throw ValidationError("theta0 must have the shape of the true theta");
  step_count(config.instance.horizon, config.dt);
}

/// Total episodes m0 (2^L - 1) of L doubling batches.
inline int total_episodes(int m0, int updates) { return m0 * ((1 << updates) - 1); }

inline GLSReport run_gls(const GLSConfig& config) {
  validate(config);
  const ProblemInstance& truth = config.instance;
  const LQCost& cost = require_lq(truth.cost);
  const double T = truth.horizon;

  GLSReport report;
  report.delta = config.delta;
  report.seed = config.seed;
  report.theoretical_batch_exponent = 3.0 + truth.noise.tail_order;
  report.theoretical_m0_over_C = std::pow(-std::log(config.delta), report.theoretical_batch_exponent);
  report.optimal_cost = greedy_cost(truth.theta, truth, config.dt);
  report.regret.reserve(static_cast<std::size_t>(total_episodes(config.m0, config.updates)) + 1);
  report.regret.push_back(0.0);

  auto gap_of = [&](const LinearGainPolicy& policy) {
    const double J = evaluate_lq_cost(truth.theta, truth.noise, cost, policy, truth.x0, T, config.dt);
    const double gap = J - report.optimal_cost;
    if (gap < -kGapTolerance * std::max(1.0, std::abs(report.optimal_cost)))
      throw NumericalError("negative performance gap " + std::to_string(gap));
    return gap;
  };

  ModelTheta theta = config.theta0;
  SuffStats pooled;
  int pooled_episodes = 0;
  for (int l = 0; l <= config.updates; ++l) {
    UpdateRecord rec;
    rec.index = l;
    rec.theta = theta;
    rec.error = estimation_error(theta, truth.theta);
    try {
      const LinearGainPolicy policy = greedy_policy(theta, cost, T, config.dt);
      rec.gap = gap_of(policy);
      rec.relative_gap = rec.gap / report.optimal_cost;
      if (l == config.updates) {
        report.records.push_back(rec);
        break;
      }
      rec.batch = config.m0 << l;
      const BatchSummary batch =
          summarize_batch(truth, policy, config.dt, rec.batch, derive_seed(config.seed, static_cast<std::uint64_t>(l)),
                          config.threads);
      for (double episode_cost : batch.costs) {
        const double increment = config.regret == RegretMode::expected ? rec.gap
                                                                       : episode_cost - report.optimal_cost;
        report.regret.push_back(report.regret.back() + increment);
      }

      SuffStats stats = batch.stats;
      if (config.pooled) {
        if (pooled_episodes == 0) {
          pooled = stats;
        } else {
          const double w_old = pooled_episodes;
          const double w_new = stats.episodes;
          pooled.U = (w_old * pooled.U + w_new * stats.U) / (w_old + w_new);
          pooled.V = (w_old * pooled.V + w_new * stats.V) / (w_old + w_new);
          pooled.episodes += stats.episodes;
        }
        pooled_episodes = pooled.episodes;
        stats = pooled;
      }
      const Estimate est = lse(stats, config.ridge_scale());
      rec.lambda_min_U = est.lambda_min_U;
      rec.condition_number = est.condition_number;
      theta = est.theta;
    } catch (const NumericalError& e) {
      report.aborted = true;
      report.abort_update = l;
      report.abort_reason = e.what();
      report.records.push_back(rec);
      break;
    }
    report.records.push_back(rec);
  }
  report.total_episodes = static_cast<int>(report.regret.size()) - 1;
  return report;
}

/// Per-episode summary of an ensemble; bands are 95% normal intervals of the mean.
struct EnsembleSummary {
  std::vector<double> mean;
  std::vector<double> lo;
  std::vector<double> hi;
  int used_runs = 0;
  int aborted_runs = 0;
  std::vector<double> mean_rel_A;  // per update index
  std::vector<double> mean_rel_B;
  std::vector<double> mean_relative_gap;
};

struct Ensemble {
  std::vector<GLSReport> reports;
  EnsembleSummary summary;
};

/// Seed of run r in an ensemble seeded by `seed`.
inline std::uint64_t run_seed(std::uint64_t seed, int run) {
  return derive_seed(seed ^ 0x5bd1e9955bd1e995ULL, static_cast<std::uint64_t>(run));
}

inline EnsembleSummary summarize(const std::vector<GLSReport>& reports) {
  EnsembleSummary s;
  std::vector<const GLSReport*> used;
  for (const auto& r : reports) {
    if (r.aborted)
      ++s.aborted_runs;
    else
      used.push_back(&r);
  }
  s.used_runs = static_cast<int>(used.size());
  if (used.empty()) return s;
  const std::size_t len = used.front()->regret.size();
  s.mean.assign(len, 0.0);
  s.lo.assign(len, 0.0);
  s.hi.assign(len, 0.0);
  const double runs = static_cast<double>(used.size());
  for (std::size_t i = 0; i < len; ++i) {
    double sum = 0.0;
    for (const auto* r : used) sum += r->regret[i];
    const double m = sum / runs;
    double ss = 0.0;
    for (const auto* r : used) ss += (r->regret[i] - m) * (r->regret[i] - m);
    const double half = used.size() > 1 ? 1.96 * std::sqrt(ss / (runs - 1.0) / runs) : 0.0;
    s.mean[i] = m;
    s.lo[i] = m - half;
    s.hi[i] = m + half;
  }
  const std::size_t updates = used.front()->records.size();
  s.mean_rel_A.assign(updates, 0.0);
  s.mean_rel_B.assign(updates, 0.0);
  s.mean_relative_gap.assign(updates, 0.0);
  for (const auto* r : used) {
    for (std::size_t u = 0; u < updates; ++u) {
      s.mean_rel_A[u] += r->records[u].error.rel_A / runs;
      s.mean_rel_B[u] += r->records[u].error.rel_B / runs;
      s.mean_relative_gap[u] += r->records[u].relative_gap / runs;
    }
  }
  return s;
}

/// Independent GLS runs; run r uses run_seed(config.seed, r). Runs are
/// distributed over config.threads workers and are themselves sequential.
inline Ensemble run_ensemble(const GLSConfig& config, int runs) {
  if (runs < 1) throw ValidationError("ensemble needs at least one run");
  validate(config);
  Ensemble out;
  out.reports.resize(static_cast<std::size_t>(runs));
  parallel_for(out.reports.size(), config.threads, [&](std::size_t r) {
    GLSConfig c = config;
    c.seed = run_seed(config.seed, static_cast<int>(r));
    c.threads = 1;
    out.reports[r] = run_gls(c);
  });
  out.summary = summarize(out.reports);
  return out;
}

struct SlopeFit {
  double exponent = std::numeric_limits<double>::quiet_NaN();
  bool defined = false;
  int points = 0;
};

/// Least-squares slope of ln R(N) against ln N over every episode count
/// N >= first; entries with R(N) <= 0 are skipped. Undefined when fewer than 8
/// points remain.
inline SlopeFit regret_slope(const std::vector<double>& regret, std::size_t first = 1) {
  SlopeFit fit;
  if (regret.size() < 2) return fit;
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  int count = 0;
  for (std::size_t N = std::max<std::size_t>(first, 1); N < regret.size(); ++N) {
    if (!(regret[N] > 0.0)) continue;
    const double x = std::log(static_cast<double>(N));
    const double y = std::log(regret[N]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++count;
  }
  fit.points = count;
  if (count < 8) return fit;
  const double denom = count * sxx - sx * sx;
  if (denom <= 0.0) return fit;
  fit.exponent = (count * sxy - sx * sy) / denom;
  fit.defined = true;
  return fit;
}

inline SlopeFit regret_slope(const GLSReport& report) { return regret_slope(report.regret); }

inline SlopeFit regret_slope(const EnsembleSummary& summary) { return regret_slope(summary.mean); }

}  // namespace lcrl
