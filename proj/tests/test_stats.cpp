#include "support.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace lcrl;
using namespace lcrl::testing;

namespace {

std::vector<double> normal_samples(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> out(n);
  for (double& x : out) x = d(rng);
  return out;
}

std::vector<double> exponential_samples(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> d(1.0);
  std::vector<double> out(n);
  for (double& x : out) x = d(rng);
  return out;
}

}  // namespace

TEST(Orlicz, ConstantSamples) {
  for (double alpha : {0.5, 1.0, 2.0}) {
    const std::vector<double> c(200, 1.7);
    const OrliczEstimate e = orlicz_norm(c, alpha);
    EXPECT_NEAR(e.norm, 1.7 / std::pow(std::log(2.0), 1.0 / alpha), 1e-6 * e.norm);
    EXPECT_EQ(e.samples, 200u);
    EXPECT_TRUE(e.resolved);
  }
}

TEST(Orlicz, PositivelyHomogeneous) {
  std::vector<double> x = normal_samples(5000, 1);
  const double base = orlicz_norm(x, 2.0).norm;
  for (double& v : x) v *= 3.7;
  EXPECT_NEAR(orlicz_norm(x, 2.0).norm, 3.7 * base, 1e-12 * base);
}

TEST(Orlicz, GaussianAndExponentialReferenceValues) {
  const OrliczEstimate g = orlicz_norm(normal_samples(100000, 7), 2.0);
  EXPECT_NEAR(g.norm, std::sqrt(8.0 / 3.0), 0.05 * std::sqrt(8.0 / 3.0));
  EXPECT_NEAR(g.growth_index, 0.5, 0.1);
  const OrliczEstimate e = orlicz_norm(exponential_samples(100000, 7), 1.0);
  EXPECT_NEAR(e.norm, 2.0, 0.1);
}

TEST(Orlicz, HeavyTailIsFlagged) {
  std::mt19937_64 rng(3);
  std::cauchy_distribution<double> d(0.0, 1.0);
  std::vector<double> x(20000);
  for (double& v : x) v = d(rng);
  EXPECT_FALSE(orlicz_norm(x, 2.0).resolved);
}

TEST(Orlicz, Preconditions) {
  EXPECT_THROW(orlicz_norm(std::vector<double>(99, 1.0), 1.0), ValidationError);
  EXPECT_THROW(orlicz_norm(std::vector<double>(100, 1.0), 0.0), ValidationError);
  EXPECT_EQ(orlicz_norm(std::vector<double>(100, 0.0), 1.0).norm, 0.0);
}

TEST(MomentGrowth, ReferenceLaws) {
  const MomentGrowth g = moment_growth_index(normal_samples(100000, 11));
  EXPECT_NEAR(g.index, 0.5, 0.1);
  EXPECT_TRUE(g.finite);
  const MomentGrowth e = moment_growth_index(exponential_samples(100000, 11));
  EXPECT_NEAR(e.index, 1.0, 0.15);
  EXPECT_EQ(moment_growth_index(std::vector<double>(10000, 2.5)).index, 0.0);
}

TEST(MomentGrowth, ScaleInvariant) {
  std::vector<double> x = exponential_samples(20000, 5);
  const MomentGrowth a = moment_growth_index(x);
  for (double& v : x) v *= 42.0;
  const MomentGrowth b = moment_growth_index(x);
  EXPECT_NEAR(a.index, b.index, 1e-6);
  EXPECT_NEAR(a.loglog_slope, b.loglog_slope, 1e-9);
}

TEST(MomentGrowth, NonFiniteSamplesAreFlagged) {
  std::vector<double> x = normal_samples(1000, 2);
  x[10] = std::numeric_limits<double>::infinity();
  EXPECT_FALSE(moment_growth_index(x).finite);
  EXPECT_THROW(moment_growth_index(x, 5), ValidationError);
}

TEST(Burkholder, ClosedFormsAtTwo) {
  const BurkholderConstants c = burkholder_bound(2.0);
  EXPECT_NEAR(c.log_C, 1.0 + std::log(2.0), 1e-14);
  EXPECT_NEAR(c.log_C_tilde, std::log(21.0) + 2.0 + 4.0 * std::log(2.0), 1e-14);
  // Direct evaluation of (sqrt(e/2) q)^q and 21 e^q q^{2q} where it fits in a double.
  for (double q : {3.0, 5.5, 10.0}) {
    const BurkholderConstants b = burkholder_bound(q);
    EXPECT_NEAR(b.log_C, std::log(std::pow(std::sqrt(std::exp(1.0) / 2.0) * q, q)), 1e-10);
    EXPECT_NEAR(b.log_C_tilde, std::log(21.0 * std::exp(q) * std::pow(q, 2.0 * q)), 1e-10);
  }
  EXPECT_THROW(burkholder_bound(1.5), ValidationError);
}

TEST(Burkholder, Increasing) {
  double prev = burkholder_bound(2).log_C;
  for (int q = 3; q <= 64; ++q) {
    const double cur = burkholder_bound(q).log_C;
    EXPECT_GT(cur, prev);
    prev = cur;
  }
}

TEST(MonteCarlo, AgreesWithTheExactEvaluator) {
  const auto inst = scalar_lq(0.5, 1, 1, 1, 1, 0.5, 1.0, 0.5);
  const Policy pol = greedy_policy(inst.theta, require_lq(inst.cost), 1.0, 0.001);
  const double exact = evaluate_lq_cost(inst.theta, inst.noise, require_lq(inst.cost), pol, inst.x0, 1.0, 0.001);
  const MonteCarloCost mc = mc_cost(inst, pol, 0.001, 10000, 21);
  EXPECT_LE(std::abs(mc.mean - exact), 3.0 * mc.std_error);
  EXPECT_EQ(mc.episodes, 10000);
}

TEST(MonteCarlo, ZeroCostIsExactlyZero) {
  auto inst = scalar_lq(0.5, 1, 1, 0, 1, 0, 1.0, 0.5);
  std::get<LQCost>(inst.cost).R.setZero();
  const MonteCarloCost mc = mc_cost(inst, ConstantPolicy{scalar_vector(1.0)}, 0.01, 10, 1);
  EXPECT_EQ(mc.mean, 0.0);
  EXPECT_EQ(mc.std_error, 0.0);
}

TEST(MonteCarlo, InfiniteCostNamesTheEpisode) {
  auto inst = scalar_lq(0, 1, 1, 1, 1, 0, 1.0);
  Matrix B(1, 2);
  B << 1.0, -1.0;
  inst.theta.B = B;
  inst.cost = EntropyLinearCost{{Vector::Zero(2), Vector::Zero(2), Matrix::Zero(2, 1)}, 1.0, scalar_matrix(1),
                                scalar_matrix(0)};
  try {
    mc_cost(inst, ConstantPolicy{Vector::Constant(2, 0.9)}, 0.1, 5, 0);
    FAIL() << "expected a numerical error";
  } catch (const NumericalError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("episode 0", 0), 0u);
  }
  EXPECT_THROW(mc_cost(inst, ConstantPolicy{Vector::Constant(2, 0.5)}, 0.1, 1, 0), ValidationError);
}

TEST(Concentration, DiffusionStatisticsConcentrate) {
  const auto inst = scalar_lq(0, 1, 1, 1, 1, 0, 1.0, 0.0);
  const Policy pol = greedy_policy(inst.theta, require_lq(inst.cost), 1.0, 0.02);
  ConcentrationConfig cfg;
  cfg.selector = {StatSelector::Which::U, 0, 0};
  cfg.epsilon = 0.08;
  cfg.m_list = {2, 4, 8, 16, 32};
  cfg.trials = 200;
  cfg.dt = 0.02;
  cfg.seed = 5;
  const ConcentrationCurve c = concentration_curve(inst, pol, cfg);
  ASSERT_EQ(c.points.size(), 5u);
  EXPECT_EQ(c.pilot_episodes, 320);
  EXPECT_TRUE(c.nonincreasing);
  ASSERT_TRUE(c.decay_defined);
  EXPECT_GT(c.decay_slope, 0.0);
  EXPECT_GT(c.points.front().probability, c.points.back().probability);
  std::ostringstream os;
  write_concentration_csv(os, c);
  EXPECT_EQ(os.str().substr(0, 21), "m,probability,stderr\n");
}

TEST(Concentration, Preconditions) {
  const auto inst = scalar_lq(0, 1, 1, 1, 1, 0, 1.0);
  ConcentrationConfig cfg;
  cfg.m_list = {2};
  cfg.trials = 100;
  EXPECT_THROW(concentration_curve(inst, ConstantPolicy{scalar_vector(0)}, cfg), ValidationError);
}

TEST(Concentration, BoundedJumpIntegralsAreSubWeibull) {
  // Samples of int X_{t-} dN~ for a stable scalar state with bounded marks.
  auto inst = scalar_lq(-0.5, 1, 0, 1, 1, 0, 1.0, 1.0);
  inst.noise.sigma = scalar_matrix(0.0);
  inst.noise.jump_rate = 2.0;
  inst.noise.marks = DiscreteMarks{{scalar_vector(0.5), scalar_vector(-1.0)}, {0.5, 0.5}};
  const Batch b = simulate_batch(inst, ConstantPolicy{scalar_vector(0.0)}, 0.01, 20000, 13);
  std::vector<double> samples;
  for (const auto& tr : b.trajectories) {
    double s = 0.0;
    for (int j = 0; j < tr.steps(); ++j) s += tr.states(j, 0) * (tr.increments(j, 0) + 0.5 * tr.states(j, 0) * tr.dt);
    samples.push_back(s);
  }
  const MomentGrowth g = moment_growth_index(samples);
  ASSERT_TRUE(g.finite);
  EXPECT_LE(g.index, 3.3);
}
