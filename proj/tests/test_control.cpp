#include "support.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace lcrl;
using namespace lcrl::testing;

namespace {

double max_tanh_error(double q, double T, int steps) {
  const auto inst = scalar_lq(0, 1, 0, q, 1, 0, T);
  const RiccatiSolution sol = solve_riccati(inst.theta, require_lq(inst.cost), T, T / steps);
  double err = 0.0;
  for (std::size_t j = 0; j < sol.times.size(); ++j)
    err = std::max(err, std::abs(sol.P[j](0, 0) - tanh_riccati(q, T, sol.times[j])));
  return err;
}

}  // namespace

TEST(Riccati, ScalarClosedForm) {
  EXPECT_LE(max_tanh_error(0.1, 1.5, 100), 1e-6);
  const auto inst = scalar_lq(0, 1, 0, 0.1, 1, 0, 1.5);
  const RiccatiSolution sol = solve_riccati(inst.theta, require_lq(inst.cost), 1.5, 0.015);
  EXPECT_NEAR(sol.P.front()(0, 0), std::sqrt(0.1) * std::tanh(1.5 * std::sqrt(0.1)), 1e-9);
  EXPECT_EQ(sol.P.back()(0, 0), 0.0);
}

TEST(Riccati, FourthOrderConvergence) {
  const double e1 = max_tanh_error(4.0, 1.5, 25);
  const double e2 = max_tanh_error(4.0, 1.5, 50);
  const double e3 = max_tanh_error(4.0, 1.5, 100);
  EXPECT_GE(std::log2(e1 / e2), 3.5);
  EXPECT_GE(std::log2(e2 / e3), 3.5);
}

TEST(Riccati, ZeroCostGivesZero) {
  auto inst = paper_instance();
  LQCost c = require_lq(inst.cost);
  c.Q.setZero();
  const RiccatiSolution sol = solve_riccati(inst.theta, c, inst.horizon, kPaperDt);
  for (const auto& P : sol.P) EXPECT_EQ(P.norm(), 0.0);
}

TEST(Riccati, BenchmarkSolutionIsSymmetricPsd) {
  const auto inst = paper_instance();
  const RiccatiSolution sol = solve_riccati(inst.theta, require_lq(inst.cost), inst.horizon, kPaperDt);
  EXPECT_EQ(sol.P.size(), 101u);
  for (const auto& P : sol.P) {
    EXPECT_LE((P - P.transpose()).cwiseAbs().maxCoeff(), 1e-10);
    Eigen::SelfAdjointEigenSolver<Matrix> es(P);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-8);
  }
}

TEST(Riccati, TerminalConditionIsExact) {
  auto inst = paper_instance();
  LQCost c = require_lq(inst.cost);
  c.G = 0.3 * Matrix::Identity(3, 3);
  const RiccatiSolution sol = solve_riccati(inst.theta, c, inst.horizon, kPaperDt);
  EXPECT_EQ(sol.P.back(), c.G);
}

TEST(Riccati, SingularControlWeightIsRejected) {
  const auto inst = scalar_lq(0, 1, 0, 1, 1, 0, 1);
  EXPECT_THROW(solve_riccati(inst.theta, LQCost{scalar_matrix(1), scalar_matrix(0), scalar_matrix(0)}, 1, 0.01),
               Error);
}

TEST(Feedback, GainsFromRiccati) {
  const auto inst = scalar_lq(0, 1, 0, 0.1, 1, 0, 1.5);
  const LQCost& c = require_lq(inst.cost);
  const RiccatiSolution sol = solve_riccati(inst.theta, c, 1.5, 0.015);
  const LinearGainPolicy p = lq_feedback(inst.theta, sol, c);
  EXPECT_DOUBLE_EQ(p.gains.front()(0, 0), -sol.P.front()(0, 0));

  const auto zero_b = scalar_lq(0, 0, 0, 0.1, 1, 0, 1.5);
  const LinearGainPolicy q = greedy_policy(zero_b.theta, c, 1.5, 0.015);
  for (const auto& K : q.gains) EXPECT_EQ(K(0, 0), 0.0);

  LQCost zero = c;
  zero.Q.setZero();
  for (const auto& K : greedy_policy(inst.theta, zero, 1.5, 0.015).gains) EXPECT_EQ(K(0, 0), 0.0);
}

TEST(ConjugateMap, HandDerivedValues) {
  const ModelTheta th{scalar_matrix(0), scalar_matrix(1)};
  const L1LQCost l1{scalar_matrix(0), scalar_matrix(1), scalar_matrix(0), 1.0};
  EXPECT_EQ(conjugate_map(l1, th, 0, scalar_vector(0), scalar_vector(0))[0], 0.0);
  // z = -B y = 2.
  EXPECT_DOUBLE_EQ(conjugate_map(l1, th, 0, scalar_vector(0), scalar_vector(-2))[0], 1.0);

  const Vector u = softmax(Vector::Zero(3));
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(u[i], 1.0 / 3.0, 1e-15);
  Vector z(2);
  z << std::log(2.0), 0.0;
  const Vector w = softmax(z);
  EXPECT_NEAR(w[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(w[1], 1.0 / 3.0, 1e-15);
  EXPECT_TRUE(softmax(Vector::Constant(2, 1e6)).allFinite());
}

TEST(ConjugateMap, LqAgreesWithRiccatiGain) {
  const auto inst = paper_instance();
  const LQCost& c = require_lq(inst.cost);
  const RiccatiSolution sol = solve_riccati(inst.theta, c, inst.horizon, kPaperDt);
  const LinearGainPolicy p = lq_feedback(inst.theta, sol, c);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0, 1);
  for (std::size_t j = 0; j < sol.times.size(); j += 7) {
    Vector x(3);
    for (int i = 0; i < 3; ++i) x[i] = n(rng);
    const Vector phi = conjugate_map(c, inst.theta, sol.times[j], x, sol.P[j] * x);
    EXPECT_LE((phi - p.gains[j] * x).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(ConjugateMap, NoCandidateBeatsTheMinimizer) {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> n(0, 1);
  std::gamma_distribution<double> g(1.0, 1.0);
  Matrix B(2, 2);
  B << 1.0, 0.5, -0.3, 2.0;
  const ModelTheta th{Matrix::Identity(2, 2), B};
  Matrix R(2, 2);
  R << 2.0, 0.3, 0.3, 1.0;
  const LQCost lq{Matrix::Identity(2, 2), R, Matrix::Zero(2, 2)};
  const L1LQCost l1{Matrix::Identity(2, 2), Vector(Eigen::Vector2d(1.5, 0.7)).asDiagonal(), Matrix::Zero(2, 2), 0.8};
  const EntropyLinearCost en{{Vector::Constant(2, 0.2), Vector::Constant(2, -0.1), Matrix::Constant(2, 2, 0.3)},
                             0.6,
                             Matrix::Identity(2, 2),
                             Matrix::Zero(2, 2)};
  const CostSpec costs[] = {lq, l1, en};
  for (const CostSpec& cost : costs) {
    const bool simplex = std::holds_alternative<EntropyLinearCost>(cost);
    for (int p = 0; p < 200; ++p) {
      const double t = std::abs(n(rng));
      Vector x(2), y(2);
      x << n(rng), n(rng);
      y << 2 * n(rng), 2 * n(rng);
      auto objective = [&](const Vector& a) { return (B * a).dot(y) + running_cost(cost, t, x, a); };
      const double best = objective(conjugate_map(cost, th, t, x, y));
      for (int c = 0; c < 64; ++c) {
        Vector a(2);
        if (simplex) {
          a << g(rng), g(rng);
          a /= a.sum();
        } else {
          a << 3 * n(rng), 3 * n(rng);
        }
        EXPECT_LE(best, objective(a) + 1e-9);
      }
    }
  }
}

TEST(Evaluate, ScalarLyapunovClosedForm) {
  for (double T : {0.5, 1.0, 2.0}) {
    const auto inst = scalar_lq(-1, 1, 1, 1, 1, 0, T);
    const double J = evaluate_lq_cost(inst.theta, inst.noise, require_lq(inst.cost),
                                      ConstantPolicy{scalar_vector(0.0)}, inst.x0, T, T / 100);
    EXPECT_NEAR(J, 0.5 * (T / 2 - (1 - std::exp(-2 * T)) / 4), 1e-9);
  }
}

TEST(Evaluate, NoiselessZeroStateCostsNothing) {
  auto inst = paper_instance();
  inst.noise.sigma.setZero();
  const Policy p = greedy_policy(paper_theta0(), require_lq(inst.cost), inst.horizon, kPaperDt);
  EXPECT_EQ(evaluate_lq_cost(inst.theta, inst.noise, require_lq(inst.cost), p, inst.x0, inst.horizon, kPaperDt), 0.0);
}

TEST(Evaluate, ConstantControlOfAnIntegrator) {
  // X_t = c t, J = (q c^2 T^3 / 3 + r c^2 T + G c^2 T^2) / 2.
  const double q = 0.7, r = 1.3, G = 0.4, c = 1.7, T = 1.2;
  const auto inst = scalar_lq(0, 1, 0, q, r, G, T);
  const double J = evaluate_lq_cost(inst.theta, inst.noise, require_lq(inst.cost), ConstantPolicy{scalar_vector(c)},
                                    inst.x0, T, T / 60);
  EXPECT_NEAR(J, 0.5 * (q * c * c * T * T * T / 3 + r * c * c * T + G * c * c * T * T), 1e-12);
}

TEST(Evaluate, OptimalPolicyAttainsTheRiccatiValue) {
  auto inst = paper_instance();
  inst.x0 = Vector::Constant(3, 0.4);
  const LQCost& c = require_lq(inst.cost);
  const RiccatiSolution sol = solve_riccati(inst.theta, c, inst.horizon, kPaperDt);
  const double J = evaluate_lq_cost(inst.theta, inst.noise, c, lq_feedback(inst.theta, sol, c), inst.x0,
                                    inst.horizon, kPaperDt);
  EXPECT_NEAR(J, lq_value(sol, inst.noise, inst.x0), 1e-4 * J);
}

TEST(Evaluate, RejectsMismatchedGridAndTabulatedPolicies) {
  const auto inst = paper_instance();
  const LQCost& c = require_lq(inst.cost);
  const Policy p = greedy_policy(inst.theta, c, inst.horizon, kPaperDt);
  EXPECT_THROW(evaluate_lq_cost(inst.theta, inst.noise, c, p, inst.x0, inst.horizon, kPaperDt / 2), ValidationError);
  const auto s = scalar_lq(0, 1, 1, 1, 1, 0, 1);
  TabulatedPolicy t{{0.0, 1.0}, {-1.0, 1.0}, Matrix::Zero(2, 2)};
  EXPECT_THROW(evaluate_lq_cost(s.theta, s.noise, require_lq(s.cost), t, s.x0, 1.0, 0.01), ValidationError);
}

TEST(Gap, ZeroForTheTruth) {
  const auto inst = paper_instance();
  EXPECT_EQ(performance_gap(inst.theta, inst.theta, inst, kPaperDt), 0.0);
}

TEST(Gap, ScalesSmoothlyWithThePerturbation) {
  // The greedy policy is optimal at the truth, so the gap is second order in
  // the parameter error: gap/eps shrinks with eps while gap/eps^2 settles.
  const auto inst = paper_instance();
  Matrix E = Matrix::Zero(3, 6);
  E(0, 0) = 0.6;
  E(1, 4) = -0.8;
  std::vector<double> first, second;
  for (double eps : {1e-2, 1e-3, 1e-4}) {
    const ModelTheta wrong = ModelTheta::from_stacked(inst.theta.stacked() + eps * E, 3);
    const double g = performance_gap(inst.theta, wrong, inst, kPaperDt);
    EXPECT_GE(g, 0.0);
    first.push_back(g / eps);
    second.push_back(g / (eps * eps));
  }
  EXPECT_LT(first[1], first[0]);
  EXPECT_LT(first[2], first[1]);
  EXPECT_LT(first[0], 1.0);
  EXPECT_NEAR(second[1] / second[0], 1.0, 0.05);
  EXPECT_NEAR(second[2] / second[1], 1.0, 0.05);
}

TEST(Riccati, CsvLayout) {
  const auto inst = scalar_lq(0, 1, 0, 0.1, 1, 0, 1.0);
  std::ostringstream os;
  write_riccati_csv(os, solve_riccati(inst.theta, require_lq(inst.cost), 1.0, 0.5));
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "t,P_1_1");
  const std::string text = os.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);
}
