#include "l1vi/stationarity.hpp"

#include <gtest/gtest.h>

#include <random>

#include "l1vi/oracle.hpp"
#include "l1vi/trust_region.hpp"
#include "test_support.hpp"

namespace l1vi {
namespace {

using testing::diag_problem;
using testing::vec;

ControlProblem scalar_control(double alpha) {
  return ControlProblem::create(diag_problem({2.0}, 1.0, {0.0}), alpha, vec({1.0}));
}

double scalar_optimum(const ControlProblem& cp) {
  auto j = [&](double u) { return reduced_cost(cp, vec({u}), HuberParams::tight()); };
  return oracle::golden_section_1d(j, 1.5, 4.0, 1e-12);
}

TEST(BStationarity, ScalarOptimum) {
  const auto cp = scalar_control(0.01);
  const Vector u = vec({scalar_optimum(cp)});
  EXPECT_GE(check_b_stationarity(cp, u, HuberParams::tight()), -1e-6);
}

TEST(BStationarity, FarFromOptimumHasDescent) {
  const auto cp = scalar_control(0.01);
  EXPECT_LT(check_b_stationarity(cp, vec({10.0}), HuberParams{}), -1.0);
}

TEST(BStationarity, OppositeDirectionsAtSmoothPoint) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal;
  const auto inst = testing::planted_instance(6, 0, true, rng);
  const auto cp = ControlProblem::create(inst.problem, 0.1, oracle::random_rhs(6, rng));
  const Vector& u = inst.problem.u();
  const auto sets = classify_sets(inst.solution, inst.problem.g());
  DerivativeSolver solver(inst.problem, sets);
  for (int k = 0; k < 10; ++k) {
    Vector d(6);
    for (Index i = 0; i < 6; ++i) d(i) = normal(rng);
    const double plus = directional_cost_derivative(cp, u, inst.solution, d, solver.cone_vi(d));
    const double minus =
        directional_cost_derivative(cp, u, inst.solution, -d, solver.cone_vi(-d));
    EXPECT_NEAR(plus, -minus, 1e-10);
  }
}

TEST(BStationarity, DirectionCountAndDeterminism) {
  std::mt19937_64 rng(6);
  const auto vi = oracle::random_spd_problem(5, rng);
  const auto cp = ControlProblem::create(vi, 0.1, oracle::random_rhs(5, rng));
  const auto a = check_b_stationarity_detailed(cp, vi.u(), HuberParams{});
  const auto b = check_b_stationarity_detailed(cp, vi.u(), HuberParams{});
  EXPECT_EQ(a.directions, 2u * 5u + 32u);
  EXPECT_EQ(a.min_directional, b.min_directional);
  EXPECT_EQ(a.worst, b.worst);
  DirectionSampling coord_only;
  coord_only.random = 0;
  EXPECT_EQ(check_b_stationarity_detailed(cp, vi.u(), HuberParams{}, coord_only).directions,
            10u);
}

TEST(BStationarity, PositiveRescalingKeepsSign) {
  // j'(u; c d) = c j'(u; d) for c > 0, also across a biactive index.
  const auto vi = diag_problem({2.0, 2.0}, 3.0, {3.0, 0.3});
  const auto cp = ControlProblem::create(vi, 0.1, vec({-1.0, 2.0}));
  const auto sol = solve_vi(vi, HuberParams::tight()).solution;
  const auto sets = classify_sets(sol, 3.0);
  ASSERT_EQ(sets.biactive_count(), 1u);
  DerivativeSolver solver(vi, sets);
  for (const Vector& d : {vec({1.0, 5.0}), vec({-1.0, 5.0}), vec({2.0, -1.0})}) {
    const double base = directional_cost_derivative(cp, vi.u(), sol, d, solver.cone_vi(d));
    for (double c : {0.01, 7.0}) {
      const double scaled =
          directional_cost_derivative(cp, vi.u(), sol, c * d, solver.cone_vi(c * d));
      EXPECT_NEAR(scaled, c * base, 1e-12 * (1.0 + std::abs(c * base)));
    }
  }
}

TEST(CStationarity, Examples) {
  const Vector y = vec({1.0, -2.0, 0.0});
  auto [mp, my] = check_c_stationarity(Vector::Zero(3), vec({1.0, 2.0, 3.0}), y);
  EXPECT_EQ(mp, 0.0);
  EXPECT_EQ(my, 0.0);
  std::tie(mp, my) = check_c_stationarity(y, vec({1.0, 0.0, 0.0}), y);
  EXPECT_EQ(my, 5.0);
  EXPECT_FALSE(c_stationarity_passes(y, vec({1.0, 0.0, 0.0}), y, 1e-6));
  EXPECT_TRUE(c_stationarity_passes(Vector::Zero(3), vec({1.0, 2.0, 3.0}), y, 0.0));
}

TEST(StrongStationarity, ScalarOptimumReducesToSmoothKkt) {
  const auto cp = scalar_control(0.01);
  const Vector u = vec({scalar_optimum(cp)});
  const auto sol = solve_vi(cp.state_problem(u), HuberParams::tight()).solution;
  const auto sets = classify_sets(sol, 1.0);
  ASSERT_EQ(sets.inactive().size(), 1u);
  const auto rep = check_strong_stationarity(cp, u, sol, sets);
  // mu = (y - z) - A'p with p = -alpha u is the smooth KKT residual here.
  EXPECT_NEAR(rep.mu(0), (sol.y(0) - 1.0) + 2.0 * 0.01 * u(0), 1e-15);
  EXPECT_LE(rep.strong.mu_sign_inactive, 1e-8);
  EXPECT_TRUE(rep.verdicts.strong);
  EXPECT_TRUE(rep.verdicts.c);
}

TEST(StrongStationarity, ViolationOnStronglyActiveIndex) {
  const auto cp = ControlProblem::create(diag_problem({2.0, 2.0}, 1.0, {0.0, 0.0}), 1.0,
                                         Vector::Zero(2));
  const Vector u = vec({0.5, 3.0});
  const auto sol = solve_vi(cp.state_problem(u), HuberParams{}).solution;
  const auto sets = classify_sets(sol, 1.0);
  ASSERT_TRUE(sets.is_strongly_active(0));
  const auto rep = check_strong_stationarity(cp, u, sol, sets);
  EXPECT_EQ(rep.strong.p_in_cone, 0.5);
  EXPECT_FALSE(rep.verdicts.strong);
}

/// A point (u, z) that satisfies the strong stationarity system by
/// construction, including biactive indices.
struct Certificate {
  ControlProblem cp;
  Vector u;
  std::size_t biactive = 0;
};

Certificate strong_certificate(Index n, double alpha, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal;
  for (;;) {
    const Eigen::MatrixXd A = oracle::random_spd_matrix(n, rng);
    Vector y = Vector::Zero(n);
    for (Index i = 0; i < n; ++i) {
      if (unif(rng) < 0.4) y(i) = (unif(rng) < 0.5 ? -1.0 : 1.0) * (0.5 + unif(rng));
    }
    const Vector w = A * y;
    std::vector<double> mags;
    for (Index i = 0; i < n; ++i) {
      if (y(i) == 0.0) mags.push_back(std::abs(w(i)));
    }
    if (mags.size() < 2) continue;
    std::sort(mags.begin(), mags.end());
    const double g = 0.5 * (mags[mags.size() / 2 - 1] + mags[mags.size() / 2]);
    bool separated = g > 0.1;
    for (double m : mags) separated = separated && std::abs(m - g) > 0.05 * g;
    if (!separated) continue;
    // Active indices with |(Ay)_i| < g get q = -(Ay)_i so u_i = 0; the others
    // become biactive with sign(q_i) u_i <= 0, which keeps p = -alpha u in K(y).
    Vector q(n);
    Vector mu = Vector::Zero(n);
    std::size_t biactive = 0;
    for (Index i = 0; i < n; ++i) {
      if (y(i) != 0.0) {
        q(i) = g * (y(i) > 0.0 ? 1.0 : -1.0);
      } else if (std::abs(w(i)) < g) {
        q(i) = -w(i);
        mu(i) = normal(rng);
      } else {
        q(i) = w(i) > 0.0 ? -g : g;
        mu(i) = (q(i) > 0.0 ? 1.0 : -1.0) * unif(rng);
        ++biactive;
      }
    }
    const Vector u = w + q;
    const Vector p = -alpha * u;
    const Vector z = y - mu - A.transpose() * p;
    auto vi = ViProblem::create(oracle::dense_to_sparse(A), g, Vector::Zero(n));
    return {ControlProblem::create(std::move(vi), alpha, z), u, biactive};
  }
}

TEST(StationarityChain, StrongImpliesCAndB) {
  std::mt19937_64 rng(77);
  std::size_t with_biactive = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const Index n = 4 + trial % 5;
    const auto cert = strong_certificate(n, 0.05 + 0.1 * (trial % 3), rng);
    with_biactive += cert.biactive > 0;
    const auto rep = certify_stationarity(cert.cp, cert.u, HuberParams::tight());
    ASSERT_EQ(rep.biactive_count, cert.biactive);
    EXPECT_TRUE(rep.verdicts.strong) << "trial " << trial << " residual " << rep.strong.max();
    if (rep.verdicts.strong) {
      EXPECT_TRUE(rep.verdicts.c);
      ASSERT_TRUE(rep.verdicts.b.has_value());
      EXPECT_TRUE(*rep.verdicts.b) << "B margin " << *rep.b_min_directional;
    }
  }
  EXPECT_GE(with_biactive, 10u);
}

TEST(StationarityChain, OptimizerOutputIsBStationary) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 6; ++trial) {
    const Index n = 3 + trial;
    const auto vi = oracle::random_spd_problem(n, rng);
    const auto cp = ControlProblem::create(vi, 0.05, oracle::random_rhs(n, rng) / n);
    TrustRegionConfig cfg;
    cfg.stop_tol = 1e-8;
    const auto res = optimize(cp, cfg, HuberParams{}, vi.u());
    ASSERT_TRUE(res.converged);
    const auto rep = certify_stationarity(cp, res.u_final, HuberParams{});
    if (rep.biactive_count == 0) EXPECT_GE(*rep.b_min_directional, -1e-6);
    if (rep.verdicts.strong) EXPECT_TRUE(rep.verdicts.c && *rep.verdicts.b);
  }
}

}  // namespace
}  // namespace l1vi
