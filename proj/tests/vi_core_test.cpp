#include "l1vi/vi_core.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "test_support.hpp"

namespace l1vi {
namespace {

using testing::diag_problem;
using testing::make_problem;
using testing::vec;

TEST(ComputeSlack, ScalarExample) {
  const auto p = diag_problem({2.0}, 1.0, {3.0});
  EXPECT_DOUBLE_EQ(compute_slack(p, vec({1.0}))(0), 1.0);
}

TEST(ComputeSlack, ZeroStateGivesRhs) {
  const auto p = diag_problem({2.0, 4.0}, 1.0, {3.0, 1.0});
  EXPECT_EQ(compute_slack(p, Vector::Zero(2)), p.u());
}

TEST(ComputeSlack, DiagonalExample) {
  const auto p = diag_problem({2.0, 4.0}, 1.0, {3.0, 1.0});
  EXPECT_EQ(compute_slack(p, vec({1.0, 0.0})), vec({1.0, 1.0}));
}

TEST(ComputeSlack, RejectsWrongLength) {
  const auto p = diag_problem({2.0, 4.0}, 1.0, {3.0, 1.0});
  try {
    compute_slack(p, vec({1.0}));
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimensionMismatch);
  }
}

TEST(ComputeSlack, AffineInState) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = oracle::random_nonsymmetric_problem(5, rng);
    const Vector y1 = oracle::random_normal_matrix(5, 1, rng);
    const Vector y2 = oracle::random_normal_matrix(5, 1, rng);
    const Vector lhs = compute_slack(p, y1 + y2);
    const Vector rhs = compute_slack(p, y1) + compute_slack(p, y2) - p.u();
    EXPECT_LE(testing::max_abs_diff(lhs, rhs), 1e-12 * (1.0 + p.u().cwiseAbs().maxCoeff()));
  }
}

TEST(ComplementarityResidual, ExactScalarSolution) {
  const auto p = diag_problem({2.0}, 1.0, {3.0});
  const auto r = complementarity_residual(p, vec({1.0}), vec({1.0}));
  EXPECT_EQ(r.max_norm(), 0.0);
}

TEST(ComplementarityResidual, ZeroStateInsideBand) {
  const auto p = diag_problem({2.0}, 1.0, {0.5});
  const auto r = complementarity_residual(p, vec({0.0}), vec({0.5}));
  EXPECT_EQ(r.balance(0), 0.0);
  EXPECT_EQ(r.slackness(0), 0.0);
  EXPECT_EQ(r.bound(0), 0.0);
}

TEST(ComplementarityResidual, BoundViolation) {
  const auto p = diag_problem({2.0}, 1.0, {3.0});
  const auto r = complementarity_residual(p, vec({1.0}), vec({2.0}));
  EXPECT_EQ(r.bound(0), 1.0);
}

TEST(ClassifySets, MixedExample) {
  const auto s = classify_sets(vec({1.0, 0.0, 0.0}), vec({1.0, 1.0, 0.2}), 1.0);
  EXPECT_EQ(s.inactive(), (IndexList{0}));
  EXPECT_EQ(s.biactive(), (IndexList{1}));
  EXPECT_EQ(s.strongly_active, (IndexList{2}));
  EXPECT_EQ(s.inactive_plus, (IndexList{0}));
  EXPECT_EQ(s.biactive_plus, (IndexList{1}));
}

TEST(ClassifySets, AllStronglyActive) {
  const auto s = classify_sets(Vector::Zero(4), vec({0.1, -0.5, 0.9, 0.0}), 1.0);
  EXPECT_EQ(s.strongly_active.size(), 4u);
  EXPECT_EQ(s.biactive_count(), 0u);
}

TEST(ClassifySets, NegativeInactive) {
  const auto s = classify_sets(vec({-2.0}), vec({-1.0}), 1.0);
  EXPECT_EQ(s.inactive_minus, (IndexList{0}));
  EXPECT_TRUE(s.inactive_plus.empty());
}

TEST(ClassifySets, RejectsInconsistentSlackness) {
  try {
    classify_sets(vec({1.0}), vec({0.3}), 1.0);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInconsistentSlackness);
  }
}

TEST(ClassifySets, WeightedBiactiveUsesG) {
  const double g = 15.0;
  const auto s = classify_sets(vec({0.0, 0.0, 2.0}), vec({-15.0, 14.0, 15.0}), g);
  EXPECT_EQ(s.biactive_minus, (IndexList{0}));
  EXPECT_EQ(s.strongly_active, (IndexList{1}));
  EXPECT_EQ(s.inactive_plus, (IndexList{2}));
}

TEST(ClassifySets, PartitionProperty) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> kind(0, 4);
  std::uniform_real_distribution<double> mag(0.1, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    const Index n = 1 + trial % 9;
    const double g = mag(rng);
    Vector y(n), q(n);
    for (Index i = 0; i < n; ++i) {
      switch (kind(rng)) {
        case 0: y(i) = mag(rng); q(i) = g; break;
        case 1: y(i) = -mag(rng); q(i) = -g; break;
        case 2: y(i) = 0.0; q(i) = g * (mag(rng) / 3.1 - 0.5); break;
        case 3: y(i) = 0.0; q(i) = g; break;
        default: y(i) = 0.0; q(i) = -g; break;
      }
    }
    const auto s = classify_sets(y, q, g);
    std::multiset<Index> all;
    for (const IndexList* l : {&s.inactive_plus, &s.inactive_minus, &s.strongly_active,
                               &s.biactive_plus, &s.biactive_minus}) {
      all.insert(l->begin(), l->end());
    }
    ASSERT_EQ(all.size(), static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) EXPECT_EQ(all.count(i), 1u);
  }
}

TEST(ViProblem, RejectsNonPositiveWeight) {
  EXPECT_THROW(diag_problem({2.0}, 0.0, {1.0}), Error);
  EXPECT_THROW(diag_problem({2.0}, -1.0, {1.0}), Error);
}

TEST(ViProblem, RejectsIndefiniteMatrix) {
  EXPECT_THROW(diag_problem({2.0, -1.0}, 1.0, {1.0, 1.0}), Error);
}

TEST(ViProblem, RejectsMissingDiagonal) {
  SparseMatrix A(2, 2);
  A.insert(0, 0) = 1.0;
  A.insert(1, 0) = 1.0;
  EXPECT_THROW(ViProblem::create(A, 1.0, Vector::Ones(2)), Error);
}

TEST(ViProblem, RejectsRhsLength) {
  EXPECT_THROW(make_problem(Eigen::MatrixXd::Identity(2, 2), 1.0, Vector::Ones(3)), Error);
}

TEST(ViProblem, DetectsSymmetry) {
  std::mt19937_64 rng(3);
  EXPECT_TRUE(oracle::random_spd_problem(4, rng).symmetric_hint());
  EXPECT_FALSE(oracle::random_nonsymmetric_problem(4, rng).symmetric_hint());
}

TEST(ViProblem, WithRhsSharesOperator) {
  const auto p = diag_problem({2.0, 4.0}, 1.0, {3.0, 1.0});
  const auto p2 = p.with_rhs(vec({5.0, 6.0}));
  EXPECT_EQ(&p.A(), &p2.A());
  EXPECT_EQ(p2.u(), vec({5.0, 6.0}));
}

TEST(IndexSets, ConeMembership) {
  const auto s = classify_sets(vec({1.0, 0.0, 0.0}), vec({1.0, -1.0, 0.2}), 1.0);
  EXPECT_TRUE(s.in_cone(vec({-3.0, -1.0, 0.0})));
  EXPECT_FALSE(s.in_cone(vec({0.0, 1.0, 0.0})));
  EXPECT_FALSE(s.in_cone(vec({0.0, 0.0, 0.1})));
}

}  // namespace
}  // namespace l1vi
