#include <random>
#include <set>

#include <gtest/gtest.h>

#include "risam/bayes_tree.h"
#include "risam/ordering.h"
#include "risam/smoother.h"
#include "test_support.h"

namespace risam {
namespace {

using test::denseSolve;

auto finalMu = [](std::size_t) { return 1.0; };

// Dense oracle: every factor linearized at the smoother's linearization point.
Eigen::VectorXd oracleDelta(const IncrementalSmoother<Pose2>& s) {
  std::vector<LinearFactor> lin;
  for (const auto& f : s.graph().factors()) lin.push_back(linearizeFactor(f, s.linearizationPoint(), f.kernel));
  return denseSolve(lin, s.numVariables(), Pose2::kDim);
}

void addChainStep(IncrementalSmoother<Pose2>& s, std::mt19937& rng, Key k, const Pose2& prev) {
  const Pose2 odo = compose(Pose2(1.0, 0.0, 0.3), Pose2::Exp(test::randomTangent<Pose2>(rng, 0.05)));
  s.addVariable(k, retract(compose(prev, odo), test::randomTangent<Pose2>(rng, 0.2)));
  s.addFactor(Factor<Pose2>::Odometry(k - 1, k, odo, NoiseModel::FromInformation(test::randomInformation(rng, 3))));
}

TEST(BayesTree, EmptyUpdateLeavesTreeUnchanged) {
  IncrementalSmoother<Pose2> s;
  s.addVariable(0, Pose2(0.5, 0.0, 0.0));
  s.addFactor(Factor<Pose2>::Prior(0, Pose2::Identity(), NoiseModel::Unit(3)));
  s.updateTree({}, {}, finalMu);
  const std::string before = s.tree().dump();
  const auto res = s.updateTree({}, {}, finalMu);
  EXPECT_EQ(s.tree().dump(), before);
  EXPECT_TRUE(res.convex.empty());
  EXPECT_EQ(res.tree.removed_cliques, 0u);
}

TEST(BayesTree, SinglePriorGaussNewtonStep) {
  IncrementalSmoother<Pose2> s;
  s.addVariable(0, Pose2(1.0, 0.0, 0.0));
  s.addFactor(Factor<Pose2>::Prior(0, Pose2(2.0, 0.0, 0.0), NoiseModel::Unit(3)));
  s.updateTree({}, {}, finalMu);
  const Eigen::VectorXd d = s.solveGaussNewton();
  EXPECT_NEAR(d(0), 1.0, 1e-12);
  EXPECT_NEAR(d(1), 0.0, 1e-12);
  EXPECT_NEAR(d(2), 0.0, 1e-12);
  // One-dimensional quadratic: the Cauchy point is the Newton point.
  const Eigen::VectorXd g = s.solveGradient();
  EXPECT_LT((g - d).norm(), 1e-12);
}

TEST(BayesTree, SatisfiedGraphHasZeroSteps) {
  IncrementalSmoother<Pose2> s;
  s.addVariable(0, Pose2::Identity());
  s.addVariable(1, Pose2(1.0, 0.0, 0.0));
  s.addFactor(Factor<Pose2>::Prior(0, Pose2::Identity(), NoiseModel::Unit(3)));
  s.addFactor(Factor<Pose2>::Odometry(0, 1, Pose2(1.0, 0.0, 0.0), NoiseModel::Unit(3)));
  s.updateTree({}, {}, finalMu);
  EXPECT_LT(s.solveGaussNewton().norm(), 1e-14);
  EXPECT_LT(s.solveGradient().norm(), 1e-14);
}

TEST(BayesTree, ChainStepMatchesBatchAndTouchesOnlyRootPath) {
  std::mt19937 rng(3);
  IncrementalSmoother<Pose2> s;
  s.addVariable(0, Pose2::Identity());
  s.addFactor(Factor<Pose2>::Prior(0, Pose2::Identity(), NoiseModel::Unit(3)));
  for (Key k = 1; k < 30; ++k) addChainStep(s, rng, k, s.linearizationPoint().at(k - 1));
  s.updateTree({}, {}, finalMu);
  const std::size_t cliques_before = s.tree().numCliques();
  addChainStep(s, rng, 30, s.linearizationPoint().at(29));
  const auto res = s.updateTree({}, {}, finalMu);
  s.tree().checkInvariants();
  EXPECT_LE(res.tree.removed_cliques, 2u);
  EXPECT_LT(res.tree.removed_cliques, cliques_before);
  EXPECT_LT((s.solveGaussNewton() - oracleDelta(s)).lpNorm<Eigen::Infinity>(), 1e-8);
}

TEST(BayesTree, AllAffectedEqualsBatch) {
  std::mt19937 rng(11);
  IncrementalSmoother<Pose2> s;
  s.addVariable(0, Pose2::Identity());
  s.addFactor(Factor<Pose2>::Prior(0, Pose2::Identity(), NoiseModel::Unit(3)));
  for (Key k = 1; k < 40; ++k) {
    addChainStep(s, rng, k, s.linearizationPoint().at(k - 1));
    if (k % 7 == 0)
      s.addFactor(Factor<Pose2>::Between(k - 6, k, test::randomPose2(rng), NoiseModel::Unit(3),
                                         KernelSpec::Quadratic()));
  }
  s.updateTree({}, {}, finalMu);
  std::set<Key> all;
  for (Key k = 0; k < 40; ++k) all.insert(k);
  s.updateTree(all, all, finalMu);
  s.tree().checkInvariants();
  EXPECT_LT((s.solveGaussNewton() - oracleDelta(s)).lpNorm<Eigen::Infinity>(), 1e-8);
}

TEST(BayesTree, RandomUpdateSequencesMatchDenseSolve) {
  std::mt19937 rng(2024);
  for (int trial = 0; trial < 10; ++trial) {
    IncrementalSmoother<Pose2> s;
    s.addVariable(0, Pose2::Identity());
    s.addFactor(Factor<Pose2>::Prior(0, Pose2::Identity(), NoiseModel::Unit(3)));
    std::uniform_int_distribution<int> coin(0, 3);
    for (Key k = 1; k < 60; ++k) {
      addChainStep(s, rng, k, s.linearizationPoint().at(k - 1));
      if (k > 5 && coin(rng) == 0) {
        std::uniform_int_distribution<Key> pick(0, k - 3);
        s.addFactor(Factor<Pose2>::Between(pick(rng), k, test::randomPose2(rng), NoiseModel::Unit(3),
                                           KernelSpec::Quadratic()));
      }
      std::set<Key> affected, relin;
      if (coin(rng) == 0) {
        std::uniform_int_distribution<Key> pick(0, k - 1);
        const Key a = pick(rng);
        affected.insert(a);
        if (coin(rng) < 2) relin.insert(a);
        s.setDelta(s.solveGaussNewton());
      }
      s.updateTree(affected, relin, finalMu);
      s.tree().checkInvariants();
    }
    EXPECT_LT((s.solveGaussNewton() - oracleDelta(s)).lpNorm<Eigen::Infinity>(), 1e-8) << "trial " << trial;
  }
}

TEST(BayesTree, CauchyPointMinimizesAlongGradient) {
  std::mt19937 rng(5);
  IncrementalSmoother<Pose2> s;
  s.addVariable(0, Pose2::Identity());
  s.addFactor(Factor<Pose2>::Prior(0, Pose2(0.3, -0.2, 0.1), NoiseModel::Unit(3)));
  for (Key k = 1; k < 10; ++k) addChainStep(s, rng, k, s.linearizationPoint().at(k - 1));
  s.addFactor(Factor<Pose2>::Between(0, 9, Pose2(2.0, 1.0, 0.5), NoiseModel::Unit(3), KernelSpec::Quadratic()));
  s.updateTree({}, {}, finalMu);
  const Eigen::VectorXd dg = s.solveGradient();
  // model value m(t) = 0.5|R t dg - d|^2 relative to m(0) is -predictedDecrease
  auto model = [&](double t) { return -s.predictedDecrease(t * dg); };
  const double m1 = model(1.0);
  for (double t : {0.0, 0.5, 0.9, 0.99, 1.01, 1.1, 2.0}) EXPECT_LE(m1, model(t) + 1e-12) << t;
}

TEST(BayesTree, MarkFluid) {
  IncrementalSmoother<Pose2> s;
  Eigen::VectorXd d = Eigen::VectorXd::Zero(9);
  EXPECT_TRUE(s.markFluid(d, 0.1).empty());
  d(4) = 0.5;
  EXPECT_EQ(s.markFluid(d, 0.1), std::set<Key>{1});
  d(0) = 1e-3;
  d(8) = -1e-3;
  EXPECT_EQ(s.markFluid(d, 0.0), (std::set<Key>{0, 1, 2}));
}

TEST(BayesTree, DeterministicStructure) {
  auto build = [] {
    std::mt19937 rng(9);
    IncrementalSmoother<Pose2> s;
    s.addVariable(0, Pose2::Identity());
    s.addFactor(Factor<Pose2>::Prior(0, Pose2::Identity(), NoiseModel::Unit(3)));
    for (Key k = 1; k < 50; ++k) {
      addChainStep(s, rng, k, s.linearizationPoint().at(k - 1));
      if (k % 5 == 0)
        s.addFactor(Factor<Pose2>::Between(k / 2, k, Pose2(0.1, 0.2, 0.3), NoiseModel::Unit(3),
                                           KernelSpec::Quadratic()));
      s.updateTree({}, {}, finalMu);
    }
    return std::make_pair(s.tree().dump(), s.solveGaussNewton());
  };
  const auto a = build();
  const auto b = build();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ((a.second - b.second).norm(), 0.0);
}

TEST(BayesTree, UnderConstrainedThrows) {
  IncrementalSmoother<Pose2> s;
  s.addVariable(0, Pose2::Identity());
  s.addVariable(1, Pose2::Identity());
  s.addFactor(Factor<Pose2>::Odometry(0, 1, Pose2(1.0, 0.0, 0.0), NoiseModel::Unit(3)));
  EXPECT_THROW(s.updateTree({}, {}, finalMu), IndeterminateSystem);
}

TEST(Ordering, ConstrainedKeysComeLast) {
  const std::vector<Key> vars{0, 1, 2, 3};
  const std::vector<std::vector<Key>> factors{{0, 1}, {1, 2}, {2, 3}};
  const auto sym = minimumDegreeOrdering(vars, factors, {0});
  EXPECT_EQ(sym.order.back(), 0u);
  const auto free_order = minimumDegreeOrdering(vars, factors, {});
  EXPECT_EQ(free_order.order.front(), 0u);  // degree-1 tie broken by smaller key
}

}  // namespace
}  // namespace risam
