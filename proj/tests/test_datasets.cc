#include <cmath>
#include <map>
#include <numbers>
#include <set>

#include <gtest/gtest.h>

#include "risam/datasets.h"

namespace risam {
namespace {

template <typename Pose>
double poseGap(const Pose& a, const Pose& b) {
  return Pose::Log(between(a, b)).norm();
}

TEST(G2o, ParsesSe2Vertex) {
  const auto rec = parseG2o<Pose2>(
      "VERTEX_SE2 0 0 0 0\n"
      "VERTEX_SE2 1 1 0 0\n"
      "EDGE_SE2 0 1 1 0 0 1 0 0 1 0 1\n");
  ASSERT_EQ(rec.poses.size(), 2u);
  EXPECT_EQ(rec.poses[0].x(), 0.0);
  EXPECT_EQ(rec.poses[0].y(), 0.0);
  EXPECT_EQ(rec.poses[0].theta(), 0.0);
  ASSERT_EQ(rec.edges.size(), 1u);
  EXPECT_TRUE(rec.edges[0].information.isApprox(Eigen::Matrix3d::Identity()));
  EXPECT_TRUE(rec.edges[0].noise().sqrtInformation().isApprox(Eigen::Matrix3d::Identity()));
  EXPECT_FALSE(rec.edges[0].is_outlier);
}

TEST(G2o, UpperTriangleBecomesSymmetric) {
  const auto rec = parseG2o<Pose2>(
      "VERTEX_SE2 0 0 0 0\nVERTEX_SE2 1 1 0 0\n"
      "EDGE_SE2 0 1 1 0 0 4 1 0.5 3 0.25 2\n");
  Eigen::Matrix3d expected;
  expected << 4, 1, 0.5, 1, 3, 0.25, 0.5, 0.25, 2;
  EXPECT_EQ(rec.edges[0].information, Eigen::MatrixXd(expected));
}

TEST(G2o, ParsesSe3AndNormalizesQuaternion) {
  std::string text = "VERTEX_SE3:QUAT 0 0 0 0 0 0 0 1\nVERTEX_SE3:QUAT 1 1 2 3 0 0 0 2\n";
  text += "EDGE_SE3:QUAT 0 1 1 2 3 0 0 0 1";
  for (int r = 0; r < 6; ++r)
    for (int c = r; c < 6; ++c) text += r == c ? " 1" : " 0";
  text += "\n";
  EXPECT_EQ(detectG2oDimension(text), 3);
  const auto rec = parseG2o<Pose3>(text);
  EXPECT_NEAR(rec.poses[1].quaternion().norm(), 1.0, 1e-15);
  EXPECT_TRUE(rec.poses[1].translation().isApprox(Eigen::Vector3d(1, 2, 3)));
}

TEST(G2o, DetectsDimension) {
  EXPECT_EQ(detectG2oDimension("VERTEX_SE2 0 0 0 0\n"), 2);
  EXPECT_THROW(detectG2oDimension("# nothing here\n"), ParseError);
  EXPECT_THROW(detectG2oDimension("VERTEX_SE2 0 0 0 0\nVERTEX_SE3:QUAT 1 0 0 0 0 0 0 1\n"), ParseError);
}

TEST(G2o, ReadsOutlierTagsAndGroundTruth) {
  const auto rec = parseG2o<Pose2>(
      "VERTEX_SE2 0 0 0 0\nVERTEX_SE2 1 1 0 0\nVERTEX_SE2 2 2 0 0\n"
      "# GT VERTEX_SE2 0 0 0 0\n# GT VERTEX_SE2 1 1 0 0\n# GT VERTEX_SE2 2 2 0.5 0\n"
      "EDGE_SE2 0 1 1 0 0 1 0 0 1 0 1\n"
      "EDGE_SE2 1 2 1 0 0 1 0 0 1 0 1\n"
      "EDGE_SE2 0 2 0 0 0 1 0 0 1 0 1 # outlier\n");
  EXPECT_EQ(rec.numLoopClosures(), 1u);
  EXPECT_EQ(rec.numOutliers(), 1u);
  ASSERT_EQ(rec.ground_truth.size(), 3u);
  EXPECT_EQ(rec.ground_truth[2].y(), 0.5);
}

TEST(G2o, MalformedLineReportsLineNumber) {
  const std::string text = "VERTEX_SE2 0 0 0 0\nVERTEX_SE2 1 1 0 0\nEDGE_SE2 0 1 1 0 0 1 0 0 1 0\n";
  try {
    parseG2o<Pose2>(text);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  try {
    parseG2o<Pose2>("VERTEX_SE2 0 0 0 0\nVERTEX_SE2 1 1 abc 0\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_THROW(parseG2o<Pose2>("VERTEX_SE2 0 0 0 0\nVERTEX_SE2 1 1 0 0\nEDGE_SE2 0 1 1 0 0 -1 0 0 1 0 1\n"),
               ParseError);
  EXPECT_THROW(parseG2o<Pose2>("VERTEX_SE2 0 0 0 0\nVERTEX_SE2 2 1 0 0\n"), ParseError);
  EXPECT_THROW(parseG2o<Pose2>("VERTEX_SE2 0 0 0 0\nVERTEX_SE2 1 1 0 0\n"), ParseError);
  EXPECT_THROW(parseG2o<Pose2>("BOGUS 1 2 3\n"), ParseError);
}

TEST(G2o, Se2RoundtripIsExact) {
  GridWorldParams p;
  p.num_poses = 150;
  p.seed = 3;
  const auto rec = generateGridWorld(p);
  const auto back = parseG2o<Pose2>(writeG2o(rec));
  ASSERT_EQ(back.poses.size(), rec.poses.size());
  ASSERT_EQ(back.ground_truth.size(), rec.ground_truth.size());
  ASSERT_EQ(back.edges.size(), rec.edges.size());
  for (std::size_t k = 0; k < rec.poses.size(); ++k) {
    EXPECT_EQ(back.poses[k].x(), rec.poses[k].x());
    EXPECT_EQ(back.poses[k].y(), rec.poses[k].y());
    EXPECT_EQ(back.poses[k].theta(), rec.poses[k].theta());
  }
  for (std::size_t i = 0; i < rec.edges.size(); ++i) {
    EXPECT_EQ(back.edges[i].from, rec.edges[i].from);
    EXPECT_EQ(back.edges[i].to, rec.edges[i].to);
    EXPECT_EQ(back.edges[i].is_outlier, rec.edges[i].is_outlier);
    EXPECT_EQ(back.edges[i].information, rec.edges[i].information);
    EXPECT_EQ(back.edges[i].measurement.theta(), rec.edges[i].measurement.theta());
  }
}

TEST(G2o, Se3RoundtripToRounding) {
  HelixParams p;
  p.num_poses = 80;
  const auto rec = injectOutliers(generateHelix(p), 0.2, 7, generateHelix(p).ground_truth);
  const auto back = parseG2o<Pose3>(writeG2o(rec));
  ASSERT_EQ(back.edges.size(), rec.edges.size());
  for (std::size_t k = 0; k < rec.poses.size(); ++k) EXPECT_LT(poseGap(back.poses[k], rec.poses[k]), 1e-14);
  for (std::size_t i = 0; i < rec.edges.size(); ++i) {
    EXPECT_LT(poseGap(back.edges[i].measurement, rec.edges[i].measurement), 1e-14);
    EXPECT_EQ(back.edges[i].is_outlier, rec.edges[i].is_outlier);
    EXPECT_EQ(back.edges[i].information, rec.edges[i].information);
  }
}

TEST(G2o, FileRoundtrip) {
  GridWorldParams p;
  p.num_poses = 40;
  const auto rec = generateGridWorld(p);
  const std::string path = ::testing::TempDir() + "risam_roundtrip.g2o";
  writeG2oFile(path, rec);
  EXPECT_EQ(writeG2o(readG2oFile<Pose2>(path)), writeG2o(rec));
  EXPECT_THROW(readG2oFile<Pose2>(path + ".missing"), std::runtime_error);
}

TEST(InjectOutliers, ZeroFractionLeavesGraphUnchanged) {
  GridWorldParams p;
  p.outlier_probability = 0.0;
  const auto rec = generateGridWorld(p);
  EXPECT_EQ(writeG2o(injectOutliers(rec, 0.0, 1, rec.ground_truth)), writeG2o(rec));
}

TEST(InjectOutliers, CountMatchesFraction) {
  GridWorldParams p;
  p.outlier_probability = 0.0;
  p.num_poses = 400;
  auto rec = generateGridWorld(p);
  // Keep exactly ten inlier closures.
  std::vector<Edge<Pose2>> kept;
  std::size_t closures = 0;
  for (const auto& e : rec.edges)
    if (!e.isLoopClosure() || closures++ < 10) kept.push_back(e);
  rec.edges = kept;
  ASSERT_EQ(rec.numLoopClosures(), 10u);
  const auto out = injectOutliers(rec, 0.5, 11, rec.ground_truth);
  EXPECT_EQ(out.numOutliers(), 10u);
  EXPECT_EQ(injectOutliers(rec, 0.2, 11, rec.ground_truth).numOutliers(), 3u);  // round(2.5)
}

TEST(InjectOutliers, OutliersAreInconsistentAndUnique) {
  HelixParams p;
  p.num_poses = 200;
  const auto clean = generateHelix(p);
  const auto rec = injectOutliers(clean, 0.3, 5, clean.ground_truth);
  std::set<std::pair<Key, Key>> pairs;
  for (const auto& e : rec.edges) {
    EXPECT_TRUE(pairs.emplace(std::min(e.from, e.to), std::max(e.from, e.to)).second);
    if (!e.is_outlier) continue;
    EXPECT_TRUE(e.isLoopClosure());
    EXPECT_LT(e.from, e.to);
    const Eigen::VectorXd r =
        e.noise().sqrtInformation() * Pose3::Log(between(clean.ground_truth[e.from], clean.ground_truth[e.to]));
    EXPECT_GT(chi2Cdf(6, r.squaredNorm()), 0.95);
  }
  EXPECT_THROW(injectOutliers(clean, 1.0, 5, clean.ground_truth), std::invalid_argument);
  EXPECT_THROW(injectOutliers(clean, 0.3, 5, {}), std::invalid_argument);
}

TEST(InjectOutliers, InfeasibleFractionThrows) {
  DatasetRecord<Pose2> rec;
  for (int i = 0; i < 4; ++i) rec.poses.emplace_back(i, 0, 0);
  for (Key i = 1; i < 4; ++i) rec.edges.push_back({i - 1, i, Pose2(1, 0, 0), Eigen::Matrix3d::Identity(), false});
  rec.edges.push_back({0, 3, Pose2(3, 0, 0), Eigen::Matrix3d::Identity(), false});
  // Only pairs (0,2) and (1,3) remain; five outliers cannot fit.
  EXPECT_THROW(injectOutliers(rec, 0.85, 1, rec.poses), std::invalid_argument);
}

TEST(GridWorld, ZeroNoiseInitializationMatchesTruth) {
  GridWorldParams p;
  p.sigma_theta_deg = 0.0;
  p.sigma_xy = 0.0;
  p.num_poses = 500;
  const auto rec = generateGridWorld(p);
  ASSERT_EQ(rec.poses.size(), rec.ground_truth.size());
  for (std::size_t k = 0; k < rec.poses.size(); ++k) EXPECT_LT(poseGap(rec.poses[k], rec.ground_truth[k]), 1e-9);
  EXPECT_DOUBLE_EQ(rec.edges[0].information(0, 0), 1.0 / (kMinSigma * kMinSigma));
}

TEST(GridWorld, TruthLiesOnGridWithAxisHeadings) {
  GridWorldParams p;
  p.num_poses = 1000;
  p.grid_size = 9;
  const auto rec = generateGridWorld(p);
  for (const auto& g : rec.ground_truth) {
    EXPECT_NEAR(g.x(), std::round(g.x()), 1e-12);
    EXPECT_NEAR(g.y(), std::round(g.y()), 1e-12);
    EXPECT_LE(std::abs(g.x()), 4.0);
    EXPECT_LE(std::abs(g.y()), 4.0);
    const double q = g.theta() / (std::numbers::pi / 2.0);
    EXPECT_NEAR(q, std::round(q), 1e-12);
  }
  for (std::size_t k = 1; k < rec.ground_truth.size(); ++k)
    EXPECT_NEAR((rec.ground_truth[k].translation() - rec.ground_truth[k - 1].translation()).norm(), 1.0, 1e-12);
}

TEST(GridWorld, RevisitsProduceInlierClosures) {
  GridWorldParams p;
  p.num_poses = 300;
  p.grid_size = 5;
  const auto rec = generateGridWorld(p);
  std::map<std::pair<long, long>, std::vector<Key>> cells;
  for (Key k = 0; k < rec.ground_truth.size(); ++k)
    cells[{std::lround(rec.ground_truth[k].x()), std::lround(rec.ground_truth[k].y())}].push_back(k);
  std::set<std::pair<Key, Key>> inliers;
  for (const auto& e : rec.edges)
    if (e.isLoopClosure() && !e.is_outlier) inliers.emplace(e.from, e.to);
  std::size_t expected = 0;
  for (const auto& [cell, keys] : cells)
    for (std::size_t a = 0; a < keys.size(); ++a)
      for (std::size_t b = a + 1; b < keys.size(); ++b) {
        if (keys[b] - keys[a] <= 1) continue;
        ++expected;
        EXPECT_TRUE(inliers.count({keys[a], keys[b]}));
      }
  EXPECT_EQ(inliers.size(), expected);
  EXPECT_GT(expected, 0u);
}

TEST(GridWorld, OutlierCountFollowsBinomial) {
  // Outliers are drawn only on steps with no inlier closure and i >= 2.
  double z_max = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    GridWorldParams p;
    p.seed = seed;
    const auto rec = generateGridWorld(p);
    std::set<Key> closed;
    for (const auto& e : rec.edges)
      if (e.isLoopClosure() && !e.is_outlier) closed.insert(e.to);
    std::size_t eligible = 0;
    for (Key i = 2; i < p.num_poses; ++i) eligible += closed.count(i) ? 0 : 1;
    const double n = static_cast<double>(eligible), q = p.outlier_probability;
    const double z = (static_cast<double>(rec.numOutliers()) - n * q) / std::sqrt(n * q * (1 - q));
    z_max = std::max(z_max, std::abs(z));
    for (const auto& e : rec.edges)
      if (e.is_outlier) {
        EXPECT_FALSE(closed.count(e.to));
        EXPECT_EQ(poseGap(e.measurement, Pose2::Identity()), 0.0);
      }
  }
  EXPECT_LT(z_max, 3.5);
}

TEST(GridWorld, DeterministicPerSeed) {
  GridWorldParams p;
  p.seed = 42;
  EXPECT_EQ(writeG2o(generateGridWorld(p)), writeG2o(generateGridWorld(p)));
  GridWorldParams q = p;
  q.seed = 43;
  EXPECT_NE(writeG2o(generateGridWorld(p)), writeG2o(generateGridWorld(q)));
}

TEST(Helix, ClosuresSpanOneTurn) {
  HelixParams p;
  const auto rec = generateHelix(p);
  EXPECT_EQ(rec.poses.size(), p.num_poses);
  EXPECT_EQ(rec.numLoopClosures(), p.num_poses - p.poses_per_turn);
  for (const auto& e : rec.edges)
    if (e.isLoopClosure()) EXPECT_EQ(e.to - e.from, p.poses_per_turn);
  const Eigen::Vector3d rise = rec.ground_truth[p.poses_per_turn].translation() - rec.ground_truth[0].translation();
  EXPECT_LT((rise - Eigen::Vector3d(0, 0, p.rise_per_turn)).norm(), 1e-12);
  rec.validate();
}

TEST(Record, ValidateRejectsBrokenChain) {
  DatasetRecord<Pose2> rec;
  for (int i = 0; i < 3; ++i) rec.poses.emplace_back(i, 0, 0);
  rec.edges.push_back({0, 1, Pose2(1, 0, 0), Eigen::Matrix3d::Identity(), false});
  EXPECT_THROW(rec.validate(), std::invalid_argument);
  rec.edges.push_back({1, 2, Pose2(1, 0, 0), Eigen::Matrix3d::Identity(), false});
  EXPECT_NO_THROW(rec.validate());
  rec.edges.push_back({1, 5, Pose2(1, 0, 0), Eigen::Matrix3d::Identity(), false});
  EXPECT_THROW(rec.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace risam
