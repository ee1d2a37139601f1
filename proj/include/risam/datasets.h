// Pose-graph datasets: g2o text IO with outlier tags, outlier injection and
// synthetic trajectory generators.
//
// g2o records (information values are the row-major upper triangle):
//   VERTEX_SE2 id x y theta
//   EDGE_SE2 i j dx dy dtheta I11 I12 I13 I22 I23 I33
//   VERTEX_SE3:QUAT id x y z qx qy qz qw
//   EDGE_SE3:QUAT i j x y z qx qy qz qw I11 I12 .. I16 I22 .. I66   (21 values)
// An edge line may end with "# outlier" or "# inlier". Ground-truth poses are
// stored as comment lines "# GT VERTEX_SE2 ..." so files stay valid g2o.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "risam/factor_graph.h"
#include "risam/geometry.h"

namespace risam {

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

template <typename Pose>
struct Edge {
  Key from = 0;
  Key to = 0;
  Pose measurement;
  Eigen::MatrixXd information;
  bool is_outlier = false;

  bool isLoopClosure() const { return (from > to ? from - to : to - from) > 1; }
  NoiseModel noise() const { return NoiseModel::FromInformation(information); }
};

template <typename Pose>
struct DatasetRecord {
  std::vector<Pose> poses;         // initial estimate, indexed by key
  std::vector<Pose> ground_truth;  // empty when unknown
  std::vector<Edge<Pose>> edges;   // file order

  std::size_t numLoopClosures() const;
  std::size_t numOutliers() const;
  /// Throws std::invalid_argument unless keys are in range and consecutive
  /// poses are linked by an edge.
  void validate() const;
};

/// 2 for SE(2) records, 3 for SE(3); throws ParseError if neither or mixed.
int detectG2oDimension(std::string_view text);

template <typename Pose>
DatasetRecord<Pose> parseG2o(std::string_view text);

template <typename Pose>
std::string writeG2o(const DatasetRecord<Pose>& record);

template <typename Pose>
DatasetRecord<Pose> readG2oFile(const std::string& path);

template <typename Pose>
void writeG2oFile(const std::string& path, const DatasetRecord<Pose>& record);

/// Adds n = round(f L / (1 - f)) identity loop closures between random
/// non-adjacent, not yet connected pose pairs, where L is the number of inlier
/// loop closures. Each is re-sampled until its chi-square percentile against
/// `reference` exceeds 0.95. Throws std::invalid_argument if infeasible.
template <typename Pose>
DatasetRecord<Pose> injectOutliers(const DatasetRecord<Pose>& record, double fraction, std::uint64_t seed,
                                   const std::vector<Pose>& reference);

struct GridWorldParams {
  std::size_t num_poses = 200;
  double step_length = 1.0;
  double sigma_theta_deg = 0.05;
  double sigma_xy = 0.01;  // meters per unit step
  double outlier_probability = 0.1;
  int grid_size = 25;  // cells per side
  double p_forward = 0.5;
  double p_left = 0.25;
  std::uint64_t seed = 0;
};

/// Random walk on a bounded grid. Closures to every earlier visit of the
/// current cell are inliers; steps without one get an identity outlier
/// closure to a random non-adjacent pose with outlier_probability.
DatasetRecord<Pose2> generateGridWorld(const GridWorldParams& params);

struct HelixParams {
  std::size_t num_poses = 300;
  std::size_t poses_per_turn = 25;
  double radius = 5.0;
  double rise_per_turn = 1.0;
  double sigma_translation = 0.02;
  double sigma_rotation = 0.005;  // radians
  std::uint64_t seed = 0;
};

/// Helical SE(3) trajectory; every pose closes a loop with the pose one turn
/// below it.
DatasetRecord<Pose3> generateHelix(const HelixParams& params);

/// Measurements revealed by one online iteration: pose `key` with the odometry
/// edge reaching it and every loop closure whose newer endpoint is `key`.
struct Iteration {
  Key key = 0;
  std::vector<std::size_t> odometry;  // edge indices; empty for the first pose
  std::vector<std::size_t> closures;
};

/// One iteration per pose, in key order.
template <typename Pose>
std::vector<Iteration> splitIterations(const DatasetRecord<Pose>& record);

template <typename Pose>
struct IterationInput {
  std::vector<Factor<Pose>> factors;
  std::vector<std::pair<Key, Pose>> values;
  std::vector<std::size_t> closure_edges;  // edge index of each closure factor, in factor order
};

/// Factors and the new variable for one iteration. The first pose is anchored
/// by a prior with standard deviation `prior_sigma`; later poses are
/// initialized by composing odometry onto `current`. Odometry is a known
/// inlier; loop closures get `closure_kernel`.
template <typename Pose>
IterationInput<Pose> iterationInput(const DatasetRecord<Pose>& record, const Iteration& it, const Values<Pose>& current,
                                    const KernelSpec& closure_kernel, bool skip_outliers, double prior_sigma);

/// Every m-th iteration index (m, 2m, ...) plus the last one.
std::vector<std::size_t> keyframeIndices(std::size_t num_iterations, std::size_t interval);

/// Noise model floor for generators with zero noise.
inline constexpr double kMinSigma = 1e-6;

}  // namespace risam
