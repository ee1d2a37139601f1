// Trajectory error, keyframe-weighted incremental metrics, loop-closure
// classification scores and the inlier-only reference solution.
#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "risam/datasets.h"
#include "risam/factor_graph.h"

namespace risam {

/// RMS translation error after moving `x` onto `reference` by the transform
/// that aligns their first poses. Throws std::invalid_argument on a key mismatch.
template <typename Pose>
double ate(const Values<Pose>& x, const Values<Pose>& reference);

/// Sum over keyframes of k / (sum of k) * value; `uniform` weighs all equally.
/// Throws std::invalid_argument for an empty list or an all-zero index set.
double incrementalMetric(const std::vector<std::pair<std::size_t, double>>& values, bool uniform = false);

struct PrecisionRecall {
  double precision = 1.0;
  double recall = 1.0;
};

/// Positive = inlier. Empty denominators yield 1.
PrecisionRecall precisionRecall(const std::vector<bool>& classified_inlier, const std::vector<bool>& is_inlier);

/// Loop closures are inliers when their chi-square percentile is below this.
inline constexpr double kInlierPercentile = 0.95;

/// Prior that anchors the first pose of every online trial.
inline constexpr double kPriorSigma = 1e-3;

/// Inlier-only quadratic incremental solve, snapshotted after each iteration
/// listed in `keyframes` (ascending).
template <typename Pose>
std::vector<Values<Pose>> pseudoGroundTruth(const DatasetRecord<Pose>& record, const std::vector<std::size_t>& keyframes,
                                            double relin_threshold = 0.1);

}  // namespace risam
