// Benchmark harness: online trials of each method over a dataset, keyframe
// snapshots and metrics, per-seed tables and quantile summaries.
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "risam/datasets.h"
#include "risam/metrics.h"
#include "risam/optimizer.h"

namespace risam {

enum class Method { RiSAM, BatchGnc, GemanMcClure, Huber, MaxMixture, Quadratic };

std::string_view methodName(Method m);
/// Accepts risam, batch_gnc, gm, huber, maxmix, quadratic.
Method parseMethod(std::string_view name);

struct TrialOptions {
  RiSAMConfig risam;  // c is shared with the robust baselines
  std::size_t keyframe_interval = 25;
  bool batch_every_iteration = false;
  bool uniform_weights = false;
  double prior_sigma = kPriorSigma;
};

template <typename Pose>
struct KeyframeSnapshot {
  std::size_t k = 0;
  Values<Pose> estimate;
  std::vector<bool> classified_inlier;  // loop closures revealed so far, in edge order
  std::vector<bool> is_inlier;
  double ate = 0.0;
  PrecisionRecall pr;
};

template <typename Pose>
struct TrialResult {
  Method method = Method::RiSAM;
  bool failed = false;
  std::string error;
  double iate = 0.0;
  double iprecision = 0.0;
  double irecall = 0.0;
  std::vector<double> iteration_seconds;  // optimizer time only
  std::vector<KeyframeSnapshot<Pose>> snapshots;
  std::size_t convex_marked = 0;  // riSAM only
  int nonfinite_steps = 0;
  int nonfinite_evaluations = 0;

  double totalSeconds() const;
  double maxIterationSeconds() const;
  double medianIterationSeconds() const;
};

/// Feeds the dataset one pose at a time. `reference` holds the pseudo ground
/// truth at keyframeIndices(poses, keyframe_interval). Solver failures are
/// reported through TrialResult::failed.
template <typename Pose>
TrialResult<Pose> runTrial(const DatasetRecord<Pose>& record, Method method, const TrialOptions& options,
                           const std::vector<Values<Pose>>& reference);

/// Convenience overload computing the pseudo ground truth itself.
template <typename Pose>
TrialResult<Pose> runTrial(const DatasetRecord<Pose>& record, Method method, const TrialOptions& options);

/// One line per keyframe pose: "k key x y theta" or "k key x y z qx qy qz qw".
template <typename Pose>
void writeTrajectoryDump(std::ostream& os, const TrialResult<Pose>& result);

// Dataset sources and flat key=value configuration.

enum class SourceKind { File, GridWorld, Helix };

struct RunConfig {
  TrialOptions trial;
  SourceKind source = SourceKind::GridWorld;
  std::string dataset_path;
  GridWorldParams grid;
  HelixParams helix;
  double outlier_fraction = 0.0;  // injected on top of the source's own outliers
};

/// Sets one key; throws std::invalid_argument for an unknown key or bad value.
void applyConfigKey(RunConfig& cfg, std::string_view key, std::string_view value);
/// Lines "key = value"; '#' starts a comment. Errors carry the line number.
void applyConfigText(RunConfig& cfg, std::string_view text);
/// Every key with its resolved value, ';'-separated.
std::string describeConfig(const RunConfig& cfg);

/// Builds the trial dataset for one seed. File datasets are re-seeded only
/// through outlier injection.
template <typename Pose>
DatasetRecord<Pose> makeDataset(const RunConfig& cfg, std::uint64_t seed);

// Suites.

struct TrialRow {
  std::string method;
  std::string condition;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  double iate = 0.0;
  double iprecision = 0.0;
  double irecall = 0.0;
  double total_seconds = 0.0;
  double max_iteration_seconds = 0.0;
  std::string config;
};

struct Quantiles {
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
};

/// Linear-interpolation quartiles; throws std::invalid_argument when empty.
Quantiles quantiles(std::vector<double> values);

struct SummaryRow {
  std::string method;
  std::string condition;
  std::size_t trials = 0;
  std::size_t failed = 0;
  Quantiles iate, iprecision, irecall, total_seconds;
};

/// Groups by method and condition in first-seen order; failed rows are
/// counted but excluded from the quantiles.
std::vector<SummaryRow> summarize(const std::vector<TrialRow>& rows);

void writeTrialCsv(std::ostream& os, const std::vector<TrialRow>& rows);
void writeSummaryCsv(std::ostream& os, const std::vector<SummaryRow>& rows);

template <typename Pose>
TrialRow makeRow(const TrialResult<Pose>& result, std::string condition, std::uint64_t seed, std::string config);

/// Worker count: RISAM_THREADS if set and positive, else hardware concurrency.
std::size_t workerCount();

/// Runs independent jobs on up to workerCount() threads; results keep job order.
std::vector<std::vector<TrialRow>> runJobs(const std::vector<std::function<std::vector<TrialRow>()>>& jobs);

}  // namespace risam
