// Graduated optimizers: batch efficient GNC, the incremental riSAM update,
// the dog-leg line search they share, and the plain incremental baseline.
#pragma once

#include <functional>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "risam/factor_graph.h"
#include "risam/smoother.h"

namespace risam {

struct RiSAMConfig {
  double mu_init = 0.0;
  double mu_final = 1.0;
  double c = 3.0;
  double alpha_min = 1.0;
  double alpha_max = 100.0;
  double alpha_growth = 1.5;
  double wolfe_c1 = 1e-4;
  double strong_inlier_thresh = 0.25;
  double strong_outlier_thresh = 0.9;
  double relin_threshold = 0.1;
  double convergence_delta_norm = 1e-4;
  int max_polish_iterations = 10;
  int batch_max_polish_iterations = 50;
  bool adjust_initial_mu = true;

  /// Throws std::invalid_argument on an inconsistent configuration.
  void validate() const;
};

struct StepResult {
  Eigen::VectorXd delta;
  double cost = 0.0;
  bool accepted = false;
  double alpha = 0.0;
  int evaluations = 0;
  int nonfinite_evaluations = 0;
};

struct LineSearchParams {
  double alpha_min = 1.0;
  double alpha_max = 100.0;
  double alpha_growth = 1.5;
  double c1 = 1e-4;
  bool accept_first = true;  // fall back to the smallest trial instead of the zero step

  static LineSearchParams From(const RiSAMConfig& cfg, bool accept_first);
};

/// Point of norm min(alpha, |d_gn|) on the dog-leg path 0 -> d_g -> d_gn.
Eigen::VectorXd computeDoglegPoint(const Eigen::VectorXd& d_gn, const Eigen::VectorXd& d_g, double alpha);

/// cost0 - cost1 >= c1 * predicted_decrease
bool sufficientDecrease(double cost0, double cost1, double predicted_decrease, double c1);

/// Dog-leg arc search. Trial radii start at min(alpha_min, |d_gn|) and grow
/// geometrically up to min(alpha_max, |d_gn|); the last trial passing the
/// sufficient-decrease test is returned.
StepResult doglegLineSearch(const Eigen::VectorXd& d_gn, const Eigen::VectorXd& d_g, double cost0,
                            const std::function<double(const Eigen::VectorXd&)>& cost,
                            const std::function<double(const Eigen::VectorXd&)>& predicted_decrease,
                            const LineSearchParams& params);

template <typename Pose>
struct GncResult {
  Values<Pose> estimate;
  double cost = 0.0;  // at mu_final
  int graduation_iterations = 0;
  int polish_iterations = 0;
  bool converged = false;
  std::vector<double> mu_history;
};

/// One linearize/solve/step per control parameter value, then steps at
/// mu_final until the step is below cfg.convergence_delta_norm. Throws
/// std::runtime_error if an accepted step has non-finite cost.
template <typename Pose>
GncResult<Pose> efficientGnc(const FactorGraph<Pose>& graph, const Values<Pose>& x0, const RiSAMConfig& cfg);

/// Non-graduated robust optimization at a fixed control parameter, using the
/// same linear solver and monotone line search as the final GNC stage.
template <typename Pose>
GncResult<Pose> optimizeFixedMu(const FactorGraph<Pose>& graph, const Values<Pose>& x0, const RiSAMConfig& cfg,
                                double mu, int max_iterations);

/// Strong outliers advance mu_init_local one schedule step, strong inliers
/// relax it by 0.1. Only graduated factors are touched. Returns true if changed.
template <typename Pose>
bool adjustInitialMu(Factor<Pose>& f, const Values<Pose>& v, const RiSAMConfig& cfg);

struct UpdateInfo {
  bool fast_path = false;
  int graduation_iterations = 0;
  int polish_iterations = 0;
  bool converged = false;
  std::size_t convex_marked = 0;  // sum of |C| over all tree updates
  int line_search_evaluations = 0;
  int nonfinite_evaluations = 0;
  bool nonfinite_step = false;  // an applied step had non-finite cost
};

/// One ordinary incremental step: fluid relinearization, tree update at
/// mu_final, Gauss-Newton delta.
template <typename Pose>
UpdateInfo plainIncrementalUpdate(IncrementalSmoother<Pose>& smoother, double relin_threshold);

template <typename Pose>
class RiSAM {
 public:
  explicit RiSAM(const RiSAMConfig& cfg = {});

  /// New variables must carry the next contiguous keys. On keyframe updates
  /// that converge, every graduated factor's initial mu is re-classified.
  UpdateInfo update(const std::vector<Factor<Pose>>& new_factors,
                    const std::vector<std::pair<Key, Pose>>& new_values, bool keyframe = true);

  Values<Pose> estimate() const { return smoother_.estimate(); }
  const IncrementalSmoother<Pose>& smoother() const { return smoother_; }
  const RiSAMConfig& config() const { return cfg_; }
  std::size_t cumulativeConvexMarked() const { return cumulative_convex_; }

 private:
  StepResult lineSearch(const typename IncrementalSmoother<Pose>::MuPolicy& mu, bool accept_first,
                        UpdateInfo& info) const;
  void adjustAll();

  RiSAMConfig cfg_;
  IncrementalSmoother<Pose> smoother_;
  std::size_t cumulative_convex_ = 0;
};

/// Non-graduated incremental solver (quadratic, Huber, Geman-McClure,
/// Max-Mixture kernels).
template <typename Pose>
class IncrementalBaseline {
 public:
  explicit IncrementalBaseline(double relin_threshold = 0.1) : relin_threshold_(relin_threshold) {}

  UpdateInfo update(const std::vector<Factor<Pose>>& new_factors,
                    const std::vector<std::pair<Key, Pose>>& new_values);
  Values<Pose> estimate() const { return smoother_.estimate(); }
  const IncrementalSmoother<Pose>& smoother() const { return smoother_; }

 private:
  double relin_threshold_;
  IncrementalSmoother<Pose> smoother_;
};

}  // namespace risam
