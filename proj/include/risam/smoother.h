// Incremental smoother: nonlinear factors, linearization points and the
// accumulated delta on top of a BayesTree, with graduated relinearization.
#pragma once

#include <functional>
#include <set>
#include <vector>

#include <Eigen/Core>

#include "risam/bayes_tree.h"
#include "risam/factor_graph.h"

namespace risam {

template <typename Pose>
class IncrementalSmoother {
 public:
  using Tangent = typename Pose::Tangent;
  /// Control parameter applied to graduated factor `i` when it is (re)linearized.
  using MuPolicy = std::function<double(std::size_t factor_index)>;

  struct UpdateResult {
    std::set<Key> convex;  // variables of factors relinearized with mu != mu_final
    BayesTree::UpdateStats tree;
    std::size_t relinearized_factors = 0;
  };

  explicit IncrementalSmoother(double mu_final = 1.0);

  /// Keys must be added in increasing, contiguous order starting at 0.
  void addVariable(Key key, const Pose& initial);
  /// Queues a factor for the next updateTree(); returns its index.
  std::size_t addFactor(const Factor<Pose>& factor);
  bool hasPending() const { return pending_variables_ > 0 || !pending_factors_.empty(); }
  const std::vector<std::size_t>& pendingFactors() const { return pending_factors_; }

  /// Re-eliminates the top touched by `affected`, the pending factors and the
  /// pending variables. Variables in `relinearize` move their linearization
  /// point to the current estimate first (and must be in `affected`).
  UpdateResult updateTree(const std::set<Key>& affected, const std::set<Key>& relinearize,
                          const MuPolicy& mu);

  /// Solution of the current linear system (relative to the linearization point).
  Eigen::VectorXd solveGaussNewton() const { return tree_.solve(); }
  /// Steepest-descent step scaled to the Cauchy point; zero if the gradient vanishes.
  Eigen::VectorXd solveGradient() const;
  /// Decrease of the linear model from the linearization point.
  double predictedDecrease(const Eigen::VectorXd& step) const { return tree_.modelDecrease(step); }

  /// Keys whose block of `delta` has max-abs entry above `threshold`.
  std::set<Key> markFluid(const Eigen::VectorXd& delta, double threshold) const;

  const Eigen::VectorXd& delta() const { return delta_; }
  void setDelta(const Eigen::VectorXd& delta);

  const Values<Pose>& linearizationPoint() const { return theta_; }
  Values<Pose> estimate() const { return retractAll(delta_); }
  Values<Pose> retractAll(const Eigen::VectorXd& delta) const;

  /// Robust cost at theta (+) step with the kernels of `mu`.
  double cost(const Eigen::VectorXd& step, const MuPolicy& mu) const;
  double cost(const Values<Pose>& values, const MuPolicy& mu) const;
  KernelSpec kernelFor(std::size_t i, const MuPolicy& mu) const;

  const FactorGraph<Pose>& graph() const { return graph_; }
  Factor<Pose>& factor(std::size_t i) { return graph_.factor(i); }
  const BayesTree& tree() const { return tree_; }
  std::size_t numVariables() const { return theta_.size(); }
  double muFinal() const { return mu_final_; }

  /// Control parameter used at each factor's most recent linearization
  /// (mu_final for non-graduated factors, NaN if never linearized).
  const std::vector<double>& linearizationMu() const { return lin_mu_; }
  /// Factor indices adjacent to `key`.
  const std::vector<std::size_t>& factorsOf(Key key) const { return key_factors_.at(key); }

 private:
  double mu_final_;
  FactorGraph<Pose> graph_;
  Values<Pose> theta_;
  Eigen::VectorXd delta_;
  BayesTree tree_;
  std::vector<std::vector<std::size_t>> key_factors_;
  std::vector<double> lin_mu_;
  std::vector<std::size_t> pending_factors_;
  std::size_t pending_variables_ = 0;
};

}  // namespace risam
