#include "risam/smoother.h"

#include <algorithm>
#include <cmath>
#include <limits>

namespace risam {

template <typename Pose>
IncrementalSmoother<Pose>::IncrementalSmoother(double mu_final) : mu_final_(mu_final), tree_(Pose::kDim) {}

template <typename Pose>
void IncrementalSmoother<Pose>::addVariable(Key key, const Pose& initial) {
  if (key != theta_.size())
    throw std::invalid_argument("smoother: expected key " + std::to_string(theta_.size()) + ", got " +
                                std::to_string(key));
  graph_.addVariable(key);
  theta_.insert(key, initial);
  key_factors_.emplace_back();
  ++pending_variables_;
}

template <typename Pose>
std::size_t IncrementalSmoother<Pose>::addFactor(const Factor<Pose>& factor) {
  const std::size_t idx = graph_.add(factor);
  for (Key k : factor.keys) key_factors_[k].push_back(idx);
  lin_mu_.push_back(std::numeric_limits<double>::quiet_NaN());
  pending_factors_.push_back(idx);
  return idx;
}

template <typename Pose>
KernelSpec IncrementalSmoother<Pose>::kernelFor(std::size_t i, const MuPolicy& mu) const {
  const Factor<Pose>& f = graph_.factor(i);
  return f.isGraduated() ? f.kernel.withMu(mu(i)) : f.kernel;
}

template <typename Pose>
typename IncrementalSmoother<Pose>::UpdateResult IncrementalSmoother<Pose>::updateTree(
    const std::set<Key>& affected, const std::set<Key>& relinearize, const MuPolicy& mu) {
  constexpr int d = Pose::kDim;
  const std::size_t old_n = tree_.numVariables();
  const std::size_t new_n = pending_variables_;

  std::set<Key> marked = affected;
  marked.insert(relinearize.begin(), relinearize.end());
  std::set<Key> constrained;
  for (std::size_t fi : pending_factors_)
    for (Key k : graph_.factor(fi).keys) constrained.insert(k);
  for (std::size_t i = 0; i < new_n; ++i) constrained.insert(old_n + i);
  marked.insert(constrained.begin(), constrained.end());

  for (Key k : relinearize) {
    if (k >= old_n) continue;
    const auto seg = delta_.segment(static_cast<Eigen::Index>(k) * d, d);
    theta_.at(k) = retract(theta_.at(k), Tangent(seg));
    delta_.segment(static_cast<Eigen::Index>(k) * d, d).setZero();
  }

  UpdateResult result;
  std::vector<char> seen(graph_.size(), 0);
  auto relinearizer = [&](const std::vector<Key>& top) {
    std::vector<LinearFactor> out;
    for (Key k : top) {
      for (std::size_t fi : key_factors_[k]) {
        if (seen[fi]) continue;
        const Factor<Pose>& f = graph_.factor(fi);
        const bool inside = std::all_of(f.keys.begin(), f.keys.end(),
                                        [&](Key x) { return std::binary_search(top.begin(), top.end(), x); });
        if (!inside) continue;
        seen[fi] = 1;
        const KernelSpec kernel = kernelFor(fi, mu);
        out.push_back(linearizeFactor(f, theta_, kernel));
        const double used = f.isGraduated() ? kernel.mu : mu_final_;
        lin_mu_[fi] = used;
        if (used != mu_final_) result.convex.insert(f.keys.begin(), f.keys.end());
      }
    }
    result.relinearized_factors = out.size();
    return out;
  };
  result.tree = tree_.update(new_n, marked, constrained, relinearizer);

  if (new_n > 0) {
    const Eigen::Index old_size = delta_.size();
    delta_.conservativeResize(static_cast<Eigen::Index>(old_n + new_n) * d);
    delta_.tail(delta_.size() - old_size).setZero();
  }
  pending_variables_ = 0;
  pending_factors_.clear();
  return result;
}

template <typename Pose>
Eigen::VectorXd IncrementalSmoother<Pose>::solveGradient() const {
  const Eigen::VectorXd g = tree_.gradientAtZero();
  const double gg = g.squaredNorm();
  if (gg == 0.0) return Eigen::VectorXd::Zero(g.size());
  const double rg = tree_.rNormSquared(g);
  if (!(rg > 0.0)) return Eigen::VectorXd::Zero(g.size());
  return -(gg / rg) * g;
}

template <typename Pose>
std::set<Key> IncrementalSmoother<Pose>::markFluid(const Eigen::VectorXd& delta, double threshold) const {
  constexpr int d = Pose::kDim;
  std::set<Key> out;
  const Key n = static_cast<Key>(delta.size() / d);
  for (Key k = 0; k < n; ++k)
    if (delta.segment(static_cast<Eigen::Index>(k) * d, d).cwiseAbs().maxCoeff() > threshold) out.insert(k);
  return out;
}

template <typename Pose>
void IncrementalSmoother<Pose>::setDelta(const Eigen::VectorXd& delta) {
  if (delta.size() != delta_.size()) throw std::invalid_argument("setDelta: size mismatch");
  delta_ = delta;
}

template <typename Pose>
Values<Pose> IncrementalSmoother<Pose>::retractAll(const Eigen::VectorXd& delta) const {
  constexpr int d = Pose::kDim;
  Values<Pose> out = theta_;
  const Key n = static_cast<Key>(delta.size() / d);
  for (Key k = 0; k < n; ++k)
    out.at(k) = retract(theta_.at(k), Tangent(delta.segment(static_cast<Eigen::Index>(k) * d, d)));
  return out;
}

template <typename Pose>
double IncrementalSmoother<Pose>::cost(const Values<Pose>& values, const MuPolicy& mu) const {
  double total = 0.0;
  for (std::size_t i = 0; i < graph_.size(); ++i) total += factorCost(graph_.factor(i), values, kernelFor(i, mu));
  return total;
}

template <typename Pose>
double IncrementalSmoother<Pose>::cost(const Eigen::VectorXd& step, const MuPolicy& mu) const {
  return cost(retractAll(step), mu);
}

template class IncrementalSmoother<Pose2>;
template class IncrementalSmoother<Pose3>;

}  // namespace risam
