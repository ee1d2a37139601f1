// Pose-graph problem container: variables, factors with noise models and
// kernel state, robust error evaluation and IRLS linearization.
#pragma once

#include <algorithm>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "risam/geometry.h"
#include "risam/kernels.h"
#include "risam/linear_factor.h"

namespace risam {

/// Gaussian noise stored as a square-root information matrix L with
/// L^T L = information.
class NoiseModel {
 public:
  NoiseModel() = default;
  explicit NoiseModel(Eigen::MatrixXd sqrt_information);

  /// Throws std::invalid_argument if `information` is not positive definite.
  static NoiseModel FromInformation(const Eigen::MatrixXd& information);
  static NoiseModel Sigmas(const Eigen::VectorXd& sigmas);
  static NoiseModel Isotropic(int dim, double sigma);
  static NoiseModel Unit(int dim) { return Isotropic(dim, 1.0); }

  int dim() const { return static_cast<int>(sqrt_information_.rows()); }
  const Eigen::MatrixXd& sqrtInformation() const { return sqrt_information_; }
  Eigen::MatrixXd information() const { return sqrt_information_.transpose() * sqrt_information_; }

 private:
  Eigen::MatrixXd sqrt_information_;
};

template <typename Pose>
struct Factor {
  std::vector<Key> keys;  // one key for a prior, two for a between factor
  Pose measurement;
  NoiseModel noise;
  KernelSpec kernel;
  double mu_init_local = 0.0;
  bool known_inlier = false;

  static Factor Prior(Key key, const Pose& z, const NoiseModel& noise) {
    return Factor{{key}, z, noise, KernelSpec::Quadratic(), 0.0, true};
  }
  /// Known inliers always carry the quadratic kernel.
  static Factor Odometry(Key a, Key b, const Pose& z, const NoiseModel& noise) {
    return Factor{{a, b}, z, noise, KernelSpec::Quadratic(), 0.0, true};
  }
  static Factor Between(Key a, Key b, const Pose& z, const NoiseModel& noise, const KernelSpec& kernel) {
    return Factor{{a, b}, z, noise, kernel, 0.0, false};
  }

  bool isPrior() const { return keys.size() == 1; }
  bool isGraduated() const { return kernel.kind == KernelKind::SIG; }
  int dim() const { return Pose::kDim; }
};

/// Pose estimates indexed by key.
template <typename Pose>
class Values {
 public:
  void insert(Key key, const Pose& pose);
  void insertOrAssign(Key key, const Pose& pose);
  bool contains(Key key) const { return key < present_.size() && present_[key]; }
  /// Throws std::out_of_range for a missing key.
  const Pose& at(Key key) const;
  Pose& at(Key key);
  std::size_t size() const { return count_; }
  bool empty() const { return count_ == 0; }
  std::vector<Key> keys() const;
  /// One past the largest key.
  std::size_t extent() const { return poses_.size(); }

 private:
  std::vector<Pose> poses_;
  std::vector<char> present_;
  std::size_t count_ = 0;
};

template <typename Pose>
class FactorGraph {
 public:
  void addVariable(Key key);
  bool hasVariable(Key key) const { return key < variables_.size() && variables_[key]; }
  /// Throws std::invalid_argument if a key has not been added or the factor is
  /// malformed. Returns the factor index.
  std::size_t add(const Factor<Pose>& factor);

  const std::vector<Factor<Pose>>& factors() const { return factors_; }
  Factor<Pose>& factor(std::size_t i) { return factors_[i]; }
  const Factor<Pose>& factor(std::size_t i) const { return factors_[i]; }
  std::size_t size() const { return factors_.size(); }
  std::size_t numVariables() const { return num_variables_; }
  std::vector<Key> variables() const;

 private:
  std::vector<Factor<Pose>> factors_;
  std::vector<char> variables_;
  std::size_t num_variables_ = 0;
};

/// Effective control parameter of a factor during graduation.
template <typename Pose>
double effectiveMu(const Factor<Pose>& f, double mu) {
  return f.isGraduated() ? std::max(mu, f.mu_init_local) : mu;
}

/// Kernel actually applied to `f` when graduating at `mu`.
template <typename Pose>
KernelSpec effectiveKernel(const Factor<Pose>& f, double mu) {
  return f.isGraduated() ? f.kernel.withMu(effectiveMu(f, mu)) : f.kernel;
}

/// Unwhitened error local(z, prediction).
template <typename Pose>
typename Pose::Tangent factorError(const Factor<Pose>& f, const Values<Pose>& v);

/// L * local(z, prediction). Throws std::out_of_range on a missing key.
template <typename Pose>
Eigen::VectorXd whitenedResidual(const Factor<Pose>& f, const Values<Pose>& v);

/// rho(|r|) for one factor with an explicit kernel.
template <typename Pose>
double factorCost(const Factor<Pose>& f, const Values<Pose>& v, const KernelSpec& kernel);

/// Sum of rho(|r_i|); SIG factors use max(mu, mu_init_local).
template <typename Pose>
double robustError(const FactorGraph<Pose>& g, const Values<Pose>& v, double mu);

/// Jacobian of the whitened residual and rhs, both scaled by sqrt(weight).
template <typename Pose>
LinearFactor linearizeFactor(const Factor<Pose>& f, const Values<Pose>& v, const KernelSpec& kernel);

template <typename Pose>
LinearFactor linearizeFactor(const Factor<Pose>& f, const Values<Pose>& v, double mu) {
  return linearizeFactor(f, v, effectiveKernel(f, mu));
}

/// Chi-square CDF with `dof` degrees of freedom evaluated at `x`.
double chi2Cdf(int dof, double x);

/// CDF percentile of |whitened residual|^2 (kernel-free).
template <typename Pose>
double chi2Percentile(const Factor<Pose>& f, const Values<Pose>& v);

/// True (inlier) iff the chi-square percentile is below `threshold`.
template <typename Pose>
bool chi2Classify(const Factor<Pose>& f, const Values<Pose>& v, double threshold);

// ---------------------------------------------------------------------------

template <typename Pose>
void Values<Pose>::insert(Key key, const Pose& pose) {
  if (contains(key)) throw std::invalid_argument("Values::insert: key " + std::to_string(key) + " exists");
  insertOrAssign(key, pose);
}

template <typename Pose>
void Values<Pose>::insertOrAssign(Key key, const Pose& pose) {
  if (key >= poses_.size()) {
    poses_.resize(key + 1);
    present_.resize(key + 1, 0);
  }
  if (!present_[key]) ++count_;
  present_[key] = 1;
  poses_[key] = pose;
}

template <typename Pose>
const Pose& Values<Pose>::at(Key key) const {
  if (!contains(key)) throw std::out_of_range("Values: missing key " + std::to_string(key));
  return poses_[key];
}

template <typename Pose>
Pose& Values<Pose>::at(Key key) {
  if (!contains(key)) throw std::out_of_range("Values: missing key " + std::to_string(key));
  return poses_[key];
}

template <typename Pose>
std::vector<Key> Values<Pose>::keys() const {
  std::vector<Key> out;
  out.reserve(count_);
  for (Key k = 0; k < present_.size(); ++k)
    if (present_[k]) out.push_back(k);
  return out;
}

template <typename Pose>
void FactorGraph<Pose>::addVariable(Key key) {
  if (key >= variables_.size()) variables_.resize(key + 1, 0);
  if (!variables_[key]) ++num_variables_;
  variables_[key] = 1;
}

template <typename Pose>
std::size_t FactorGraph<Pose>::add(const Factor<Pose>& factor) {
  if (factor.keys.empty() || factor.keys.size() > 2)
    throw std::invalid_argument("factor must have one or two keys");
  if (factor.keys.size() == 2 && factor.keys[0] == factor.keys[1])
    throw std::invalid_argument("between factor keys must differ");
  for (Key k : factor.keys)
    if (!hasVariable(k)) throw std::invalid_argument("factor references unknown key " + std::to_string(k));
  if (factor.noise.dim() != Pose::kDim) throw std::invalid_argument("noise model dimension mismatch");
  if (factor.known_inlier && factor.kernel.kind != KernelKind::Quadratic)
    throw std::invalid_argument("known-inlier factors must use the quadratic kernel");
  if (!(factor.mu_init_local >= 0.0 && factor.mu_init_local <= 1.0))
    throw std::invalid_argument("mu_init_local must lie in [0, 1]");
  factor.kernel.validate();
  factors_.push_back(factor);
  return factors_.size() - 1;
}

template <typename Pose>
std::vector<Key> FactorGraph<Pose>::variables() const {
  std::vector<Key> out;
  for (Key k = 0; k < variables_.size(); ++k)
    if (variables_[k]) out.push_back(k);
  return out;
}

}  // namespace risam
