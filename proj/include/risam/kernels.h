// Robust kernels evaluated on whitened residual norms, and the graduation
// schedule for the control parameter mu.
#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace risam {

enum class KernelKind { Quadratic, Huber, GemanMcClure, MaxMixture, SIG };

std::string_view kernelName(KernelKind kind);
KernelKind parseKernelKind(std::string_view name);

struct KernelSpec {
  KernelKind kind = KernelKind::Quadratic;
  double c = 3.0;   // shape parameter, in units of sigma
  double mu = 1.0;  // graduation parameter, SIG only
  // Max-Mixture outlier component (isotropic in whitened space).
  double mm_outlier_sigma = 1e7;
  double mm_outlier_weight = 1e-7;
  int dim = 3;  // residual dimension, Max-Mixture normalization only

  static KernelSpec Quadratic() { return {}; }
  static KernelSpec Huber(double c = 3.0) { return {KernelKind::Huber, c}; }
  static KernelSpec GemanMcClure(double c = 3.0) { return {KernelKind::GemanMcClure, c}; }
  static KernelSpec SIG(double c = 3.0, double mu = 1.0) { return {KernelKind::SIG, c, mu}; }
  static KernelSpec MaxMixture(int dim = 3) {
    KernelSpec k;
    k.kind = KernelKind::MaxMixture;
    k.dim = dim;
    return k;
  }

  /// Throws std::invalid_argument unless c > 0 and 0 <= mu <= 1.
  void validate() const;
  /// Same kernel with mu replaced; only meaningful for SIG.
  KernelSpec withMu(double new_mu) const;
};

/// rho(r) for r = |whitened residual|. Returns 0 at r = 0.
double evaluate(const KernelSpec& k, double r);

/// IRLS weight rho'(r) / r, with the r -> 0 limit taken analytically.
double weight(const KernelSpec& k, double r);

/// For Max-Mixture: true when the broad outlier component is selected.
bool maxMixtureSelectsOutlier(const KernelSpec& k, double r);

/// mu_{i+1} = min(1, mu_i + 1.2 (mu_i - mu_init + 0.1))
double updateMu(double mu, double mu_init);

/// Inverse step used for strong inliers: max(0, mu - 0.1).
double relaxMu(double mu);

bool isConverged(double mu, double mu_final);

/// Graduation schedule starting at mu_init and ending at mu_final.
class MuSchedule {
 public:
  explicit MuSchedule(double mu_init = 0.0, double mu_final = 1.0);

  double current() const { return history_.back(); }
  double muInit() const { return mu_init_; }
  double muFinal() const { return mu_final_; }
  bool converged() const { return isConverged(current(), mu_final_); }
  /// Advances one step (clamped at mu_final); returns the new value.
  double advance();
  const std::vector<double>& history() const { return history_; }
  /// Number of advance() calls needed to reach mu_final.
  std::size_t length() const;

 private:
  double mu_init_;
  double mu_final_;
  std::vector<double> history_;
};

}  // namespace risam
