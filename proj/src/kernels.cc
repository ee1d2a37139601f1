#include "risam/kernels.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace risam {

std::string_view kernelName(KernelKind kind) {
  switch (kind) {
    case KernelKind::Quadratic: return "quadratic";
    case KernelKind::Huber: return "huber";
    case KernelKind::GemanMcClure: return "gm";
    case KernelKind::MaxMixture: return "maxmix";
    case KernelKind::SIG: return "sig";
  }
  return "unknown";
}

KernelKind parseKernelKind(std::string_view name) {
  if (name == "quadratic") return KernelKind::Quadratic;
  if (name == "huber") return KernelKind::Huber;
  if (name == "gm") return KernelKind::GemanMcClure;
  if (name == "maxmix") return KernelKind::MaxMixture;
  if (name == "sig") return KernelKind::SIG;
  throw std::invalid_argument("unknown kernel '" + std::string(name) + "'");
}

void KernelSpec::validate() const {
  if (!(c > 0.0)) throw std::invalid_argument("kernel shape parameter c must be positive");
  if (!(mu >= 0.0 && mu <= 1.0)) throw std::invalid_argument("kernel mu must lie in [0, 1]");
  if (kind == KernelKind::MaxMixture) {
    if (!(mm_outlier_sigma > 0.0) || !(mm_outlier_weight > 0.0) || dim <= 0)
      throw std::invalid_argument("invalid Max-Mixture parameters");
  }
}

KernelSpec KernelSpec::withMu(double new_mu) const {
  KernelSpec k = *this;
  k.mu = new_mu;
  return k;
}

namespace {

// Negative log-likelihood difference of the outlier component relative to
// the inlier one, excluding the residual terms. Inlier weight is 1 - w_out.
double maxMixtureOffset(const KernelSpec& k) {
  return k.dim * std::log(k.mm_outlier_sigma) - std::log(k.mm_outlier_weight) +
         std::log1p(-k.mm_outlier_weight);
}

}  // namespace

bool maxMixtureSelectsOutlier(const KernelSpec& k, double r) {
  const double r2 = r * r;
  const double s2 = k.mm_outlier_sigma * k.mm_outlier_sigma;
  return 0.5 * r2 / s2 + maxMixtureOffset(k) < 0.5 * r2;
}

double evaluate(const KernelSpec& k, double r) {
  r = std::abs(r);
  const double r2 = r * r;
  const double c2 = k.c * k.c;
  switch (k.kind) {
    case KernelKind::Quadratic:
      return 0.5 * r2;
    case KernelKind::Huber:
      return r <= k.c ? 0.5 * r2 : k.c * (r - 0.5 * k.c);
    case KernelKind::GemanMcClure:
      return 0.5 * c2 * r2 / (c2 + r2);
    case KernelKind::SIG:
      return 0.5 * c2 * r2 / (c2 + std::pow(r2, k.mu));
    case KernelKind::MaxMixture: {
      const double s2 = k.mm_outlier_sigma * k.mm_outlier_sigma;
      return std::min(0.5 * r2, 0.5 * r2 / s2 + maxMixtureOffset(k));
    }
  }
  return 0.0;
}

double weight(const KernelSpec& k, double r) {
  r = std::abs(r);
  const double r2 = r * r;
  const double c2 = k.c * k.c;
  switch (k.kind) {
    case KernelKind::Quadratic:
      return 1.0;
    case KernelKind::Huber:
      return r <= k.c ? 1.0 : k.c / r;
    case KernelKind::GemanMcClure: {
      const double d = c2 + r2;
      return c2 * c2 / (d * d);
    }
    case KernelKind::SIG: {
      // pow(0, 0) == 1 keeps mu = 0 exactly quadratic.
      const double s = std::pow(r2, k.mu);
      const double d = c2 + s;
      return c2 * (c2 + (1.0 - k.mu) * s) / (d * d);
    }
    case KernelKind::MaxMixture:
      return maxMixtureSelectsOutlier(k, r) ? 1.0 / (k.mm_outlier_sigma * k.mm_outlier_sigma) : 1.0;
  }
  return 1.0;
}

double updateMu(double mu, double mu_init) { return std::min(1.0, mu + 1.2 * (mu - mu_init + 0.1)); }

double relaxMu(double mu) { return std::max(0.0, mu - 0.1); }

bool isConverged(double mu, double mu_final) { return mu >= mu_final; }

MuSchedule::MuSchedule(double mu_init, double mu_final) : mu_init_(mu_init), mu_final_(mu_final) {
  if (!(mu_init >= 0.0 && mu_init <= mu_final && mu_final <= 1.0))
    throw std::invalid_argument("mu schedule requires 0 <= mu_init <= mu_final <= 1");
  history_.push_back(mu_init);
}

double MuSchedule::advance() {
  if (!converged()) history_.push_back(std::min(mu_final_, updateMu(current(), mu_init_)));
  return current();
}

std::size_t MuSchedule::length() const {
  MuSchedule copy(mu_init_, mu_final_);
  std::size_t n = 0;
  while (!copy.converged()) {
    copy.advance();
    ++n;
  }
  return n;
}

}  // namespace risam
