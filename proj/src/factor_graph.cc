#include "risam/factor_graph.h"

#include <cmath>

#include <Eigen/Cholesky>
#include <boost/math/special_functions/gamma.hpp>

namespace risam {

NoiseModel::NoiseModel(Eigen::MatrixXd sqrt_information) : sqrt_information_(std::move(sqrt_information)) {
  if (sqrt_information_.rows() != sqrt_information_.cols() || sqrt_information_.rows() == 0)
    throw std::invalid_argument("sqrt information must be a non-empty square matrix");
  Eigen::LLT<Eigen::MatrixXd> llt(information());
  if (llt.info() != Eigen::Success) throw std::invalid_argument("noise model is not positive definite");
}

NoiseModel NoiseModel::FromInformation(const Eigen::MatrixXd& information) {
  if (information.rows() != information.cols() || information.rows() == 0)
    throw std::invalid_argument("information must be a non-empty square matrix");
  Eigen::LLT<Eigen::MatrixXd> llt(information);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("information matrix is not positive definite");
  const Eigen::VectorXd diag = llt.matrixL().toDenseMatrix().diagonal();
  if ((diag.array() <= 0.0).any()) throw std::invalid_argument("information matrix is not positive definite");
  return NoiseModel(Eigen::MatrixXd(llt.matrixU()));
}

NoiseModel NoiseModel::Sigmas(const Eigen::VectorXd& sigmas) {
  if ((sigmas.array() <= 0.0).any()) throw std::invalid_argument("sigmas must be positive");
  return NoiseModel(Eigen::MatrixXd(sigmas.cwiseInverse().asDiagonal()));
}

NoiseModel NoiseModel::Isotropic(int dim, double sigma) {
  return Sigmas(Eigen::VectorXd::Constant(dim, sigma));
}

double chi2Cdf(int dof, double x) {
  if (x <= 0.0) return 0.0;
  if (!std::isfinite(x)) return 1.0;
  return boost::math::gamma_p(0.5 * dof, 0.5 * x);
}

template <typename Pose>
typename Pose::Tangent factorError(const Factor<Pose>& f, const Values<Pose>& v) {
  if (f.isPrior()) return local(f.measurement, v.at(f.keys[0]));
  return local(f.measurement, between(v.at(f.keys[0]), v.at(f.keys[1])));
}

template <typename Pose>
Eigen::VectorXd whitenedResidual(const Factor<Pose>& f, const Values<Pose>& v) {
  return f.noise.sqrtInformation() * factorError(f, v);
}

template <typename Pose>
double factorCost(const Factor<Pose>& f, const Values<Pose>& v, const KernelSpec& kernel) {
  using Square = Eigen::Matrix<double, Pose::kDim, Pose::kDim>;
  const typename Pose::Tangent r = Square(f.noise.sqrtInformation()) * factorError(f, v);
  return evaluate(kernel, r.norm());
}

template <typename Pose>
double robustError(const FactorGraph<Pose>& g, const Values<Pose>& v, double mu) {
  double total = 0.0;
  for (const auto& f : g.factors()) total += factorCost(f, v, effectiveKernel(f, mu));
  return total;
}

template <typename Pose>
LinearFactor linearizeFactor(const Factor<Pose>& f, const Values<Pose>& v, const KernelSpec& kernel) {
  constexpr int d = Pose::kDim;
  using Jac = typename Pose::Jacobian;
  const Eigen::MatrixXd& L = f.noise.sqrtInformation();

  LinearFactor out;
  out.keys = f.keys;
  out.A.resize(d, d * static_cast<Eigen::Index>(f.keys.size()));

  typename Pose::Tangent e;
  if (f.isPrior()) {
    e = local(f.measurement, v.at(f.keys[0]));
    out.A = L * Pose::LogRightJacobianInverse(e);
  } else {
    const Pose& a = v.at(f.keys[0]);
    const Pose& b = v.at(f.keys[1]);
    const Pose rel = between(a, b);
    e = local(f.measurement, rel);
    const Jac Jr_inv = Pose::LogRightJacobianInverse(e);
    const Jac Ja = -Jr_inv * rel.inverse().adjoint();
    out.A.leftCols(d) = L * Ja;
    out.A.rightCols(d) = L * Jr_inv;
  }
  const Eigen::VectorXd r = L * e;
  const double sqrt_w = std::sqrt(weight(kernel, r.norm()));
  out.A *= sqrt_w;
  out.b = -sqrt_w * r;
  return out;
}

template <typename Pose>
double chi2Percentile(const Factor<Pose>& f, const Values<Pose>& v) {
  return chi2Cdf(Pose::kDim, whitenedResidual(f, v).squaredNorm());
}

template <typename Pose>
bool chi2Classify(const Factor<Pose>& f, const Values<Pose>& v, double threshold) {
  return chi2Percentile(f, v) < threshold;
}

#define RISAM_INSTANTIATE_FACTOR_GRAPH(POSE)                                                       \
  template POSE::Tangent factorError(const Factor<POSE>&, const Values<POSE>&);                     \
  template Eigen::VectorXd whitenedResidual(const Factor<POSE>&, const Values<POSE>&);              \
  template double factorCost(const Factor<POSE>&, const Values<POSE>&, const KernelSpec&);          \
  template double robustError(const FactorGraph<POSE>&, const Values<POSE>&, double);               \
  template LinearFactor linearizeFactor(const Factor<POSE>&, const Values<POSE>&, const KernelSpec&); \
  template double chi2Percentile(const Factor<POSE>&, const Values<POSE>&);                         \
  template bool chi2Classify(const Factor<POSE>&, const Values<POSE>&, double);

RISAM_INSTANTIATE_FACTOR_GRAPH(Pose2)
RISAM_INSTANTIATE_FACTOR_GRAPH(Pose3)

}  // namespace risam
