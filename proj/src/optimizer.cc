#include "risam/optimizer.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

namespace risam {

void RiSAMConfig::validate() const {
  if (!(mu_init >= 0.0 && mu_init < mu_final && mu_final <= 1.0))
    throw std::invalid_argument("config: require 0 <= mu_init < mu_final <= 1");
  if (!(c > 0.0)) throw std::invalid_argument("config: c must be positive");
  if (!(alpha_min > 0.0 && alpha_min <= alpha_max)) throw std::invalid_argument("config: require 0 < alpha_min <= alpha_max");
  if (!(alpha_growth > 1.0)) throw std::invalid_argument("config: alpha_growth must exceed 1");
  if (!(wolfe_c1 > 0.0 && wolfe_c1 < 1.0)) throw std::invalid_argument("config: require 0 < wolfe_c1 < 1");
  if (!(strong_inlier_thresh > 0.0 && strong_inlier_thresh < strong_outlier_thresh && strong_outlier_thresh < 1.0))
    throw std::invalid_argument("config: require 0 < strong_inlier_thresh < strong_outlier_thresh < 1");
  if (!(relin_threshold >= 0.0)) throw std::invalid_argument("config: relin_threshold must be non-negative");
  if (!(convergence_delta_norm > 0.0)) throw std::invalid_argument("config: convergence_delta_norm must be positive");
  if (max_polish_iterations < 1 || batch_max_polish_iterations < 1)
    throw std::invalid_argument("config: polish iteration caps must be positive");
}

LineSearchParams LineSearchParams::From(const RiSAMConfig& cfg, bool accept_first) {
  return {cfg.alpha_min, cfg.alpha_max, cfg.alpha_growth, cfg.wolfe_c1, accept_first};
}

Eigen::VectorXd computeDoglegPoint(const Eigen::VectorXd& d_gn, const Eigen::VectorXd& d_g, double alpha) {
  const double n_gn = d_gn.norm();
  if (alpha >= n_gn) return d_gn;
  const double n_g = d_g.norm();
  if (alpha <= n_g) return (alpha / n_g) * d_g;
  // |d_g + t (d_gn - d_g)| = alpha for t in [0, 1]
  const Eigen::VectorXd v = d_gn - d_g;
  const double a = v.squaredNorm();
  if (a == 0.0) return d_gn;
  const double b = 2.0 * d_g.dot(v);
  const double c = n_g * n_g - alpha * alpha;
  const double disc = std::sqrt(std::max(0.0, b * b - 4.0 * a * c));
  const double t = b <= 0.0 ? (-b + disc) / (2.0 * a) : (2.0 * c) / (-b - disc);
  return d_g + std::clamp(t, 0.0, 1.0) * v;
}

bool sufficientDecrease(double cost0, double cost1, double predicted_decrease, double c1) {
  // Differences below the rounding level of the costs count as equal.
  const double slack = 8.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(cost0), std::abs(cost1));
  return cost0 - cost1 >= c1 * predicted_decrease - slack;
}

StepResult doglegLineSearch(const Eigen::VectorXd& d_gn, const Eigen::VectorXd& d_g, double cost0,
                            const std::function<double(const Eigen::VectorXd&)>& cost,
                            const std::function<double(const Eigen::VectorXd&)>& predicted_decrease,
                            const LineSearchParams& params) {
  const double n_gn = d_gn.norm();
  const double alpha0 = std::min(params.alpha_min, n_gn);
  const double alpha_f = std::min(params.alpha_max, n_gn);

  StepResult out;
  auto trial = [&](double alpha, StepResult& r) {
    r.delta = computeDoglegPoint(d_gn, d_g, alpha);
    r.cost = cost(r.delta);
    r.alpha = alpha;
    ++out.evaluations;
    if (!std::isfinite(r.cost)) {
      ++out.nonfinite_evaluations;
      r.accepted = false;
    } else {
      r.accepted = sufficientDecrease(cost0, r.cost, predicted_decrease(r.delta), params.c1);
    }
  };

  StepResult first;
  trial(alpha0, first);
  StepResult best;
  if (first.accepted) best = first;
  double alpha = alpha0;
  while (alpha < alpha_f) {
    alpha = std::min(alpha * params.alpha_growth, alpha_f);
    StepResult r;
    trial(alpha, r);
    if (r.accepted) best = std::move(r);
  }

  const int evaluations = out.evaluations;
  const int nonfinite = out.nonfinite_evaluations;
  if (best.accepted) {
    out = std::move(best);
  } else if (params.accept_first) {
    out = std::move(first);
  } else {
    out.delta = Eigen::VectorXd::Zero(d_gn.size());
    out.cost = cost0;
    out.alpha = 0.0;
    out.accepted = false;
  }
  out.evaluations = evaluations;
  out.nonfinite_evaluations = nonfinite;
  return out;
}

namespace {

// Whole-graph linearization solved through sparse normal equations.
template <typename Pose>
class BatchStep {
 public:
  using SpMat = Eigen::SparseMatrix<double>;

  BatchStep(const FactorGraph<Pose>& graph, const Values<Pose>& x, double mu) : graph_(graph), x_(x), mu_(mu) {
    constexpr int d = Pose::kDim;
    const Eigen::Index n = static_cast<Eigen::Index>(x.extent()) * d;
    std::vector<Eigen::Triplet<double>> triplets;
    std::vector<double> rhs;
    Eigen::Index row = 0;
    for (const auto& f : graph.factors()) {
      const LinearFactor lf = linearizeFactor(f, x, mu);
      for (std::size_t b = 0; b < lf.keys.size(); ++b) {
        const Eigen::Index col = static_cast<Eigen::Index>(lf.keys[b]) * d;
        for (Eigen::Index i = 0; i < lf.rows(); ++i)
          for (int j = 0; j < d; ++j) {
            const double value = lf.A(i, static_cast<Eigen::Index>(b) * d + j);
            if (value != 0.0) triplets.emplace_back(row + i, col + j, value);
          }
      }
      for (Eigen::Index i = 0; i < lf.rows(); ++i) rhs.push_back(lf.b(i));
      row += lf.rows();
    }
    A_.resize(row, n);
    A_.setFromTriplets(triplets.begin(), triplets.end());
    b_ = Eigen::Map<const Eigen::VectorXd>(rhs.data(), static_cast<Eigen::Index>(rhs.size()));

    const SpMat H = A_.transpose() * A_;
    Eigen::SimplicialLLT<SpMat> llt(H);
    if (llt.info() != Eigen::Success) throw IndeterminateSystem("batch normal equations are singular");
    const Eigen::VectorXd Atb = A_.transpose() * b_;
    gauss_newton_ = llt.solve(Atb);
    gradient_ = -Atb;
    const double gg = gradient_.squaredNorm();
    const double ag = (A_ * gradient_).squaredNorm();
    cauchy_ = (gg > 0.0 && ag > 0.0) ? Eigen::VectorXd(-(gg / ag) * gradient_) : Eigen::VectorXd::Zero(n);
  }

  double cost(const Eigen::VectorXd& delta) const { return robustError(graph_, retracted(delta), mu_); }
  double predicted(const Eigen::VectorXd& delta) const {
    return -gradient_.dot(delta) - 0.5 * (A_ * delta).squaredNorm();
  }
  Values<Pose> retracted(const Eigen::VectorXd& delta) const {
    constexpr int d = Pose::kDim;
    Values<Pose> out = x_;
    for (Key k : x_.keys())
      out.at(k) = retract(x_.at(k), typename Pose::Tangent(delta.segment(static_cast<Eigen::Index>(k) * d, d)));
    return out;
  }

  const Eigen::VectorXd& gaussNewton() const { return gauss_newton_; }
  const Eigen::VectorXd& cauchy() const { return cauchy_; }

 private:
  const FactorGraph<Pose>& graph_;
  const Values<Pose>& x_;
  double mu_;
  SpMat A_;
  Eigen::VectorXd b_, gauss_newton_, gradient_, cauchy_;
};

template <typename Pose>
StepResult batchIteration(const FactorGraph<Pose>& graph, Values<Pose>& x, double mu, const LineSearchParams& params) {
  const BatchStep<Pose> step(graph, x, mu);
  const double cost0 = robustError(graph, x, mu);
  StepResult r = doglegLineSearch(
      step.gaussNewton(), step.cauchy(), cost0, [&](const Eigen::VectorXd& d) { return step.cost(d); },
      [&](const Eigen::VectorXd& d) { return step.predicted(d); }, params);
  if (!std::isfinite(r.cost)) throw std::runtime_error("efficient_gnc: cost diverged (non-finite)");
  x = step.retracted(r.delta);
  return r;
}

template <typename Pose>
void checkInputs(const FactorGraph<Pose>& graph, const Values<Pose>& x0) {
  if (x0.size() != x0.extent()) throw std::invalid_argument("initial values must cover keys 0..n-1");
  for (Key k : graph.variables())
    if (!x0.contains(k)) throw std::invalid_argument("initial values miss key " + std::to_string(k));
}

template <typename Pose>
void polish(const FactorGraph<Pose>& graph, const RiSAMConfig& cfg, double mu, int max_iterations,
            GncResult<Pose>& result) {
  const LineSearchParams params = LineSearchParams::From(cfg, false);
  for (int it = 0; it < max_iterations; ++it) {
    const StepResult r = batchIteration(graph, result.estimate, mu, params);
    ++result.polish_iterations;
    if (r.delta.lpNorm<Eigen::Infinity>() < cfg.convergence_delta_norm) {
      result.converged = true;
      break;
    }
  }
  result.cost = robustError(graph, result.estimate, mu);
}

}  // namespace

template <typename Pose>
GncResult<Pose> efficientGnc(const FactorGraph<Pose>& graph, const Values<Pose>& x0, const RiSAMConfig& cfg) {
  cfg.validate();
  checkInputs(graph, x0);
  GncResult<Pose> result;
  result.estimate = x0;
  const LineSearchParams params = LineSearchParams::From(cfg, true);
  double mu = cfg.mu_init;
  result.mu_history.push_back(mu);
  while (!isConverged(mu, cfg.mu_final)) {
    batchIteration(graph, result.estimate, mu, params);
    ++result.graduation_iterations;
    mu = updateMu(mu, cfg.mu_init);
    result.mu_history.push_back(mu);
  }
  polish(graph, cfg, cfg.mu_final, cfg.batch_max_polish_iterations, result);
  return result;
}

template <typename Pose>
GncResult<Pose> optimizeFixedMu(const FactorGraph<Pose>& graph, const Values<Pose>& x0, const RiSAMConfig& cfg,
                                double mu, int max_iterations) {
  cfg.validate();
  checkInputs(graph, x0);
  GncResult<Pose> result;
  result.estimate = x0;
  result.mu_history.push_back(mu);
  polish(graph, cfg, mu, max_iterations, result);
  return result;
}

template <typename Pose>
bool adjustInitialMu(Factor<Pose>& f, const Values<Pose>& v, const RiSAMConfig& cfg) {
  if (!f.isGraduated()) return false;
  const double p = chi2Percentile(f, v);
  const double old = f.mu_init_local;
  if (p > cfg.strong_outlier_thresh) {
    f.mu_init_local = std::clamp(updateMu(std::max(old, cfg.mu_init), cfg.mu_init), 0.0, 1.0);
  } else if (p < cfg.strong_inlier_thresh) {
    f.mu_init_local = relaxMu(old);
  }
  return f.mu_init_local != old;
}

template <typename Pose>
UpdateInfo plainIncrementalUpdate(IncrementalSmoother<Pose>& smoother, double relin_threshold) {
  UpdateInfo info;
  info.fast_path = true;
  const std::set<Key> fluid = smoother.markFluid(smoother.delta(), relin_threshold);
  const double mu_final = smoother.muFinal();
  const auto res = smoother.updateTree(fluid, fluid, [mu_final](std::size_t) { return mu_final; });
  info.convex_marked = res.convex.size();
  smoother.setDelta(smoother.solveGaussNewton());
  info.converged = true;
  return info;
}

template <typename Pose>
RiSAM<Pose>::RiSAM(const RiSAMConfig& cfg) : cfg_(cfg), smoother_(cfg.mu_final) {
  cfg_.validate();
}

template <typename Pose>
StepResult RiSAM<Pose>::lineSearch(const typename IncrementalSmoother<Pose>::MuPolicy& mu, bool accept_first,
                                   UpdateInfo& info) const {
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(smoother_.delta().size());
  const double cost0 = smoother_.cost(zero, mu);
  const Eigen::VectorXd g = smoother_.tree().gradientAtZero();
  StepResult r = doglegLineSearch(
      smoother_.solveGaussNewton(), smoother_.solveGradient(), cost0,
      [&](const Eigen::VectorXd& d) { return smoother_.cost(d, mu); },
      [&](const Eigen::VectorXd& d) { return -g.dot(d) - 0.5 * smoother_.tree().rNormSquared(d); },
      LineSearchParams::From(cfg_, accept_first));
  info.line_search_evaluations += r.evaluations;
  info.nonfinite_evaluations += r.nonfinite_evaluations;
  if (!std::isfinite(r.cost)) info.nonfinite_step = true;
  return r;
}

template <typename Pose>
UpdateInfo RiSAM<Pose>::update(const std::vector<Factor<Pose>>& new_factors,
                               const std::vector<std::pair<Key, Pose>>& new_values, bool keyframe) {
  for (const auto& [key, pose] : new_values) smoother_.addVariable(key, pose);
  std::vector<std::size_t> added;
  added.reserve(new_factors.size());
  for (const auto& f : new_factors) added.push_back(smoother_.addFactor(f));

  const bool all_inliers =
      std::all_of(new_factors.begin(), new_factors.end(), [](const Factor<Pose>& f) { return f.known_inlier; });
  if (all_inliers) {
    UpdateInfo info = plainIncrementalUpdate(smoother_, cfg_.relin_threshold);
    cumulative_convex_ += info.convex_marked;
    if (keyframe) adjustAll();
    return info;
  }

  // New graduated factors and the graduated factors sharing a variable with them.
  const auto& graph = smoother_.graph();
  std::vector<char> graduating(graph.size(), 0);
  for (std::size_t fi : added) {
    if (!graph.factor(fi).isGraduated()) continue;
    graduating[fi] = 1;
    for (Key k : graph.factor(fi).keys)
      for (std::size_t fj : smoother_.factorsOf(k))
        if (graph.factor(fj).isGraduated()) graduating[fj] = 1;
  }

  UpdateInfo info;
  double mu = cfg_.mu_init;
  auto policy = [&](std::size_t i) {
    return graduating[i] ? std::max(mu, graph.factor(i).mu_init_local) : cfg_.mu_final;
  };

  std::set<Key> relin = smoother_.markFluid(smoother_.delta(), cfg_.relin_threshold);
  std::set<Key> affected = relin;
  while (!isConverged(mu, cfg_.mu_final)) {
    const auto res = smoother_.updateTree(affected, relin, policy);
    info.convex_marked += res.convex.size();
    const StepResult step = lineSearch(policy, true, info);
    smoother_.setDelta(step.delta);
    relin = smoother_.markFluid(step.delta, cfg_.relin_threshold);
    affected = res.convex;
    affected.insert(relin.begin(), relin.end());
    mu = updateMu(mu, cfg_.mu_init);
    ++info.graduation_iterations;
  }

  for (int it = 0; it < cfg_.max_polish_iterations; ++it) {
    const auto res = smoother_.updateTree(affected, relin, policy);
    info.convex_marked += res.convex.size();
    const Eigen::VectorXd before = smoother_.delta();
    const StepResult step = lineSearch(policy, false, info);
    smoother_.setDelta(step.delta);
    ++info.polish_iterations;
    relin = smoother_.markFluid(step.delta, cfg_.relin_threshold);
    affected = res.convex;
    affected.insert(relin.begin(), relin.end());
    if ((step.delta - before).lpNorm<Eigen::Infinity>() < cfg_.convergence_delta_norm && res.convex.empty()) {
      info.converged = true;
      break;
    }
  }
  cumulative_convex_ += info.convex_marked;

  if (info.converged && keyframe) adjustAll();
  return info;
}

template <typename Pose>
void RiSAM<Pose>::adjustAll() {
  if (!cfg_.adjust_initial_mu) return;
  const Values<Pose> x = smoother_.estimate();
  for (std::size_t i = 0; i < smoother_.graph().size(); ++i) adjustInitialMu(smoother_.factor(i), x, cfg_);
}

template <typename Pose>
UpdateInfo IncrementalBaseline<Pose>::update(const std::vector<Factor<Pose>>& new_factors,
                                             const std::vector<std::pair<Key, Pose>>& new_values) {
  for (const auto& [key, pose] : new_values) smoother_.addVariable(key, pose);
  for (const auto& f : new_factors) smoother_.addFactor(f);
  return plainIncrementalUpdate(smoother_, relin_threshold_);
}

#define RISAM_INSTANTIATE(P)                                                                                    \
  template GncResult<P> efficientGnc(const FactorGraph<P>&, const Values<P>&, const RiSAMConfig&);               \
  template GncResult<P> optimizeFixedMu(const FactorGraph<P>&, const Values<P>&, const RiSAMConfig&, double, int); \
  template bool adjustInitialMu(Factor<P>&, const Values<P>&, const RiSAMConfig&);                               \
  template UpdateInfo plainIncrementalUpdate(IncrementalSmoother<P>&, double);                                   \
  template class RiSAM<P>;                                                                                       \
  template class IncrementalBaseline<P>;

RISAM_INSTANTIATE(Pose2)
RISAM_INSTANTIATE(Pose3)

#undef RISAM_INSTANTIATE

}  // namespace risam
