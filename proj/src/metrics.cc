#include "risam/metrics.h"

#include <cmath>
#include <stdexcept>

#include "risam/optimizer.h"

namespace risam {

template <typename Pose>
double ate(const Values<Pose>& x, const Values<Pose>& reference) {
  const std::vector<Key> keys = x.keys();
  if (keys.empty()) throw std::invalid_argument("ate: empty trajectory");
  if (keys != reference.keys()) throw std::invalid_argument("ate: key sets differ");
  const Pose align = compose(reference.at(keys.front()), inverse(x.at(keys.front())));
  double sum = 0.0;
  for (Key k : keys) sum += (compose(align, x.at(k)).translation() - reference.at(k).translation()).squaredNorm();
  return std::sqrt(sum / static_cast<double>(keys.size()));
}

double incrementalMetric(const std::vector<std::pair<std::size_t, double>>& values, bool uniform) {
  if (values.empty()) throw std::invalid_argument("incrementalMetric: no keyframes");
  double total = 0.0;
  for (const auto& [k, v] : values) total += uniform ? 1.0 : static_cast<double>(k);
  if (!(total > 0.0)) throw std::invalid_argument("incrementalMetric: keyframe indices sum to zero");
  double out = 0.0;
  for (const auto& [k, v] : values) out += (uniform ? 1.0 : static_cast<double>(k)) / total * v;
  return out;
}

PrecisionRecall precisionRecall(const std::vector<bool>& classified_inlier, const std::vector<bool>& is_inlier) {
  if (classified_inlier.size() != is_inlier.size()) throw std::invalid_argument("precisionRecall: length mismatch");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < is_inlier.size(); ++i) {
    if (classified_inlier[i] && is_inlier[i]) ++tp;
    if (classified_inlier[i] && !is_inlier[i]) ++fp;
    if (!classified_inlier[i] && is_inlier[i]) ++fn;
  }
  PrecisionRecall pr;
  if (tp + fp > 0) pr.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (tp + fn > 0) pr.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return pr;
}

template <typename Pose>
std::vector<Values<Pose>> pseudoGroundTruth(const DatasetRecord<Pose>& record, const std::vector<std::size_t>& keyframes,
                                            double relin_threshold) {
  const auto iterations = splitIterations(record);
  IncrementalBaseline<Pose> solver(relin_threshold);
  std::vector<Values<Pose>> out;
  out.reserve(keyframes.size());
  std::size_t next = 0;
  for (std::size_t k = 0; k < iterations.size() && next < keyframes.size(); ++k) {
    const auto in = iterationInput(record, iterations[k], solver.estimate(), KernelSpec::Quadratic(), true, kPriorSigma);
    solver.update(in.factors, in.values);
    if (k == keyframes[next]) {
      out.push_back(solver.estimate());
      ++next;
    }
  }
  if (out.size() != keyframes.size()) throw std::invalid_argument("pseudoGroundTruth: keyframe beyond trajectory");
  return out;
}

#define RISAM_INSTANTIATE_METRICS(P)                                        \
  template double ate<P>(const Values<P>&, const Values<P>&);               \
  template std::vector<Values<P>> pseudoGroundTruth<P>(const DatasetRecord<P>&, \
                                                       const std::vector<std::size_t>&, double);

RISAM_INSTANTIATE_METRICS(Pose2)
RISAM_INSTANTIATE_METRICS(Pose3)

#undef RISAM_INSTANTIATE_METRICS

}  // namespace risam
