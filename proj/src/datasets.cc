#include "risam/datasets.h"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

namespace risam {

namespace {

template <typename Pose>
struct G2oTraits;

template <>
struct G2oTraits<Pose2> {
  static constexpr const char* kVertex = "VERTEX_SE2";
  static constexpr const char* kEdge = "EDGE_SE2";
  static constexpr int kPoseValues = 3;

  static Pose2 read(const std::vector<double>& v, std::size_t offset) {
    return Pose2(v[offset], v[offset + 1], v[offset + 2]);
  }
  static void write(std::ostream& os, const Pose2& p) { os << p.x() << ' ' << p.y() << ' ' << p.theta(); }
};

template <>
struct G2oTraits<Pose3> {
  static constexpr const char* kVertex = "VERTEX_SE3:QUAT";
  static constexpr const char* kEdge = "EDGE_SE3:QUAT";
  static constexpr int kPoseValues = 7;

  static Pose3 read(const std::vector<double>& v, std::size_t offset) {
    const Eigen::Quaterniond q(v[offset + 6], v[offset + 3], v[offset + 4], v[offset + 5]);
    if (!(q.norm() > 0.0)) throw std::invalid_argument("zero quaternion");
    return Pose3(q, Eigen::Vector3d(v[offset], v[offset + 1], v[offset + 2]));
  }
  static void write(std::ostream& os, const Pose3& p) {
    const auto& t = p.translation();
    const auto& q = p.quaternion();
    os << t.x() << ' ' << t.y() << ' ' << t.z() << ' ' << q.x() << ' ' << q.y() << ' ' << q.z() << ' ' << q.w();
  }
};

std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> out;
  std::istringstream ss{std::string(line)};
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

std::vector<double> parseNumbers(const std::vector<std::string>& tokens, std::size_t first, std::size_t line) {
  std::vector<double> out;
  out.reserve(tokens.size() - first);
  for (std::size_t i = first; i < tokens.size(); ++i) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(tokens[i], &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tokens[i].size() || !std::isfinite(v)) throw ParseError(line, "bad number '" + tokens[i] + "'");
    out.push_back(v);
  }
  return out;
}

Key parseKey(const std::string& tok, std::size_t line) {
  if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos)
    throw ParseError(line, "bad vertex id '" + tok + "'");
  return static_cast<Key>(std::stoull(tok));
}

Eigen::MatrixXd upperToSymmetric(const std::vector<double>& v, std::size_t offset, int dim) {
  Eigen::MatrixXd M(dim, dim);
  std::size_t idx = offset;
  for (int r = 0; r < dim; ++r)
    for (int c = r; c < dim; ++c) {
      M(r, c) = v[idx];
      M(c, r) = v[idx];
      ++idx;
    }
  return M;
}

template <typename Pose>
void placePose(std::vector<Pose>& poses, std::vector<char>& seen, Key id, const Pose& p, std::size_t line) {
  if (id >= poses.size()) {
    poses.resize(id + 1);
    seen.resize(id + 1, 0);
  }
  if (seen[id]) throw ParseError(line, "duplicate vertex " + std::to_string(id));
  seen[id] = 1;
  poses[id] = p;
}

double gaussian(std::mt19937_64& rng, double sigma) {
  if (sigma <= 0.0) return 0.0;
  return std::normal_distribution<double>(0.0, sigma)(rng);
}

}  // namespace

template <typename Pose>
std::size_t DatasetRecord<Pose>::numLoopClosures() const {
  std::size_t n = 0;
  for (const auto& e : edges) n += e.isLoopClosure() ? 1 : 0;
  return n;
}

template <typename Pose>
std::size_t DatasetRecord<Pose>::numOutliers() const {
  std::size_t n = 0;
  for (const auto& e : edges) n += e.is_outlier ? 1 : 0;
  return n;
}

template <typename Pose>
void DatasetRecord<Pose>::validate() const {
  if (!ground_truth.empty() && ground_truth.size() != poses.size())
    throw std::invalid_argument("ground truth size differs from pose count");
  std::vector<char> linked(poses.size(), 0);
  for (const auto& e : edges) {
    if (e.from >= poses.size() || e.to >= poses.size())
      throw std::invalid_argument("edge references unknown pose");
    if (e.from == e.to) throw std::invalid_argument("self-loop edge");
    if (e.information.rows() != Pose::kDim || e.information.cols() != Pose::kDim)
      throw std::invalid_argument("edge information has wrong size");
    if (!e.isLoopClosure()) linked[std::max(e.from, e.to)] = 1;
  }
  for (std::size_t k = 1; k < poses.size(); ++k)
    if (!linked[k]) throw std::invalid_argument("odometry chain broken at pose " + std::to_string(k));
}

int detectG2oDimension(std::string_view text) {
  int dim = 0;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tokens = split(line.substr(0, line.find('#')));
    if (tokens.empty()) continue;
    int d = 0;
    if (tokens[0] == "VERTEX_SE2" || tokens[0] == "EDGE_SE2") d = 2;
    if (tokens[0] == "VERTEX_SE3:QUAT" || tokens[0] == "EDGE_SE3:QUAT") d = 3;
    if (d == 0) continue;
    if (dim != 0 && d != dim) throw ParseError(line_no, "mixed SE(2) and SE(3) records");
    dim = d;
  }
  if (dim == 0) throw ParseError(line_no, "no pose records found");
  return dim;
}

template <typename Pose>
DatasetRecord<Pose> parseG2o(std::string_view text) {
  using T = G2oTraits<Pose>;
  constexpr int d = Pose::kDim;
  constexpr std::size_t info_values = d * (d + 1) / 2;

  DatasetRecord<Pose> rec;
  std::vector<char> seen, seen_gt;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    const std::string body = line.substr(0, hash);
    const std::string comment = hash == std::string::npos ? std::string() : line.substr(hash + 1);
    auto tokens = split(body);
    bool ground_truth = false;
    if (tokens.empty()) {
      const auto ctoks = split(comment);
      if (ctoks.size() >= 2 && ctoks[0] == "GT" && ctoks[1] == T::kVertex) {
        tokens.assign(ctoks.begin() + 1, ctoks.end());
        ground_truth = true;
      } else {
        continue;
      }
    }
    const std::string& tag = tokens[0];
    try {
      if (tag == T::kVertex) {
        if (tokens.size() != 2 + static_cast<std::size_t>(T::kPoseValues))
          throw ParseError(line_no, "expected " + std::to_string(T::kPoseValues) + " pose values");
        const Key id = parseKey(tokens[1], line_no);
        const Pose p = T::read(parseNumbers(tokens, 2, line_no), 0);
        if (ground_truth)
          placePose(rec.ground_truth, seen_gt, id, p, line_no);
        else
          placePose(rec.poses, seen, id, p, line_no);
      } else if (tag == T::kEdge) {
        if (tokens.size() != 3 + T::kPoseValues + info_values)
          throw ParseError(line_no, "expected " + std::to_string(T::kPoseValues + info_values) + " edge values");
        Edge<Pose> e;
        e.from = parseKey(tokens[1], line_no);
        e.to = parseKey(tokens[2], line_no);
        const auto values = parseNumbers(tokens, 3, line_no);
        e.measurement = T::read(values, 0);
        e.information = upperToSymmetric(values, T::kPoseValues, d);
        NoiseModel::FromInformation(e.information);  // positive definiteness check
        const auto ctoks = split(comment);
        if (!ctoks.empty() && ctoks[0] == "outlier") e.is_outlier = true;
        rec.edges.push_back(std::move(e));
      } else if (tag == "FIX") {
        continue;
      } else {
        throw ParseError(line_no, "unknown record '" + tag + "'");
      }
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& ex) {
      throw ParseError(line_no, ex.what());
    }
  }
  for (std::size_t k = 0; k < seen.size(); ++k)
    if (!seen[k]) throw ParseError(line_no, "vertex ids are not contiguous (missing " + std::to_string(k) + ")");
  for (std::size_t k = 0; k < seen_gt.size(); ++k)
    if (!seen_gt[k]) throw ParseError(line_no, "ground-truth ids are not contiguous");
  try {
    rec.validate();
  } catch (const std::invalid_argument& ex) {
    throw ParseError(line_no, ex.what());
  }
  return rec;
}

template <typename Pose>
std::string writeG2o(const DatasetRecord<Pose>& record) {
  using T = G2oTraits<Pose>;
  constexpr int d = Pose::kDim;
  std::ostringstream os;
  os << std::setprecision(17);
  for (std::size_t k = 0; k < record.poses.size(); ++k) {
    os << T::kVertex << ' ' << k << ' ';
    T::write(os, record.poses[k]);
    os << '\n';
  }
  for (std::size_t k = 0; k < record.ground_truth.size(); ++k) {
    os << "# GT " << T::kVertex << ' ' << k << ' ';
    T::write(os, record.ground_truth[k]);
    os << '\n';
  }
  for (const auto& e : record.edges) {
    os << T::kEdge << ' ' << e.from << ' ' << e.to << ' ';
    T::write(os, e.measurement);
    for (int r = 0; r < d; ++r)
      for (int c = r; c < d; ++c) os << ' ' << e.information(r, c);
    if (e.isLoopClosure()) os << (e.is_outlier ? " # outlier" : " # inlier");
    os << '\n';
  }
  return os.str();
}

template <typename Pose>
DatasetRecord<Pose> readG2oFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parseG2o<Pose>(ss.str());
}

template <typename Pose>
void writeG2oFile(const std::string& path, const DatasetRecord<Pose>& record) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << writeG2o(record);
}

template <typename Pose>
DatasetRecord<Pose> injectOutliers(const DatasetRecord<Pose>& record, double fraction, std::uint64_t seed,
                                   const std::vector<Pose>& reference) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw std::invalid_argument("outlier fraction must lie in [0, 1)");
  DatasetRecord<Pose> out = record;
  std::size_t inliers = 0;
  std::vector<const Eigen::MatrixXd*> infos;
  std::set<std::pair<Key, Key>> pairs;
  for (const auto& e : record.edges) {
    pairs.emplace(std::min(e.from, e.to), std::max(e.from, e.to));
    if (e.isLoopClosure() && !e.is_outlier) {
      ++inliers;
      infos.push_back(&e.information);
    }
  }
  const auto n = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(inliers) / (1.0 - fraction)));
  if (n == 0) return out;
  if (reference.size() != record.poses.size()) throw std::invalid_argument("reference must cover every pose");
  const std::size_t N = record.poses.size();
  if (N < 3) throw std::invalid_argument("too few poses for non-adjacent outliers");

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Key> pick(0, N - 1);
  std::uniform_int_distribution<std::size_t> pick_info(0, infos.size() - 1);
  const std::size_t max_attempts = 1000 * n + 100000;
  std::size_t added = 0;
  for (std::size_t attempt = 0; added < n; ++attempt) {
    if (attempt >= max_attempts) throw std::invalid_argument("outlier fraction infeasible for this graph");
    Key a = pick(rng), b = pick(rng);
    if (a > b) std::swap(a, b);
    if (b - a <= 1 || pairs.count({a, b})) continue;
    Edge<Pose> e;
    e.from = a;
    e.to = b;
    e.measurement = Pose::Identity();
    e.information = *infos[pick_info(rng)];
    e.is_outlier = true;
    const Eigen::VectorXd r = e.noise().sqrtInformation() * Pose::Log(between(reference[a], reference[b]));
    if (chi2Cdf(Pose::kDim, r.squaredNorm()) <= 0.95) continue;
    pairs.emplace(a, b);
    out.edges.push_back(std::move(e));
    ++added;
  }
  return out;
}

DatasetRecord<Pose2> generateGridWorld(const GridWorldParams& p) {
  if (p.num_poses < 2) throw std::invalid_argument("grid world needs at least two poses");
  if (p.sigma_theta_deg < 0.0 || p.sigma_xy < 0.0) throw std::invalid_argument("sigmas must be non-negative");
  if (!(p.outlier_probability >= 0.0 && p.outlier_probability <= 1.0))
    throw std::invalid_argument("outlier probability must lie in [0, 1]");
  if (p.grid_size < 2) throw std::invalid_argument("grid must have at least two cells per side");
  if (!(p.p_forward >= 0.0 && p.p_left >= 0.0 && p.p_forward + p.p_left <= 1.0))
    throw std::invalid_argument("invalid action probabilities");

  constexpr double kHalfPi = std::numbers::pi / 2.0;
  const double sigma_theta = p.sigma_theta_deg * std::numbers::pi / 180.0;
  const double sigma_xy = p.sigma_xy * p.step_length;
  Eigen::Matrix3d info = Eigen::Matrix3d::Zero();
  info(0, 0) = info(1, 1) = 1.0 / std::pow(std::max(sigma_xy, kMinSigma), 2);
  info(2, 2) = 1.0 / std::pow(std::max(sigma_theta, kMinSigma), 2);

  std::mt19937_64 rng(p.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto noisy = [&](const Pose2& rel) {
    return compose(rel, Pose2(gaussian(rng, sigma_xy), gaussian(rng, sigma_xy), gaussian(rng, sigma_theta)));
  };

  const int lo = -(p.grid_size - 1) / 2;
  const int hi = lo + p.grid_size - 1;
  const int dx[4] = {1, 0, -1, 0};
  const int dy[4] = {0, 1, 0, -1};
  int cx = 0, cy = 0, heading = 0;
  auto truthPose = [&] { return Pose2(cx * p.step_length, cy * p.step_length, heading * kHalfPi); };

  DatasetRecord<Pose2> rec;
  rec.ground_truth.push_back(truthPose());
  std::map<std::pair<int, int>, std::vector<Key>> visits;
  visits[{cx, cy}].push_back(0);

  const double action_p[3] = {p.p_forward, p.p_left, 1.0 - p.p_forward - p.p_left};
  const int turn[3] = {0, 1, 3};
  for (Key i = 1; i < p.num_poses; ++i) {
    double mass[3];
    double total = 0.0;
    for (int a = 0; a < 3; ++a) {
      const int h = (heading + turn[a]) % 4;
      const int nx = cx + dx[h], ny = cy + dy[h];
      mass[a] = (nx >= lo && nx <= hi && ny >= lo && ny <= hi) ? action_p[a] : 0.0;
      total += mass[a];
    }
    if (total <= 0.0) {  // only reachable with degenerate action probabilities: turn around
      heading = (heading + 2) % 4;
    } else {
      double u = unit(rng) * total;
      int a = 0;
      while (a < 2 && (u >= mass[a] || mass[a] == 0.0)) {
        u -= mass[a];
        ++a;
      }
      heading = (heading + turn[a]) % 4;
    }
    cx += dx[heading];
    cy += dy[heading];
    rec.ground_truth.push_back(truthPose());
    const Pose2& now = rec.ground_truth.back();

    rec.edges.push_back({i - 1, i, noisy(between(rec.ground_truth[i - 1], now)), info, false});
    auto& here = visits[{cx, cy}];
    for (Key j : here) rec.edges.push_back({j, i, noisy(between(rec.ground_truth[j], now)), info, false});
    if (here.empty() && i >= 2 && unit(rng) < p.outlier_probability) {
      const Key j = std::uniform_int_distribution<Key>(0, i - 2)(rng);
      rec.edges.push_back({j, i, Pose2::Identity(), info, true});
    }
    here.push_back(i);
  }

  rec.poses.push_back(rec.ground_truth[0]);
  for (const auto& e : rec.edges)
    if (!e.isLoopClosure()) rec.poses.push_back(compose(rec.poses.back(), e.measurement));
  return rec;
}

DatasetRecord<Pose3> generateHelix(const HelixParams& p) {
  if (p.num_poses < 2 || p.poses_per_turn < 3) throw std::invalid_argument("helix too short");
  if (p.sigma_translation < 0.0 || p.sigma_rotation < 0.0) throw std::invalid_argument("sigmas must be non-negative");
  Eigen::Matrix<double, 6, 6> info = Eigen::Matrix<double, 6, 6>::Zero();
  for (int i = 0; i < 3; ++i) {
    info(i, i) = 1.0 / std::pow(std::max(p.sigma_translation, kMinSigma), 2);
    info(i + 3, i + 3) = 1.0 / std::pow(std::max(p.sigma_rotation, kMinSigma), 2);
  }
  std::mt19937_64 rng(p.seed);
  auto noisy = [&](const Pose3& rel) {
    Pose3::Tangent xi;
    for (int i = 0; i < 3; ++i) xi(i) = gaussian(rng, p.sigma_translation);
    for (int i = 3; i < 6; ++i) xi(i) = gaussian(rng, p.sigma_rotation);
    return compose(rel, Pose3::Exp(xi));
  };

  DatasetRecord<Pose3> rec;
  const double per_turn = static_cast<double>(p.poses_per_turn);
  for (std::size_t i = 0; i < p.num_poses; ++i) {
    const double phi = 2.0 * std::numbers::pi * static_cast<double>(i) / per_turn;
    const Eigen::Vector3d t(p.radius * std::cos(phi), p.radius * std::sin(phi),
                            p.rise_per_turn * static_cast<double>(i) / per_turn);
    const Eigen::Matrix3d R = Eigen::AngleAxisd(phi + std::numbers::pi / 2.0, Eigen::Vector3d::UnitZ()).toRotationMatrix();
    rec.ground_truth.emplace_back(R, t);
  }
  for (Key i = 1; i < p.num_poses; ++i) {
    rec.edges.push_back({i - 1, i, noisy(between(rec.ground_truth[i - 1], rec.ground_truth[i])), info, false});
    if (i >= p.poses_per_turn) {
      const Key j = i - p.poses_per_turn;
      rec.edges.push_back({j, i, noisy(between(rec.ground_truth[j], rec.ground_truth[i])), info, false});
    }
  }
  rec.poses.push_back(rec.ground_truth[0]);
  for (const auto& e : rec.edges)
    if (!e.isLoopClosure()) rec.poses.push_back(compose(rec.poses.back(), e.measurement));
  return rec;
}

template <typename Pose>
std::vector<Iteration> splitIterations(const DatasetRecord<Pose>& record) {
  std::vector<Iteration> out(record.poses.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k].key = k;
  for (std::size_t i = 0; i < record.edges.size(); ++i) {
    const auto& e = record.edges[i];
    const Key newer = std::max(e.from, e.to);
    if (newer >= out.size()) throw std::invalid_argument("edge references unknown pose");
    (e.isLoopClosure() ? out[newer].closures : out[newer].odometry).push_back(i);
  }
  for (std::size_t k = 1; k < out.size(); ++k)
    if (out[k].odometry.empty()) throw std::invalid_argument("no odometry reaches pose " + std::to_string(k));
  return out;
}

template <typename Pose>
IterationInput<Pose> iterationInput(const DatasetRecord<Pose>& record, const Iteration& it, const Values<Pose>& current,
                                    const KernelSpec& closure_kernel, bool skip_outliers, double prior_sigma) {
  IterationInput<Pose> in;
  if (it.odometry.empty()) {
    in.values.emplace_back(it.key, record.poses[it.key]);
    in.factors.push_back(Factor<Pose>::Prior(it.key, record.poses[it.key], NoiseModel::Isotropic(Pose::kDim, prior_sigma)));
  } else {
    const Edge<Pose>& odo = record.edges[it.odometry.front()];
    const Pose rel = odo.to == it.key ? odo.measurement : inverse(odo.measurement);
    in.values.emplace_back(it.key, compose(current.at(it.key - 1), rel));
  }
  for (std::size_t ei : it.odometry) {
    const auto& e = record.edges[ei];
    in.factors.push_back(Factor<Pose>::Odometry(e.from, e.to, e.measurement, e.noise()));
  }
  for (std::size_t ei : it.closures) {
    const auto& e = record.edges[ei];
    if (skip_outliers && e.is_outlier) continue;
    in.factors.push_back(Factor<Pose>::Between(e.from, e.to, e.measurement, e.noise(), closure_kernel));
    in.closure_edges.push_back(ei);
  }
  return in;
}

std::vector<std::size_t> keyframeIndices(std::size_t num_iterations, std::size_t interval) {
  if (interval == 0) throw std::invalid_argument("keyframe interval must be positive");
  std::vector<std::size_t> out;
  if (num_iterations == 0) return out;
  for (std::size_t k = interval; k < num_iterations; k += interval) out.push_back(k);
  if (out.empty() || out.back() != num_iterations - 1) out.push_back(num_iterations - 1);
  return out;
}

#define RISAM_INSTANTIATE_DATASETS(P)                                                                         \
  template struct DatasetRecord<P>;                                                                           \
  template DatasetRecord<P> parseG2o<P>(std::string_view);                                                    \
  template std::string writeG2o<P>(const DatasetRecord<P>&);                                                  \
  template DatasetRecord<P> readG2oFile<P>(const std::string&);                                               \
  template void writeG2oFile<P>(const std::string&, const DatasetRecord<P>&);                                 \
  template DatasetRecord<P> injectOutliers<P>(const DatasetRecord<P>&, double, std::uint64_t, const std::vector<P>&); \
  template std::vector<Iteration> splitIterations<P>(const DatasetRecord<P>&);                                 \
  template IterationInput<P> iterationInput<P>(const DatasetRecord<P>&, const Iteration&, const Values<P>&,    \
                                               const KernelSpec&, bool, double);

RISAM_INSTANTIATE_DATASETS(Pose2)
RISAM_INSTANTIATE_DATASETS(Pose3)

#undef RISAM_INSTANTIATE_DATASETS

}  // namespace risam
