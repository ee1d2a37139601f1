#include "risam/benchmark.h"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <memory>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

namespace risam {

namespace {

template <typename Pose>
class OnlineSolver {
 public:
  virtual ~OnlineSolver() = default;
  virtual void update(const IterationInput<Pose>& in, bool keyframe, TrialResult<Pose>& result) = 0;
  virtual Values<Pose> estimate() const = 0;
};

template <typename Pose>
class RiSAMSolver : public OnlineSolver<Pose> {
 public:
  explicit RiSAMSolver(const RiSAMConfig& cfg) : risam_(cfg) {}
  void update(const IterationInput<Pose>& in, bool keyframe, TrialResult<Pose>& result) override {
    const UpdateInfo info = risam_.update(in.factors, in.values, keyframe);
    result.convex_marked += info.convex_marked;
    result.nonfinite_evaluations += info.nonfinite_evaluations;
    if (info.nonfinite_step) ++result.nonfinite_steps;
  }
  Values<Pose> estimate() const override { return risam_.estimate(); }

 private:
  RiSAM<Pose> risam_;
};

template <typename Pose>
class BaselineSolver : public OnlineSolver<Pose> {
 public:
  explicit BaselineSolver(double relin_threshold) : solver_(relin_threshold) {}
  void update(const IterationInput<Pose>& in, bool, TrialResult<Pose>&) override { solver_.update(in.factors, in.values); }
  Values<Pose> estimate() const override { return solver_.estimate(); }

 private:
  IncrementalBaseline<Pose> solver_;
};

template <typename Pose>
class BatchSolver : public OnlineSolver<Pose> {
 public:
  BatchSolver(const RiSAMConfig& cfg, bool every_iteration) : cfg_(cfg), every_iteration_(every_iteration) {}
  void update(const IterationInput<Pose>& in, bool keyframe, TrialResult<Pose>&) override {
    for (const auto& [key, pose] : in.values) {
      graph_.addVariable(key);
      current_.insert(key, pose);
    }
    for (const auto& f : in.factors) graph_.add(f);
    if (every_iteration_ || keyframe) current_ = efficientGnc(graph_, current_, cfg_).estimate;
  }
  Values<Pose> estimate() const override { return current_; }

 private:
  RiSAMConfig cfg_;
  bool every_iteration_;
  FactorGraph<Pose> graph_;
  Values<Pose> current_;
};

template <typename Pose>
KernelSpec closureKernel(Method m, double c) {
  switch (m) {
    case Method::RiSAM:
    case Method::BatchGnc:
      return KernelSpec::SIG(c);
    case Method::GemanMcClure:
      return KernelSpec::GemanMcClure(c);
    case Method::Huber:
      return KernelSpec::Huber(c);
    case Method::MaxMixture:
      return KernelSpec::MaxMixture(Pose::kDim);
    case Method::Quadratic:
      break;
  }
  return KernelSpec::Quadratic();
}

template <typename Pose>
std::unique_ptr<OnlineSolver<Pose>> makeSolver(Method m, const TrialOptions& opt) {
  switch (m) {
    case Method::RiSAM:
      return std::make_unique<RiSAMSolver<Pose>>(opt.risam);
    case Method::BatchGnc:
      return std::make_unique<BatchSolver<Pose>>(opt.risam, opt.batch_every_iteration);
    default:
      return std::make_unique<BaselineSolver<Pose>>(opt.risam.relin_threshold);
  }
}

template <typename Pose>
bool allFinite(const Values<Pose>& v) {
  for (Key k : v.keys())
    if (!Pose::Log(v.at(k)).allFinite()) return false;
  return true;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  return quantiles(std::move(v)).median;
}

std::string csvField(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

template <typename T>
T parseNumber(std::string_view key, std::string_view value) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end)
    throw std::invalid_argument("bad value '" + std::string(value) + "' for " + std::string(key));
  return out;
}

bool parseBool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw std::invalid_argument("bad boolean '" + std::string(value) + "' for " + std::string(key));
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct ConfigKey {
  const char* name;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
std::string show(const T& v) {
  std::ostringstream os;
  os << std::setprecision(12) << std::boolalpha << v;
  return os.str();
}

#define RISAM_DOUBLE_KEY(NAME, FIELD) \
  {NAME, [](RunConfig& c, std::string_view v) { c.FIELD = parseNumber<double>(NAME, v); }, \
   [](const RunConfig& c) { return show(c.FIELD); }}
#define RISAM_INT_KEY(NAME, FIELD, TYPE) \
  {NAME, [](RunConfig& c, std::string_view v) { c.FIELD = parseNumber<TYPE>(NAME, v); }, \
   [](const RunConfig& c) { return show(c.FIELD); }}
#define RISAM_BOOL_KEY(NAME, FIELD) \
  {NAME, [](RunConfig& c, std::string_view v) { c.FIELD = parseBool(NAME, v); }, \
   [](const RunConfig& c) { return show(c.FIELD); }}

const std::vector<ConfigKey>& configKeys() {
  static const std::vector<ConfigKey> keys = {
      RISAM_DOUBLE_KEY("mu_init", trial.risam.mu_init),
      RISAM_DOUBLE_KEY("mu_final", trial.risam.mu_final),
      RISAM_DOUBLE_KEY("c", trial.risam.c),
      RISAM_DOUBLE_KEY("alpha_min", trial.risam.alpha_min),
      RISAM_DOUBLE_KEY("alpha_max", trial.risam.alpha_max),
      RISAM_DOUBLE_KEY("alpha_growth", trial.risam.alpha_growth),
      RISAM_DOUBLE_KEY("wolfe_c1", trial.risam.wolfe_c1),
      RISAM_DOUBLE_KEY("strong_inlier_thresh", trial.risam.strong_inlier_thresh),
      RISAM_DOUBLE_KEY("strong_outlier_thresh", trial.risam.strong_outlier_thresh),
      RISAM_DOUBLE_KEY("relin_threshold", trial.risam.relin_threshold),
      RISAM_DOUBLE_KEY("convergence_delta_norm", trial.risam.convergence_delta_norm),
      RISAM_INT_KEY("max_polish_iterations", trial.risam.max_polish_iterations, int),
      RISAM_INT_KEY("batch_max_polish_iterations", trial.risam.batch_max_polish_iterations, int),
      RISAM_BOOL_KEY("adjust_initial_mu", trial.risam.adjust_initial_mu),
      RISAM_INT_KEY("keyframe_interval", trial.keyframe_interval, std::size_t),
      RISAM_BOOL_KEY("batch_every_iteration", trial.batch_every_iteration),
      RISAM_BOOL_KEY("uniform_weights", trial.uniform_weights),
      RISAM_DOUBLE_KEY("prior_sigma", trial.prior_sigma),
      {"source",
       [](RunConfig& c, std::string_view v) {
         if (v == "file")
           c.source = SourceKind::File;
         else if (v == "gridworld")
           c.source = SourceKind::GridWorld;
         else if (v == "helix")
           c.source = SourceKind::Helix;
         else
           throw std::invalid_argument("source must be file, gridworld or helix");
       },
       [](const RunConfig& c) {
         return std::string(c.source == SourceKind::File ? "file" : c.source == SourceKind::GridWorld ? "gridworld" : "helix");
       }},
      {"dataset", [](RunConfig& c, std::string_view v) { c.dataset_path = std::string(v); },
       [](const RunConfig& c) { return c.dataset_path; }},
      RISAM_DOUBLE_KEY("outlier_fraction", outlier_fraction),
      RISAM_INT_KEY("grid.num_poses", grid.num_poses, std::size_t),
      RISAM_DOUBLE_KEY("grid.step_length", grid.step_length),
      RISAM_DOUBLE_KEY("grid.sigma_theta_deg", grid.sigma_theta_deg),
      RISAM_DOUBLE_KEY("grid.sigma_xy", grid.sigma_xy),
      RISAM_DOUBLE_KEY("grid.outlier_probability", grid.outlier_probability),
      RISAM_INT_KEY("grid.size", grid.grid_size, int),
      RISAM_DOUBLE_KEY("grid.p_forward", grid.p_forward),
      RISAM_DOUBLE_KEY("grid.p_left", grid.p_left),
      RISAM_INT_KEY("helix.num_poses", helix.num_poses, std::size_t),
      RISAM_INT_KEY("helix.poses_per_turn", helix.poses_per_turn, std::size_t),
      RISAM_DOUBLE_KEY("helix.radius", helix.radius),
      RISAM_DOUBLE_KEY("helix.rise_per_turn", helix.rise_per_turn),
      RISAM_DOUBLE_KEY("helix.sigma_translation", helix.sigma_translation),
      RISAM_DOUBLE_KEY("helix.sigma_rotation", helix.sigma_rotation),
  };
  return keys;
}

#undef RISAM_DOUBLE_KEY
#undef RISAM_INT_KEY
#undef RISAM_BOOL_KEY

}  // namespace

std::string_view methodName(Method m) {
  switch (m) {
    case Method::RiSAM:
      return "risam";
    case Method::BatchGnc:
      return "batch_gnc";
    case Method::GemanMcClure:
      return "gm";
    case Method::Huber:
      return "huber";
    case Method::MaxMixture:
      return "maxmix";
    case Method::Quadratic:
      return "quadratic";
  }
  return "unknown";
}

Method parseMethod(std::string_view name) {
  for (Method m : {Method::RiSAM, Method::BatchGnc, Method::GemanMcClure, Method::Huber, Method::MaxMixture,
                   Method::Quadratic})
    if (methodName(m) == name) return m;
  throw std::invalid_argument("unknown method '" + std::string(name) + "'");
}

template <typename Pose>
double TrialResult<Pose>::totalSeconds() const {
  double s = 0.0;
  for (double t : iteration_seconds) s += t;
  return s;
}

template <typename Pose>
double TrialResult<Pose>::maxIterationSeconds() const {
  return iteration_seconds.empty() ? 0.0 : *std::max_element(iteration_seconds.begin(), iteration_seconds.end());
}

template <typename Pose>
double TrialResult<Pose>::medianIterationSeconds() const {
  return median(iteration_seconds);
}

template <typename Pose>
TrialResult<Pose> runTrial(const DatasetRecord<Pose>& record, Method method, const TrialOptions& options,
                           const std::vector<Values<Pose>>& reference) {
  TrialResult<Pose> result;
  result.method = method;
  try {
    const auto iterations = splitIterations(record);
    const auto keyframes = keyframeIndices(iterations.size(), options.keyframe_interval);
    if (reference.size() != keyframes.size()) throw std::invalid_argument("reference does not match keyframes");
    const KernelSpec kernel = closureKernel<Pose>(method, options.risam.c);
    auto solver = makeSolver<Pose>(method, options);

    Values<Pose> current;
    std::vector<std::size_t> revealed;  // loop-closure edge indices, in reveal order
    std::size_t next = 0;
    result.iteration_seconds.reserve(iterations.size());
    for (std::size_t k = 0; k < iterations.size(); ++k) {
      const bool keyframe = next < keyframes.size() && keyframes[next] == k;
      const auto in = iterationInput(record, iterations[k], current, kernel, false, options.prior_sigma);
      revealed.insert(revealed.end(), in.closure_edges.begin(), in.closure_edges.end());

      const auto start = std::chrono::steady_clock::now();
      solver->update(in, keyframe, result);
      const auto stop = std::chrono::steady_clock::now();
      result.iteration_seconds.push_back(std::chrono::duration<double>(stop - start).count());
      if (result.nonfinite_steps > 0) throw std::runtime_error("non-finite cost in an applied step");

      current = solver->estimate();
      if (!keyframe) continue;
      if (!allFinite(current)) throw std::runtime_error("non-finite estimate");
      KeyframeSnapshot<Pose> snap;
      snap.k = k;
      for (std::size_t ei : revealed) {
        const auto& e = record.edges[ei];
        const auto f = Factor<Pose>::Between(e.from, e.to, e.measurement, e.noise(), KernelSpec::Quadratic());
        snap.classified_inlier.push_back(chi2Percentile(f, current) < kInlierPercentile);
        snap.is_inlier.push_back(!e.is_outlier);
      }
      snap.ate = ate(current, reference[next]);
      snap.pr = precisionRecall(snap.classified_inlier, snap.is_inlier);
      snap.estimate = current;
      result.snapshots.push_back(std::move(snap));
      ++next;
    }

    std::vector<std::pair<std::size_t, double>> a, p, r;
    for (const auto& s : result.snapshots) {
      a.emplace_back(s.k, s.ate);
      p.emplace_back(s.k, s.pr.precision);
      r.emplace_back(s.k, s.pr.recall);
    }
    result.iate = incrementalMetric(a, options.uniform_weights);
    result.iprecision = incrementalMetric(p, options.uniform_weights);
    result.irecall = incrementalMetric(r, options.uniform_weights);
  } catch (const std::exception& ex) {
    result.failed = true;
    result.error = ex.what();
  }
  return result;
}

template <typename Pose>
TrialResult<Pose> runTrial(const DatasetRecord<Pose>& record, Method method, const TrialOptions& options) {
  const auto keyframes = keyframeIndices(record.poses.size(), options.keyframe_interval);
  return runTrial(record, method, options, pseudoGroundTruth(record, keyframes, options.risam.relin_threshold));
}

template <typename Pose>
void writeTrajectoryDump(std::ostream& os, const TrialResult<Pose>& result) {
  os << std::setprecision(17);
  for (const auto& s : result.snapshots)
    for (Key key : s.estimate.keys()) {
      const Pose& p = s.estimate.at(key);
      os << s.k << ' ' << key;
      if constexpr (Pose::kDim == 3) {
        os << ' ' << p.x() << ' ' << p.y() << ' ' << p.theta();
      } else {
        const auto& t = p.translation();
        const auto& q = p.quaternion();
        os << ' ' << t.x() << ' ' << t.y() << ' ' << t.z() << ' ' << q.x() << ' ' << q.y() << ' ' << q.z() << ' '
           << q.w();
      }
      os << '\n';
    }
}

void applyConfigKey(RunConfig& cfg, std::string_view key, std::string_view value) {
  for (const auto& k : configKeys())
    if (key == k.name) {
      k.set(cfg, trim(value));
      return;
    }
  throw std::invalid_argument("unknown config key '" + std::string(key) + "'");
}

void applyConfigText(RunConfig& cfg, std::string_view text) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key = value");
    try {
      applyConfigKey(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const std::invalid_argument& ex) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
}

std::string describeConfig(const RunConfig& cfg) {
  std::string out;
  for (const auto& k : configKeys()) {
    if (!out.empty()) out += ';';
    out += k.name;
    out += '=';
    out += k.get(cfg);
  }
  return out;
}

template <typename Pose>
DatasetRecord<Pose> makeDataset(const RunConfig& cfg, std::uint64_t seed) {
  DatasetRecord<Pose> rec;
  if (cfg.source == SourceKind::File) {
    rec = readG2oFile<Pose>(cfg.dataset_path);
  } else if constexpr (Pose::kDim == 3) {
    if (cfg.source != SourceKind::GridWorld) throw std::invalid_argument("the helix source is SE(3)");
    GridWorldParams p = cfg.grid;
    p.seed = seed;
    rec = generateGridWorld(p);
  } else {
    if (cfg.source != SourceKind::Helix) throw std::invalid_argument("the grid-world source is SE(2)");
    HelixParams p = cfg.helix;
    p.seed = seed;
    rec = generateHelix(p);
  }
  if (cfg.outlier_fraction > 0.0) {
    std::vector<Pose> reference = rec.ground_truth;
    if (reference.empty()) {
      const auto solved = pseudoGroundTruth(rec, {rec.poses.size() - 1}, cfg.trial.risam.relin_threshold).front();
      for (Key k = 0; k < rec.poses.size(); ++k) reference.push_back(solved.at(k));
    }
    // Decorrelate the injection stream from the generator stream.
    rec = injectOutliers(rec, cfg.outlier_fraction, seed ^ 0x9e3779b97f4a7c15ULL, reference);
  }
  return rec;
}

Quantiles quantiles(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("quantiles of an empty set");
  std::sort(values.begin(), values.end());
  auto at = [&](double q) {
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
  };
  return {at(0.25), at(0.5), at(0.75)};
}

std::vector<SummaryRow> summarize(const std::vector<TrialRow>& rows) {
  struct Group {
    SummaryRow row;
    std::vector<double> iate, ip, ir, time;
  };
  std::vector<Group> groups;
  for (const auto& r : rows) {
    auto it = std::find_if(groups.begin(), groups.end(), [&](const Group& g) {
      return g.row.method == r.method && g.row.condition == r.condition;
    });
    if (it == groups.end()) {
      groups.push_back({});
      it = groups.end() - 1;
      it->row.method = r.method;
      it->row.condition = r.condition;
    }
    ++it->row.trials;
    if (r.failed) {
      ++it->row.failed;
      continue;
    }
    it->iate.push_back(r.iate);
    it->ip.push_back(r.iprecision);
    it->ir.push_back(r.irecall);
    it->time.push_back(r.total_seconds);
  }
  std::vector<SummaryRow> out;
  for (auto& g : groups) {
    if (!g.iate.empty()) {
      g.row.iate = quantiles(g.iate);
      g.row.iprecision = quantiles(g.ip);
      g.row.irecall = quantiles(g.ir);
      g.row.total_seconds = quantiles(g.time);
    }
    out.push_back(g.row);
  }
  return out;
}

void writeTrialCsv(std::ostream& os, const std::vector<TrialRow>& rows) {
  os << "method,condition,seed,failed,iate,iprecision,irecall,total_seconds,max_iteration_seconds,error,config\n";
  os << std::setprecision(9);
  for (const auto& r : rows)
    os << csvField(r.method) << ',' << csvField(r.condition) << ',' << r.seed << ',' << (r.failed ? 1 : 0) << ','
       << r.iate << ',' << r.iprecision << ',' << r.irecall << ',' << r.total_seconds << ','
       << r.max_iteration_seconds << ',' << csvField(r.error) << ',' << csvField(r.config) << '\n';
}

void writeSummaryCsv(std::ostream& os, const std::vector<SummaryRow>& rows) {
  os << "method,condition,trials,failed";
  for (const char* m : {"iate", "iprecision", "irecall", "total_seconds"})
    os << ',' << m << "_q1," << m << "_median," << m << "_q3";
  os << '\n' << std::setprecision(9);
  for (const auto& r : rows) {
    os << csvField(r.method) << ',' << csvField(r.condition) << ',' << r.trials << ',' << r.failed;
    for (const Quantiles* q : {&r.iate, &r.iprecision, &r.irecall, &r.total_seconds})
      os << ',' << q->q1 << ',' << q->median << ',' << q->q3;
    os << '\n';
  }
}

template <typename Pose>
TrialRow makeRow(const TrialResult<Pose>& result, std::string condition, std::uint64_t seed, std::string config) {
  TrialRow row;
  row.method = std::string(methodName(result.method));
  row.condition = std::move(condition);
  row.seed = seed;
  row.failed = result.failed;
  row.error = result.error;
  row.iate = result.iate;
  row.iprecision = result.iprecision;
  row.irecall = result.irecall;
  row.total_seconds = result.totalSeconds();
  row.max_iteration_seconds = result.maxIterationSeconds();
  row.config = std::move(config);
  return row;
}

std::size_t workerCount() {
  if (const char* env = std::getenv("RISAM_THREADS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n > 0) return static_cast<std::size_t>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<std::vector<TrialRow>> runJobs(const std::vector<std::function<std::vector<TrialRow>()>>& jobs) {
  std::vector<std::vector<TrialRow>> out(jobs.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) out[i] = jobs[i]();
  };
  const std::size_t n = std::min(workerCount(), jobs.size());
  if (n <= 1) {
    work();
    return out;
  }
  std::vector<std::thread> threads;
  for (std::size_t t = 0; t < n; ++t) threads.emplace_back(work);
  for (auto& t : threads) t.join();
  return out;
}

#define RISAM_INSTANTIATE_BENCHMARK(P)                                                                         \
  template struct TrialResult<P>;                                                                              \
  template TrialResult<P> runTrial<P>(const DatasetRecord<P>&, Method, const TrialOptions&,                    \
                                      const std::vector<Values<P>>&);                                          \
  template TrialResult<P> runTrial<P>(const DatasetRecord<P>&, Method, const TrialOptions&);                  \
  template void writeTrajectoryDump<P>(std::ostream&, const TrialResult<P>&);                                 \
  template DatasetRecord<P> makeDataset<P>(const RunConfig&, std::uint64_t);                                   \
  template TrialRow makeRow<P>(const TrialResult<P>&, std::string, std::uint64_t, std::string);

RISAM_INSTANTIATE_BENCHMARK(Pose2)
RISAM_INSTANTIATE_BENCHMARK(Pose3)

#undef RISAM_INSTANTIATE_BENCHMARK

}  // namespace risam
