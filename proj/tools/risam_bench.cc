// risam_bench: run methods x seeds on a g2o file or a synthetic trajectory
// and write per-trial and summary tables plus keyframe trajectory dumps.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "risam/benchmark.h"

namespace fs = std::filesystem;
using namespace risam;

namespace {

std::vector<std::uint64_t> parseSeeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto dash = item.find('-');
    if (dash == std::string::npos) {
      out.push_back(std::stoull(item));
      continue;
    }
    const auto lo = std::stoull(item.substr(0, dash)), hi = std::stoull(item.substr(dash + 1));
    if (hi < lo) throw std::invalid_argument("empty seed range " + item);
    for (auto s = lo; s <= hi; ++s) out.push_back(s);
  }
  if (out.empty()) throw std::invalid_argument("no seeds given");
  return out;
}

std::string conditionLabel(const RunConfig& cfg) {
  std::ostringstream os;
  if (cfg.source == SourceKind::File)
    os << fs::path(cfg.dataset_path).stem().string();
  else if (cfg.source == SourceKind::GridWorld)
    os << "gridworld_sigma" << cfg.grid.sigma_theta_deg;
  else
    os << "helix";
  if (cfg.outlier_fraction > 0.0) os << "_outliers" << cfg.outlier_fraction;
  return os.str();
}

template <typename Pose>
std::vector<TrialRow> runSeed(const RunConfig& cfg, const std::vector<Method>& methods, std::uint64_t seed,
                              const fs::path& dump_dir) {
  const std::string condition = conditionLabel(cfg);
  const std::string config = describeConfig(cfg);
  std::vector<TrialRow> rows;
  DatasetRecord<Pose> record;
  std::vector<Values<Pose>> reference;
  try {
    record = makeDataset<Pose>(cfg, seed);
    reference = pseudoGroundTruth(record, keyframeIndices(record.poses.size(), cfg.trial.keyframe_interval),
                                  cfg.trial.risam.relin_threshold);
  } catch (const std::exception& ex) {
    for (Method m : methods) {
      TrialRow row;
      row.method = std::string(methodName(m));
      row.condition = condition;
      row.seed = seed;
      row.failed = true;
      row.error = ex.what();
      row.config = config;
      rows.push_back(row);
    }
    return rows;
  }
  for (Method m : methods) {
    const TrialResult<Pose> result = runTrial(record, m, cfg.trial, reference);
    rows.push_back(makeRow(result, condition, seed, config));
    std::ofstream dump(dump_dir / (std::string(methodName(m)) + "_" + condition + "_seed" + std::to_string(seed) + ".txt"));
    writeTrajectoryDump(dump, result);
  }
  return rows;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online robust pose-graph benchmark"};
  std::vector<std::string> method_names{"risam"};
  std::string dataset, config_path, seeds_text = "0", out_dir = "risam_out";
  bool gridworld = false, helix = false, batch_every = false;
  double outlier_fraction = -1.0;
  std::size_t keyframe_interval = 0;
  std::vector<std::string> overrides;

  app.add_option("--method", method_names, "risam, batch_gnc, gm, huber, maxmix, quadratic (comma separated)")
      ->delimiter(',');
  app.add_option("--dataset", dataset, "g2o file (SE(2) or SE(3))")->check(CLI::ExistingFile);
  app.add_flag("--gridworld", gridworld, "generate random SE(2) grid worlds");
  app.add_flag("--helix", helix, "generate SE(3) helix trajectories");
  app.add_option("--outlier-fraction", outlier_fraction, "injected outliers as a fraction of all loop closures")
      ->check(CLI::Range(0.0, 0.999));
  app.add_option("--seeds", seeds_text, "seed list, e.g. 0-9 or 1,4,7");
  app.add_option("--keyframe-interval", keyframe_interval, "iterations between metric snapshots")
      ->check(CLI::PositiveNumber);
  app.add_option("--out-dir", out_dir, "output directory");
  app.add_option("--config", config_path, "flat key = value file")->check(CLI::ExistingFile);
  app.add_option("--set", overrides, "config override key=value (repeatable)");
  app.add_flag("--batch-every-iteration", batch_every, "re-solve batch GNC after every iteration");
  CLI11_PARSE(app, argc, argv);

  RunConfig cfg;
  std::vector<Method> methods;
  std::vector<std::uint64_t> seeds;
  int dim = 2;
  try {
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      std::stringstream ss;
      ss << in.rdbuf();
      applyConfigText(cfg, ss.str());
    }
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
      applyConfigKey(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (static_cast<int>(!dataset.empty()) + gridworld + helix > 1)
      throw std::invalid_argument("choose one of --dataset, --gridworld, --helix");
    if (!dataset.empty()) {
      cfg.source = SourceKind::File;
      cfg.dataset_path = dataset;
    }
    if (gridworld) cfg.source = SourceKind::GridWorld;
    if (helix) cfg.source = SourceKind::Helix;
    if (outlier_fraction >= 0.0) cfg.outlier_fraction = outlier_fraction;
    if (keyframe_interval > 0) cfg.trial.keyframe_interval = keyframe_interval;
    if (batch_every) cfg.trial.batch_every_iteration = true;
    cfg.trial.risam.validate();
    for (const auto& name : method_names) methods.push_back(parseMethod(name));
    seeds = parseSeeds(seeds_text);
    if (cfg.source == SourceKind::File) {
      if (cfg.dataset_path.empty()) throw std::invalid_argument("no dataset path given");
      std::ifstream in(cfg.dataset_path);
      std::stringstream ss;
      ss << in.rdbuf();
      dim = detectG2oDimension(ss.str());
    } else {
      dim = cfg.source == SourceKind::Helix ? 3 : 2;
    }
  } catch (const std::exception& ex) {
    std::cerr << "risam_bench: " << ex.what() << '\n';
    return 1;
  }

  const fs::path out(out_dir);
  const fs::path dumps = out / "trajectories";
  fs::create_directories(dumps);

  std::vector<std::function<std::vector<TrialRow>()>> jobs;
  for (auto seed : seeds)
    jobs.emplace_back([&, seed] {
      return dim == 2 ? runSeed<Pose2>(cfg, methods, seed, dumps) : runSeed<Pose3>(cfg, methods, seed, dumps);
    });
  std::vector<TrialRow> rows;
  for (auto& r : runJobs(jobs)) rows.insert(rows.end(), r.begin(), r.end());

  std::ofstream trials(out / "trials.csv");
  writeTrialCsv(trials, rows);
  const auto summary = summarize(rows);
  std::ofstream summary_file(out / "summary.csv");
  writeSummaryCsv(summary_file, summary);
  writeSummaryCsv(std::cout, summary);

  bool any_failed = false;
  for (const auto& r : rows)
    if (r.failed) {
      any_failed = true;
      std::cerr << "failed: " << r.method << " seed " << r.seed << ": " << r.error << '\n';
    }
  return any_failed ? 2 : 0;
}
