#pragma once

// Command implementations behind the `sssd` binary. Each command writes only inside its
// output directory and refuses a non-empty one unless forced.

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "sssd/evaluation.hpp"
#include "sssd/leads.hpp"
#include "sssd/run_config.hpp"
#include "sssd/synthetic.hpp"
#include "sssd/training.hpp"

namespace sssd::cli {

namespace fs = std::filesystem;

/// Relative dataset paths that do not exist are looked up under $SSSD_DATA_ROOT when set.
inline fs::path resolve_data_dir(const fs::path& p) {
  if (p.is_relative() && !fs::exists(p))
    if (const char* root = std::getenv("SSSD_DATA_ROOT"); root && *root) return fs::path(root) / p;
  return p;
}

/// Creates `dir`. An existing non-empty directory is an error unless `force`, in which case
/// files matching `owned` (names this command writes) are removed first.
inline void prepare_out_dir(const fs::path& dir, bool force, const std::regex& owned) {
  if (fs::exists(dir) && !fs::is_directory(dir)) throw std::invalid_argument(dir.string() + " exists and is not a directory");
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!force) throw std::invalid_argument("output directory " + dir.string() + " is not empty (use --force)");
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file() && std::regex_match(e.path().filename().string(), owned)) fs::remove(e.path());
  }
  fs::create_directories(dir);
}

inline const std::regex& dataset_files() {
  static const std::regex r(R"(meta\.csv|.*\.f32)");
  return r;
}

// ---------------------------------------------------------------------------------------------

struct ToyDataArgs {
  fs::path out;
  int n = 400;
  int classes = 2;
  std::uint64_t seed = 0;
  int length = 256;
  double fs = 50.0;
  bool force = false;
};

inline void cmd_toy_data(const ToyDataArgs& a) {
  ToyOptions opt;
  opt.length = a.length;
  opt.fs = a.fs;
  auto d = make_toy_dataset_total(a.n, a.classes, a.seed, opt);
  prepare_out_dir(a.out, a.force, dataset_files());
  save_dataset(d, a.out);
  std::cerr << "wrote " << d.size() << " records to " << a.out.string() << "\n";
}

// ---------------------------------------------------------------------------------------------

struct TrainArgs {
  fs::path data;
  fs::path out;
  std::optional<fs::path> config;
  std::optional<std::string> mechanism;
  std::optional<std::uint64_t> seed;
  std::optional<long> total_samples;
  std::optional<long> checkpoint_every;
  bool force = false;
  bool quiet = false;
};

inline RunConfig resolve_run_config(const std::optional<fs::path>& path, std::optional<std::uint64_t> seed) {
  RunConfig rc = path ? load_run_config(*path) : RunConfig{};
  if (seed) {
    rc.seed = *seed;
    rc.train.seed = *seed;
    rc.eval.generation_seed = *seed;
  }
  return rc;
}

/// Returns the checkpoint manifest paths in samples_seen order.
inline std::vector<fs::path> cmd_train(const TrainArgs& a) {
  RunConfig rc = resolve_run_config(a.config, a.seed);
  if (a.mechanism) rc.model.mechanism = parse_mechanism(*a.mechanism);
  if (a.total_samples) rc.train.total_samples = *a.total_samples;
  if (a.checkpoint_every) rc.train.checkpoint_every_samples = *a.checkpoint_every;
  const Dataset all = load_dataset(resolve_data_dir(a.data));
  // Shapes always follow the data.
  rc.model.channels = all.leads();
  rc.model.length = all.length();
  rc.model.num_labels = all.num_labels();
  rc.model.validate();
  rc.train.validate();
  const Dataset train_set = split_folds(all).train;

  prepare_out_dir(a.out, a.force, std::regex(R"(ckpt_\d+\.(json|bin)|loss\.csv|config\.json)"));
  std::ofstream(a.out / "config.json") << to_json(rc).dump(2) << "\n";
  std::ofstream loss(a.out / "loss.csv");
  loss << "step,samples_seen,loss\n";

  std::vector<fs::path> manifests;
  TrainHooks hooks;
  hooks.keep_checkpoints = false;
  hooks.on_step = [&](const LossRecord& r) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%ld,%ld,%.9g\n", r.step, r.samples_seen, r.loss);
    loss << buf;
  };
  hooks.on_checkpoint = [&](const Checkpoint& ck) {
    manifests.push_back(save_checkpoint(ck, a.out, checkpoint_stem(ck.samples_seen)));
    if (!a.quiet) std::cerr << "checkpoint at " << ck.samples_seen << " samples\n";
  };
  train(train_set, rc.model, rc.train, hooks);
  return manifests;
}

// ---------------------------------------------------------------------------------------------

struct GenerateArgs {
  fs::path checkpoint;
  fs::path data;
  fs::path out;
  std::uint64_t seed = 0;
  bool full_leads = false;
  bool force = false;
};

inline Dataset expand_leads(const Dataset& d) {
  Dataset out = d.empty_like();
  for (const auto& r : d.records) {
    auto full = reconstruct_full(LeadSet{d.lead_names, r.signal});
    out.lead_names = full.names;
    EcgRecord e = r;
    e.signal = std::move(full.signal);
    out.records.push_back(std::move(e));
  }
  if (d.empty()) out.lead_names = reconstruct_full(LeadSet{d.lead_names, Signal(d.leads(), 1)}).names;
  return out;
}

inline void cmd_generate(const GenerateArgs& a) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const Dataset real = load_dataset(resolve_data_dir(a.data));
  std::size_t last = 0;
  Dataset synth = generate_synthetic_copy(ck, real, a.seed, [&](std::size_t done, std::size_t total) {
    if (done * 10 / total != last) {
      last = done * 10 / total;
      std::cerr << "generated " << done << "/" << total << "\n";
    }
  });
  if (a.full_leads) synth = expand_leads(synth);
  prepare_out_dir(a.out, a.force, dataset_files());
  save_dataset(synth, a.out);
}

// ---------------------------------------------------------------------------------------------

struct EvalArgs {
  std::string mode;  // tstr | trts | augment | convergence
  fs::path real;
  std::optional<fs::path> synth;
  std::vector<fs::path> checkpoints;  // files or directories holding ckpt_*.json
  fs::path out;
  std::optional<fs::path> config;
  std::optional<std::string> label;
  std::optional<std::vector<std::uint64_t>> seeds;
  std::optional<std::uint64_t> generation_seed;
  std::optional<int> jobs;
  bool force = false;
};

inline int resolve_label(const Dataset& d, const std::string& label) {
  if (d.num_labels() == 0) throw std::invalid_argument("dataset has no labels");
  if (label.empty()) return 0;
  for (int i = 0; i < d.num_labels(); ++i)
    if (d.label_names[static_cast<std::size_t>(i)] == label) return i;
  throw std::invalid_argument("unknown label '" + label + "'");
}

inline std::vector<fs::path> expand_checkpoints(const std::vector<fs::path>& inputs) {
  std::vector<fs::path> out;
  static const std::regex manifest(R"(ckpt_\d+\.json)");
  for (const auto& p : inputs) {
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(p))
        if (std::regex_match(e.path().filename().string(), manifest)) found.push_back(e.path());
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      out.push_back(p);
    }
  }
  return out;
}

/// Writes report.csv and summary.txt into the output directory; returns the rows written.
inline std::vector<MetricsReport> cmd_eval(const EvalArgs& a) {
  RunConfig rc = resolve_run_config(a.config, std::nullopt);
  if (a.label) rc.eval.label = *a.label;
  if (a.seeds) rc.eval.seeds = *a.seeds;
  if (a.generation_seed) rc.eval.generation_seed = *a.generation_seed;
  if (a.jobs) rc.eval.jobs = *a.jobs;
  if (rc.eval.seeds.empty()) throw std::invalid_argument("eval: at least one seed is required");
  const EvalOptions opt{rc.classifier, rc.eval.jobs};

  const Dataset real = load_dataset(resolve_data_dir(a.real));
  const int label = resolve_label(real, rc.eval.label);
  std::vector<MetricsReport> rows;
  std::optional<AugmentationResult> aug;

  auto need_synth = [&]() {
    if (!a.synth) throw std::invalid_argument("eval " + a.mode + ": --synth is required");
    return load_dataset(resolve_data_dir(*a.synth));
  };
  if (a.mode == "tstr" || a.mode == "trts") {
    if (!a.checkpoints.empty()) throw std::invalid_argument("eval " + a.mode + ": --checkpoints is not used");
    const Dataset synth = need_synth();
    rows.resize(rc.eval.seeds.size());
    run_cells(rows.size(), opt.jobs, [&](std::size_t i) {
      rows[i] = a.mode == "tstr" ? tstr(synth, real, label, rc.eval.seeds[i], opt) : trts(real, synth, label, rc.eval.seeds[i], opt);
    });
  } else if (a.mode == "augment") {
    aug = augmentation_experiment(real, need_synth(), label, rc.eval.seeds, opt);
    rows = aug->cells;
  } else if (a.mode == "convergence") {
    if (a.synth) throw std::invalid_argument("eval convergence: --synth is not used (copies are generated per checkpoint)");
    std::vector<Checkpoint> ckpts;
    for (const auto& p : expand_checkpoints(a.checkpoints)) ckpts.push_back(load_checkpoint(p));
    if (ckpts.size() < 2) throw std::invalid_argument("eval convergence: needs at least 2 checkpoints");
    rows = convergence_sweep(ckpts, real, label, rc.eval.seeds, rc.eval.generation_seed, opt,
                             [](const std::string& msg) { std::cerr << msg << "\n"; });
  } else {
    throw std::invalid_argument("unknown eval mode '" + a.mode + "' (expected tstr|trts|augment|convergence)");
  }

  prepare_out_dir(a.out, a.force, std::regex(R"(report\.csv|summary\.txt)"));
  std::ofstream csv(a.out / "report.csv");
  if (aug) write_csv(csv, *aug);
  else write_csv(csv, rows);
  std::ofstream summary(a.out / "summary.txt");
  write_summary(summary, rows);
  write_summary(std::cout, rows);
  return rows;
}

}  // namespace sssd::cli
