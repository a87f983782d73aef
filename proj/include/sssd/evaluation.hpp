#pragma once

// Downstream protocols. Every classifier is trained on folds 1-8 of its training source,
// thresholded on fold 9 of the same source and scored on fold 10 of the test source:
//   TRTR: real -> real,  TSTR: synthetic -> real,  TRTS: real -> synthetic.

#include <algorithm>
#include <array>
#include <atomic>
#include <exception>
#include <cstdio>
#include <functional>
#include <iostream>
#include <mutex>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "sssd/classifier.hpp"
#include "sssd/data.hpp"
#include "sssd/metrics.hpp"
#include "sssd/synthetic.hpp"

namespace sssd {

struct EvalOptions {
  ClassifierConfig classifier;
  int jobs = 1;  // worker threads for independent classifier cells
};

/// Runs fn(0..n-1) on up to `jobs` threads. Results must be written by index.
inline void run_cells(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, jobs));
  if (workers == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, n); ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

/// Train on `train_src` (folds 1-8, threshold on 9), test on fold 10 of `test_src`.
inline MetricsReport cross_evaluate(const std::string& experiment, const Dataset& train_src, const Dataset& test_src,
                                    int label_index, std::uint64_t seed, const EvalOptions& opt) {
  if (train_src.num_labels() != test_src.num_labels() || train_src.leads() != test_src.leads())
    throw std::invalid_argument(experiment + ": training and test datasets have different label or lead spaces");
  if (label_index < 0 || label_index >= train_src.num_labels())
    throw std::invalid_argument(experiment + ": label index " + std::to_string(label_index) + " out of range");
  const auto train = split_folds(train_src);
  const auto test = split_folds(test_src);
  if (test.test.empty()) throw std::invalid_argument(experiment + ": test source has no fold-10 records");
  const auto clf = train_classifier(train.train, train.val, label_index, opt.classifier, seed);
  auto report = make_report(predict_scores(clf, test.test), binary_targets(test.test, label_index), clf.threshold());
  report.experiment = experiment;
  report.dataset_ids = train_src.name + ";" + test_src.name;
  report.label = train_src.label_names[static_cast<std::size_t>(label_index)];
  report.seed = seed;
  return report;
}

inline MetricsReport trtr(const Dataset& real, int label_index, std::uint64_t seed, const EvalOptions& opt = {}) {
  return cross_evaluate("TRTR", real, real, label_index, seed, opt);
}

inline MetricsReport tstr(const Dataset& synth, const Dataset& real, int label_index, std::uint64_t seed,
                          const EvalOptions& opt = {}) {
  return cross_evaluate("TSTR", synth, real, label_index, seed, opt);
}

inline MetricsReport trts(const Dataset& real, const Dataset& synth, int label_index, std::uint64_t seed,
                          const EvalOptions& opt = {}) {
  return cross_evaluate("TRTS", real, synth, label_index, seed, opt);
}

/// For every checkpoint: generate a synthetic copy, then TSTR and TRTS for every seed.
/// Rows are ordered by samples_seen, then experiment, then seed.
inline std::vector<MetricsReport> convergence_sweep(std::vector<Checkpoint> ckpts, const Dataset& real, int label_index,
                                                    const std::vector<std::uint64_t>& seeds,
                                                    std::uint64_t generation_seed, const EvalOptions& opt = {},
                                                    const std::function<void(const std::string&)>& log = {}) {
  if (ckpts.size() < 2) throw std::invalid_argument("convergence sweep needs at least 2 checkpoints");
  std::sort(ckpts.begin(), ckpts.end(), [](const auto& a, const auto& b) { return a.samples_seen < b.samples_seen; });
  std::vector<Dataset> synths;
  for (const auto& ck : ckpts) {
    if (log) log("generating synthetic copy at " + std::to_string(ck.samples_seen) + " samples");
    synths.push_back(generate_synthetic_copy(ck, real, generation_seed));
  }
  const std::size_t per_ckpt = 2 * seeds.size();
  std::vector<MetricsReport> rows(ckpts.size() * per_ckpt);
  run_cells(rows.size(), opt.jobs, [&](std::size_t i) {
    const std::size_t c = i / per_ckpt, k = i % per_ckpt;
    const auto seed = seeds[k % seeds.size()];
    auto r = k < seeds.size() ? tstr(synths[c], real, label_index, seed, opt) : trts(real, synths[c], label_index, seed, opt);
    r.samples_seen = ckpts[c].samples_seen;
    rows[i] = std::move(r);
  });
  return rows;
}

struct AugmentationResult {
  std::vector<MetricsReport> cells;  // mode-major, one per seed
  std::vector<MetricsReport> means;  // one per mode; metric fields hold seed means
  std::vector<std::array<double, 6>> mean_values;  // sens, spec, prec, gmean, f1, auc
  std::vector<std::size_t> train_sizes;             // training-fold size per mode
};

/// Baseline / double / synth_aug on real data, evaluated on the real test fold.
inline AugmentationResult augmentation_experiment(const Dataset& real, const Dataset& synth, int label_index,
                                                  const std::vector<std::uint64_t>& seeds, const EvalOptions& opt = {}) {
  if (seeds.empty()) throw std::invalid_argument("augmentation experiment needs at least one seed");
  const AugmentMode modes[] = {AugmentMode::baseline, AugmentMode::double_positives, AugmentMode::synth_aug};
  std::vector<Dataset> sets;
  AugmentationResult out;
  for (auto m : modes) {
    sets.push_back(augment_with_positives(real, synth, m, label_index));
    sets.back().name = real.name + "+" + to_string(m);
    out.train_sizes.push_back(split_folds(sets.back()).train.size());
  }
  out.cells.resize(3 * seeds.size());
  run_cells(out.cells.size(), opt.jobs, [&](std::size_t i) {
    const std::size_t m = i / seeds.size();
    auto r = cross_evaluate("augment_" + to_string(modes[m]), sets[m], real, label_index, seeds[i % seeds.size()], opt);
    out.cells[i] = std::move(r);
  });
  for (std::size_t m = 0; m < 3; ++m) {
    std::array<double, 6> sum{};
    int auc_n = 0;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      const auto& r = out.cells[m * seeds.size() + s];
      sum[0] += r.sens();
      sum[1] += r.spec();
      sum[2] += r.prec();
      sum[3] += r.g();
      sum[4] += r.f();
      if (r.auc) {
        sum[5] += *r.auc;
        ++auc_n;
      }
    }
    const double n = static_cast<double>(seeds.size());
    std::array<double, 6> mean{sum[0] / n, sum[1] / n, sum[2] / n, sum[3] / n, sum[4] / n,
                               auc_n ? sum[5] / auc_n : -1.0};
    out.mean_values.push_back(mean);
    MetricsReport summary = out.cells[m * seeds.size()];
    summary.experiment += "_mean";
    out.means.push_back(summary);
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// Report output

inline const char* kReportHeader = "experiment,dataset_ids,label,seed,samples_seen,sens,spec,prec,gmean,f1,auc";

namespace detail {
inline std::string fixed6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}
}  // namespace detail

inline std::string csv_row(const MetricsReport& r) {
  return r.experiment + "," + r.dataset_ids + "," + r.label + "," + std::to_string(r.seed) + "," +
         (r.samples_seen >= 0 ? std::to_string(r.samples_seen) : std::string()) + "," + detail::fixed6(r.sens()) +
         "," + detail::fixed6(r.spec()) + "," + detail::fixed6(r.prec()) + "," + detail::fixed6(r.g()) + "," +
         detail::fixed6(r.f()) + "," + (r.auc ? detail::fixed6(*r.auc) : std::string());
}

inline void write_csv(std::ostream& out, const std::vector<MetricsReport>& rows) {
  out << kReportHeader << "\n";
  for (const auto& r : rows) out << csv_row(r) << "\n";
}

/// Mean rows use "mean" in the seed column.
inline void write_csv(std::ostream& out, const AugmentationResult& a) {
  write_csv(out, a.cells);
  for (std::size_t m = 0; m < a.means.size(); ++m) {
    const auto& r = a.means[m];
    const auto& v = a.mean_values[m];
    out << r.experiment << "," << r.dataset_ids << "," << r.label << ",mean,";
    for (int k = 0; k < 5; ++k) out << "," << detail::fixed6(v[static_cast<std::size_t>(k)]);
    out << "," << (v[5] >= 0 ? detail::fixed6(v[5]) : std::string()) << "\n";
  }
}

inline void write_summary(std::ostream& out, const std::vector<MetricsReport>& rows) {
  for (const auto& r : rows) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-18s %-8s seed %-4llu %s sens %.3f spec %.3f%s gmean %.3f f1 %.3f auc %s\n",
                  r.experiment.c_str(), r.label.c_str(), r.seed,
                  r.samples_seen >= 0 ? ("@" + std::to_string(r.samples_seen)).c_str() : "",
                  r.sens(), r.spec(), r.specificity_defined ? "" : " (undefined: no negatives)", r.g(), r.f(),
                  r.auc ? detail::fixed6(*r.auc).c_str() : "n/a");
    out << buf;
  }
}

}  // namespace sssd
