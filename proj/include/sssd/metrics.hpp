#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace sssd {

struct ConfusionCounts {
  long tp = 0, fp = 0, tn = 0, fn = 0;

  long total() const { return tp + fp + tn + fn; }
  bool operator==(const ConfusionCounts&) const = default;
};

namespace detail {
inline double ratio(long num, long den) { return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den); }
}  // namespace detail

// Degenerate denominators give 0 rather than NaN.
inline double sensitivity(const ConfusionCounts& c) { return detail::ratio(c.tp, c.tp + c.fn); }
inline double specificity(const ConfusionCounts& c) { return detail::ratio(c.tn, c.tn + c.fp); }
inline double precision(const ConfusionCounts& c) { return detail::ratio(c.tp, c.tp + c.fp); }
inline double gmean(const ConfusionCounts& c) { return std::sqrt(sensitivity(c) * specificity(c)); }
inline double f1(const ConfusionCounts& c) { return detail::ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn); }

inline ConfusionCounts confusion(const std::vector<double>& scores, const std::vector<int>& labels, double threshold) {
  if (scores.size() != labels.size()) throw std::invalid_argument("confusion: scores and labels differ in length");
  ConfusionCounts c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    if (labels[i] == 1) (pred ? c.tp : c.fn)++;
    else (pred ? c.fp : c.tn)++;
  }
  return c;
}

/// Mann-Whitney U / (n_pos * n_neg), ties counted half. Absent when a class is missing.
inline std::optional<double> roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("roc_auc: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Average ranks over tie groups.
  double rank_sum_pos = 0.0;
  long n_pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) {
        rank_sum_pos += avg_rank;
        ++n_pos;
      }
    i = j;
  }
  const long n_neg = static_cast<long>(scores.size()) - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

struct MetricsReport {
  std::string experiment;
  std::string dataset_ids;
  std::string label;
  unsigned long long seed = 0;
  long samples_seen = -1;  // -1 when not tied to a checkpoint
  ConfusionCounts counts;
  double threshold = 0.5;
  std::optional<double> auc;
  bool specificity_defined = true;  // false when the test set has no negatives

  double sens() const { return sensitivity(counts); }
  double spec() const { return specificity(counts); }
  double prec() const { return precision(counts); }
  double g() const { return gmean(counts); }
  double f() const { return f1(counts); }
};

inline MetricsReport make_report(const std::vector<double>& scores, const std::vector<int>& labels, double threshold) {
  MetricsReport r;
  r.counts = confusion(scores, labels, threshold);
  r.threshold = threshold;
  r.auc = roc_auc(scores, labels);
  r.specificity_defined = r.counts.tn + r.counts.fp > 0;
  return r;
}

}  // namespace sssd
