#pragma once

// Small 1-D convolutional binary classifier used by the downstream protocols:
//   [conv k, ReLU, avgpool 2] x blocks -> global average pool -> linear -> sigmoid.
// Trained with binary cross-entropy and Adam; the decision threshold maximizes G-mean
// on the validation fold.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "sssd/data.hpp"
#include "sssd/metrics.hpp"
#include "sssd/rng.hpp"
#include "sssd/tensor.hpp"
#include "sssd/training.hpp"

namespace sssd {

struct ClassifierConfig {
  int width = 16;
  int kernel = 7;
  int blocks = 3;
  int epochs = 30;
  int batch_size = 16;
  double learning_rate = 1e-3;

  void validate() const {
    if (width < 1 || blocks < 1 || epochs < 1 || batch_size < 1)
      throw std::invalid_argument("classifier config: width, blocks, epochs and batch_size must be >= 1");
    if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("classifier config: kernel must be odd");
    if (!(learning_rate > 0)) throw std::invalid_argument("classifier config: learning_rate must be > 0");
  }
  bool operator==(const ClassifierConfig&) const = default;
};

template <class S>
struct ClassifierParams {
  std::vector<RowMatrix<S>> conv_w;  // out x (in * kernel), column index = in * kernel + tap
  std::vector<Vector<S>> conv_b;
  RowMatrix<S> head_w;  // 1 x width
  Vector<S> head_b;

  static ClassifierParams zeros(int in_channels, const ClassifierConfig& c) {
    ClassifierParams p;
    int in = in_channels;
    for (int b = 0; b < c.blocks; ++b) {
      p.conv_w.push_back(RowMatrix<S>::Zero(c.width, in * c.kernel));
      p.conv_b.push_back(Vector<S>::Zero(c.width));
      in = c.width;
    }
    p.head_w = RowMatrix<S>::Zero(1, c.width);
    p.head_b = Vector<S>::Zero(1);
    return p;
  }

  template <class F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <class F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }

 private:
  template <class Self, class F>
  static void visit_impl(Self& self, F& f) {
    for (std::size_t b = 0; b < self.conv_w.size(); ++b) {
      f("conv" + std::to_string(b) + ".weight", self.conv_w[b]);
      f("conv" + std::to_string(b) + ".bias", self.conv_b[b]);
    }
    f("head.weight", self.head_w);
    f("head.bias", self.head_b);
  }
};

template <class S>
class ConvClassifier {
 public:
  struct Cache {
    std::vector<Matrix<S>> patches;  // im2col of each block input
    std::vector<Matrix<S>> pre;      // conv output before ReLU
    Vector<S> pooled;
    S logit = S(0);
  };

  ConvClassifier(int in_channels, int length, ClassifierConfig config)
      : in_channels_(in_channels), length_(length), config_(config),
        params_(ClassifierParams<S>::zeros(in_channels, config)) {
    config_.validate();
    int l = length;
    for (int b = 0; b < config_.blocks; ++b) {
      if (l < 2) throw std::invalid_argument("classifier: signal too short for " + std::to_string(config_.blocks) + " pooling blocks");
      l /= 2;
    }
  }

  /// He-normal conv weights, zero biases.
  void init(std::uint64_t seed) {
    Rng rng(seed);
    for (auto& w : params_.conv_w) rng.fill_normal(w, std::sqrt(2.0 / static_cast<double>(w.cols())));
    rng.fill_normal(params_.head_w, 1.0 / std::sqrt(static_cast<double>(config_.width)));
    for (auto& b : params_.conv_b) b.setZero();
    params_.head_b.setZero();
  }

  const ClassifierParams<S>& params() const { return params_; }
  ClassifierParams<S>& mutable_params() { return params_; }
  const ClassifierConfig& config() const { return config_; }
  double threshold() const { return threshold_; }
  void set_threshold(double t) { threshold_ = t; }

  /// Returns the logit.
  S forward(const Matrix<S>& x, Cache* cache = nullptr) const {
    if (x.rows() != in_channels_ || x.cols() != length_)
      throw std::invalid_argument("classifier: expected " + std::to_string(in_channels_) + "x" + std::to_string(length_) +
                                  " input");
    if (cache) {
      cache->patches.clear();
      cache->pre.clear();
    }
    Matrix<S> h = x;
    for (int b = 0; b < config_.blocks; ++b) {
      Matrix<S> P = im2col(h);
      Matrix<S> pre = params_.conv_w[static_cast<std::size_t>(b)] * P;
      pre.colwise() += params_.conv_b[static_cast<std::size_t>(b)];
      h = avgpool(pre.cwiseMax(S(0)));
      if (cache) {
        cache->patches.push_back(std::move(P));
        cache->pre.push_back(std::move(pre));
      }
    }
    Vector<S> pooled = h.rowwise().mean();
    const S logit = (params_.head_w * pooled)(0) + params_.head_b(0);
    if (cache) {
      cache->pooled = std::move(pooled);
      cache->logit = logit;
    }
    return logit;
  }

  double score(const Matrix<S>& x) const { return 1.0 / (1.0 + std::exp(-static_cast<double>(forward(x)))); }

  /// Accumulates d loss / d params given d loss / d logit.
  void backward(const Cache& c, S dlogit, ClassifierParams<S>& grad) const {
    grad.head_b(0) += dlogit;
    grad.head_w += dlogit * c.pooled.transpose();
    const Eigen::Index last_len = c.pre.back().cols() / 2;
    Matrix<S> dh = (dlogit * params_.head_w.transpose()).replicate(1, last_len) / static_cast<S>(last_len);
    for (int b = config_.blocks - 1; b >= 0; --b) {
      const auto bi = static_cast<std::size_t>(b);
      const Matrix<S>& pre = c.pre[bi];
      Matrix<S> dpre = Matrix<S>::Zero(pre.rows(), pre.cols());
      for (Eigen::Index j = 0; j < dh.cols(); ++j) {
        dpre.col(2 * j) = dh.col(j) / S(2);
        dpre.col(2 * j + 1) = dh.col(j) / S(2);
      }
      dpre = dpre.cwiseProduct((pre.array() > S(0)).template cast<S>().matrix());
      grad.conv_b[bi] += dpre.rowwise().sum();
      grad.conv_w[bi].noalias() += dpre * c.patches[bi].transpose();
      if (b > 0) dh = col2im(params_.conv_w[bi].transpose() * dpre, static_cast<int>(pre.cols()));
    }
  }

 private:
  Matrix<S> im2col(const Matrix<S>& x) const {
    const int k = config_.kernel, half = k / 2;
    const auto L = x.cols();
    Matrix<S> P = Matrix<S>::Zero(x.rows() * k, L);
    for (Eigen::Index c = 0; c < x.rows(); ++c)
      for (int tap = 0; tap < k; ++tap) {
        const Eigen::Index shift = tap - half;
        const Eigen::Index lo = std::max<Eigen::Index>(0, -shift), hi = std::min<Eigen::Index>(L, L - shift);
        if (hi > lo) P.row(c * k + tap).segment(lo, hi - lo) = x.row(c).segment(lo + shift, hi - lo);
      }
    return P;
  }

  Matrix<S> col2im(const Matrix<S>& dP, int L) const {
    const int k = config_.kernel, half = k / 2;
    const auto channels = dP.rows() / k;
    Matrix<S> dx = Matrix<S>::Zero(channels, L);
    for (Eigen::Index c = 0; c < channels; ++c)
      for (int tap = 0; tap < k; ++tap) {
        const Eigen::Index shift = tap - half;
        const Eigen::Index lo = std::max<Eigen::Index>(0, -shift), hi = std::min<Eigen::Index>(L, L - shift);
        if (hi > lo) dx.row(c).segment(lo + shift, hi - lo) += dP.row(c * k + tap).segment(lo, hi - lo);
      }
    return dx;
  }

  // Odd trailing samples are dropped.
  static Matrix<S> avgpool(const Matrix<S>& x) {
    Matrix<S> out(x.rows(), x.cols() / 2);
    for (Eigen::Index j = 0; j < out.cols(); ++j) out.col(j) = (x.col(2 * j) + x.col(2 * j + 1)) / S(2);
    return out;
  }

  int in_channels_;
  int length_;
  ClassifierConfig config_;
  ClassifierParams<S> params_;
  double threshold_ = 0.5;
};

/// Binary targets for one label. PAD counts as negative.
inline std::vector<int> binary_targets(const Dataset& d, int label_index) {
  std::vector<int> y;
  y.reserve(d.size());
  for (const auto& r : d.records) y.push_back(r.positive(label_index) ? 1 : 0);
  return y;
}

inline std::vector<double> predict_scores(const ConvClassifier<float>& clf, const Dataset& d) {
  std::vector<double> s;
  s.reserve(d.size());
  for (const auto& r : d.records) s.push_back(clf.score(r.signal));
  return s;
}

/// Threshold maximizing G-mean over midpoints between distinct scores; ties go to the
/// candidate closest to 0.5. The result is kept strictly inside (0, 1).
inline double select_threshold(const std::vector<double>& scores, const std::vector<int>& labels) {
  const bool has_pos = std::count(labels.begin(), labels.end(), 1) > 0;
  const bool has_neg = std::count(labels.begin(), labels.end(), 0) > 0;
  if (!has_pos || !has_neg) return 0.5;
  std::vector<double> sorted = scores;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<double> candidates{0.5};
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i) candidates.push_back(0.5 * (sorted[i] + sorted[i + 1]));
  candidates.push_back(sorted.front());
  candidates.push_back(std::nextafter(sorted.back(), 2.0));
  double best = candidates.front(), best_g = -1;
  for (double t : candidates) {
    const double g = gmean(confusion(scores, labels, t));
    if (g > best_g + 1e-12 || (std::abs(g - best_g) <= 1e-12 && std::abs(t - 0.5) < std::abs(best - 0.5))) {
      best_g = g;
      best = t;
    }
  }
  return std::clamp(best, 1e-6, 1.0 - 1e-6);
}

/// Fits on `train`, picks the threshold on `val`. Deterministic for a given seed.
inline ConvClassifier<float> train_classifier(const Dataset& train, const Dataset& val, int label_index,
                                              const ClassifierConfig& config, std::uint64_t seed) {
  config.validate();
  if (train.empty()) throw std::invalid_argument("classifier: empty training set");
  if (label_index < 0 || label_index >= train.num_labels()) throw std::invalid_argument("classifier: label index out of range");
  const auto y = binary_targets(train, label_index);
  const long pos = std::count(y.begin(), y.end(), 1);
  if (pos == 0 || pos == static_cast<long>(y.size()))
    throw std::invalid_argument("classifier: training data for label '" + train.label_names[static_cast<std::size_t>(label_index)] +
                                "' contains a single class");

  Rng rng(seed);
  ConvClassifier<float> clf(train.leads(), train.length(), config);
  clf.init(rng.split());
  auto theta = flatten<float>(clf.params());
  Adam<float> opt(theta.size(), config.learning_rate);
  auto grad = zeros_like(clf.params());
  typename ConvClassifier<float>::Cache cache;

  std::vector<int> order(train.size());
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
      std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(rng.uniform_int(0, i))]);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      set_zero(grad);
      for (std::size_t k = start; k < end; ++k) {
        const auto idx = static_cast<std::size_t>(order[k]);
        const float logit = clf.forward(train.records[idx].signal, &cache);
        const float p = 1.0f / (1.0f + std::exp(-logit));
        clf.backward(cache, (p - static_cast<float>(y[idx])) / static_cast<float>(end - start), grad);
      }
      opt.step(theta, flatten<float>(grad));
      unflatten<float>(clf.mutable_params(), theta);
    }
  }
  clf.set_threshold(val.empty() ? 0.5 : select_threshold(predict_scores(clf, val), binary_targets(val, label_index)));
  return clf;
}

}  // namespace sssd
