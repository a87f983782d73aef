#pragma once

// Label conditioning. Two mechanisms share one interface:
//   legacy: c = y^T E, E is (N x d). The all-zero label vector maps to the zero vector.
//   nle:    rows r_i = E[i, y_i, :] from an (N, 2, d) table (or a padding row), folded
//           to one d-vector by a trainable 1x1 convolution: c = sum_i w_i r_i + b.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sssd/rng.hpp"
#include "sssd/tensor.hpp"

namespace sssd {

/// Per-label state: absent, present, or padding (no information).
class LabelVector {
 public:
  static constexpr std::int8_t kPad = -1;

  LabelVector() = default;
  explicit LabelVector(std::vector<std::int8_t> values) : values_(std::move(values)) { validate(); }
  LabelVector(std::initializer_list<int> values) {
    for (int v : values) values_.push_back(static_cast<std::int8_t>(v));
    validate();
  }
  static LabelVector zeros(int n) { return LabelVector(std::vector<std::int8_t>(static_cast<std::size_t>(n), 0)); }

  int size() const { return static_cast<int>(values_.size()); }
  std::int8_t operator[](int i) const { return values_.at(static_cast<std::size_t>(i)); }
  LabelVector with(int i, std::int8_t v) const {
    auto copy = values_;
    copy.at(static_cast<std::size_t>(i)) = v;
    return LabelVector(std::move(copy));
  }
  bool has_pad() const {
    for (auto v : values_)
      if (v == kPad) return true;
    return false;
  }
  const std::vector<std::int8_t>& values() const { return values_; }

  bool operator==(const LabelVector&) const = default;

 private:
  void validate() const {
    for (auto v : values_)
      if (v != 0 && v != 1 && v != kPad) throw std::invalid_argument("label entries must be 0, 1 or PAD");
  }

  std::vector<std::int8_t> values_;
};

enum class Mechanism { legacy, nle };

inline std::string to_string(Mechanism m) { return m == Mechanism::legacy ? "legacy" : "nle"; }

inline Mechanism parse_mechanism(const std::string& s) {
  if (s == "legacy") return Mechanism::legacy;
  if (s == "nle") return Mechanism::nle;
  throw std::invalid_argument("unknown conditioning mechanism '" + s + "' (expected legacy|nle)");
}

template <class S>
struct LegacyEmbeddingMatrix {
  RowMatrix<S> E;  // labels x dim
};

/// (N, 2, d) table stored as 2N x d rows; row 2i + v holds E[i, v, :].
template <class S>
struct LabelEmbeddingTable {
  int labels = 0;
  int dim = 0;
  RowMatrix<S> rows;
  std::optional<Vector<S>> pad_row;

  auto row(int label, int value) const { return rows.row(2 * label + value); }
  auto row(int label, int value) { return rows.row(2 * label + value); }
};

template <class S>
struct FoldConv {
  Vector<S> w;                            // one weight per label channel
  Vector<S> bias = Vector<S>::Zero(1);
};

template <class S>
Vector<S> embed_legacy(const LegacyEmbeddingMatrix<S>& m, const LabelVector& y) {
  if (y.size() != m.E.rows())
    throw std::invalid_argument("embed_legacy: expected " + std::to_string(m.E.rows()) + " labels, got " +
                                std::to_string(y.size()));
  if (y.has_pad()) throw std::invalid_argument("embed_legacy: the matrix-product mechanism has no padding index");
  Vector<S> c = Vector<S>::Zero(m.E.cols());
  for (int i = 0; i < y.size(); ++i)
    if (y[i] == 1) c += m.E.row(i).transpose();
  return c;
}

namespace detail {

template <class S>
void check_nle_inputs(const LabelEmbeddingTable<S>& table, const FoldConv<S>& fold, const LabelVector& y) {
  if (y.size() != table.labels)
    throw std::invalid_argument("embed_nle: expected " + std::to_string(table.labels) + " labels, got " +
                                std::to_string(y.size()));
  if (fold.w.size() != table.labels) throw std::invalid_argument("embed_nle: fold width != label count");
  if (y.has_pad() && !table.pad_row) throw std::invalid_argument("embed_nle: PAD label without a padding row");
}

template <class S>
auto gathered_row(const LabelEmbeddingTable<S>& table, const LabelVector& y, int i) {
  return y[i] == LabelVector::kPad ? Vector<S>(*table.pad_row) : Vector<S>(table.row(i, y[i]).transpose());
}

}  // namespace detail

template <class S>
Vector<S> embed_nle(const LabelEmbeddingTable<S>& table, const FoldConv<S>& fold, const LabelVector& y) {
  detail::check_nle_inputs(table, fold, y);
  Vector<S> c = Vector<S>::Constant(table.dim, fold.bias(0));
  for (int i = 0; i < y.size(); ++i) c += fold.w(i) * detail::gathered_row(table, y, i);
  return c;
}

/// Smallest embedding change caused by flipping one label 0 -> 1 with every other label at 0.
template <class S>
double neutral_distinguishability(const LabelEmbeddingTable<S>& table, const FoldConv<S>& fold) {
  double best = std::numeric_limits<double>::infinity();
  const auto base = LabelVector::zeros(table.labels);
  for (int i = 0; i < table.labels; ++i) {
    auto diff = embed_nle(table, fold, base) - embed_nle(table, fold, base.with(i, 1));
    best = std::min(best, static_cast<double>(diff.norm()));
  }
  return best;
}

/// Legacy analogue of the above: ||embed(0) - embed(e_i)|| = ||e_i||.
template <class S>
double neutral_distinguishability(const LegacyEmbeddingMatrix<S>& m) {
  double best = std::numeric_limits<double>::infinity();
  const auto base = LabelVector::zeros(static_cast<int>(m.E.rows()));
  for (int i = 0; i < m.E.rows(); ++i)
    best = std::min(best, static_cast<double>((embed_legacy(m, base) - embed_legacy(m, base.with(i, 1))).norm()));
  return best;
}

/// Trainable conditioning block holding whichever mechanism the model was configured with.
template <class S>
struct ConditioningParams {
  Mechanism mechanism = Mechanism::nle;
  LegacyEmbeddingMatrix<S> legacy;
  LabelEmbeddingTable<S> table;
  FoldConv<S> fold;

  static ConditioningParams zeros(Mechanism mech, int labels, int dim, bool with_pad_row) {
    ConditioningParams p;
    p.mechanism = mech;
    if (mech == Mechanism::legacy) {
      if (with_pad_row) throw std::invalid_argument("legacy conditioning cannot carry a padding row");
      p.legacy.E = RowMatrix<S>::Zero(labels, dim);
    } else {
      p.table.labels = labels;
      p.table.dim = dim;
      p.table.rows = RowMatrix<S>::Zero(2 * labels, dim);
      if (with_pad_row) p.table.pad_row = Vector<S>::Zero(dim);
      p.fold.w = Vector<S>::Zero(labels);
      p.fold.bias = Vector<S>::Zero(1);
    }
    return p;
  }

  /// Embeddings ~ N(0, 1/d); fold weights 1/N with zero bias.
  static ConditioningParams init(Mechanism mech, int labels, int dim, bool with_pad_row, Rng& rng) {
    auto p = zeros(mech, labels, dim, with_pad_row);
    const double sd = 1.0 / std::sqrt(static_cast<double>(dim));
    if (mech == Mechanism::legacy) {
      rng.fill_normal(p.legacy.E, sd);
    } else {
      rng.fill_normal(p.table.rows, sd);
      if (p.table.pad_row) rng.fill_normal(*p.table.pad_row, sd);
      p.fold.w.setConstant(S(1) / S(labels));
    }
    return p;
  }

  int labels() const { return mechanism == Mechanism::legacy ? static_cast<int>(legacy.E.rows()) : table.labels; }
  int dim() const { return mechanism == Mechanism::legacy ? static_cast<int>(legacy.E.cols()) : table.dim; }

  Vector<S> embed(const LabelVector& y) const {
    return mechanism == Mechanism::legacy ? embed_legacy(legacy, y) : embed_nle(table, fold, y);
  }

  /// Accumulate d loss / d params into grad given d loss / d c.
  void backward(const LabelVector& y, const Vector<S>& dc, ConditioningParams& grad) const {
    if (mechanism == Mechanism::legacy) {
      for (int i = 0; i < y.size(); ++i)
        if (y[i] == 1) grad.legacy.E.row(i) += dc.transpose();
      return;
    }
    grad.fold.bias(0) += dc.sum();
    for (int i = 0; i < y.size(); ++i) {
      const Vector<S> r = detail::gathered_row(table, y, i);
      grad.fold.w(i) += r.dot(dc);
      if (y[i] == LabelVector::kPad)
        *grad.table.pad_row += fold.w(i) * dc;
      else
        grad.table.row(i, y[i]) += fold.w(i) * dc.transpose();
    }
  }

  template <class F>
  void visit(F&& f, const std::string& prefix = "cond") {
    visit_impl(*this, f, prefix);
  }
  template <class F>
  void visit(F&& f, const std::string& prefix = "cond") const {
    visit_impl(*this, f, prefix);
  }

 private:
  template <class Self, class F>
  static void visit_impl(Self& self, F& f, const std::string& prefix) {
    if (self.mechanism == Mechanism::legacy) {
      f(prefix + ".legacy_embedding", self.legacy.E);
    } else {
      f(prefix + ".label_table", self.table.rows);
      if (self.table.pad_row) f(prefix + ".pad_row", *self.table.pad_row);
      f(prefix + ".fold.weight", self.fold.w);
      f(prefix + ".fold.bias", self.fold.bias);
    }
  }
};

}  // namespace sssd
