#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace sssd {

template <class S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using RowMatrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using Vector = Eigen::Matrix<S, Eigen::Dynamic, 1>;

/// Multichannel signal, channels x length.
using Signal = Matrix<float>;

/// Entry of a named-tensor index: where a tensor lives inside a flat payload.
struct TensorInfo {
  std::string name;
  std::size_t offset = 0;
  std::vector<std::size_t> shape;

  std::size_t size() const {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
  bool operator==(const TensorInfo&) const = default;
};

namespace detail {

template <class T>
std::vector<std::size_t> shape_of(const T& t) {
  if constexpr (T::IsVectorAtCompileTime)
    return {static_cast<std::size_t>(t.size())};
  else
    return {static_cast<std::size_t>(t.rows()), static_cast<std::size_t>(t.cols())};
}

}  // namespace detail

// The helpers below work on any parameter struct exposing
//   template <class F> void visit(F&& f)        (and a const overload)
// that calls f(name, tensor) for every trainable tensor in a fixed order.
// Matrices are row-major so the flat order is the conventional one.

template <class P>
std::size_t param_count(const P& p) {
  std::size_t n = 0;
  p.visit([&](const std::string&, const auto& t) { n += static_cast<std::size_t>(t.size()); });
  return n;
}

template <class P>
std::vector<TensorInfo> tensor_index(const P& p) {
  std::vector<TensorInfo> index;
  std::size_t offset = 0;
  p.visit([&](const std::string& name, const auto& t) {
    index.push_back({name, offset, detail::shape_of(t)});
    offset += static_cast<std::size_t>(t.size());
  });
  return index;
}

template <class Out, class P>
std::vector<Out> flatten(const P& p) {
  std::vector<Out> flat;
  flat.reserve(param_count(p));
  p.visit([&](const std::string&, const auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) flat.push_back(static_cast<Out>(t.data()[i]));
  });
  return flat;
}

template <class In, class P>
void unflatten(P& p, std::span<const In> flat) {
  if (flat.size() != param_count(p))
    throw std::invalid_argument("unflatten: payload has " + std::to_string(flat.size()) +
                                " values, parameters need " + std::to_string(param_count(p)));
  std::size_t k = 0;
  p.visit([&](const std::string&, auto& t) {
    using S = typename std::decay_t<decltype(t)>::Scalar;
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = static_cast<S>(flat[k++]);
  });
}

template <class P>
void set_zero(P& p) {
  p.visit([](const std::string&, auto& t) { t.setZero(); });
}

template <class P>
P zeros_like(const P& p) {
  P z = p;
  set_zero(z);
  return z;
}

template <class P>
bool all_finite(const P& p) {
  bool ok = true;
  p.visit([&](const std::string&, const auto& t) { ok = ok && t.allFinite(); });
  return ok;
}

}  // namespace sssd
