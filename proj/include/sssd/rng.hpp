#pragma once

#include <cstdint>
#include <random>

#include "sssd/tensor.hpp"

namespace sssd {

/// Seeded generator shared by every stochastic step of a run.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform_(engine_); }

  /// Uniform integer in [lo, hi].
  int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }

  template <class S>
  Matrix<S> normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev = 1.0) {
    Matrix<S> m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(stddev * normal());
    return m;
  }

  template <class T>
  void fill_normal(T& t, double stddev) {
    using S = typename T::Scalar;
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = static_cast<S>(stddev * normal());
  }

  template <class T>
  void fill_uniform(T& t, double lo, double hi) {
    using S = typename T::Scalar;
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = static_cast<S>(uniform(lo, hi));
  }

  /// Derive an independent stream (e.g. one per record or per experiment cell).
  std::uint64_t split() { return engine_(); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace sssd
