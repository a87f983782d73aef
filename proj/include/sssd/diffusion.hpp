#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "sssd/rng.hpp"
#include "sssd/tensor.hpp"

namespace sssd {

/// Variance schedule of the forward process. Steps are 1-based; alpha_bar(0) == 1.
/// Kept in double: the cumulative product underflows quickly in single precision.
struct NoiseSchedule {
  int steps = 0;
  double beta_start = 0.0;
  double beta_end = 0.0;
  std::vector<double> betas;
  std::vector<double> alpha_bars;

  double beta(int t) const {
    check_step(t);
    return betas[static_cast<std::size_t>(t - 1)];
  }

  double alpha_bar(int t) const {
    if (t == 0) return 1.0;
    check_step(t);
    return alpha_bars[static_cast<std::size_t>(t - 1)];
  }

  void check_step(int t) const {
    if (t < 1 || t > steps)
      throw std::out_of_range("diffusion step " + std::to_string(t) + " outside [1, " +
                              std::to_string(steps) + "]");
  }

  bool operator==(const NoiseSchedule&) const = default;
};

inline NoiseSchedule make_linear_schedule(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw std::invalid_argument("schedule needs at least one step");
  if (!(beta_start > 0.0) || !(beta_end < 1.0) || beta_start > beta_end)
    throw std::invalid_argument("schedule requires 0 < beta_start <= beta_end < 1");

  NoiseSchedule s;
  s.steps = steps;
  s.beta_start = beta_start;
  s.beta_end = beta_end;
  s.betas.resize(static_cast<std::size_t>(steps));
  s.alpha_bars.resize(static_cast<std::size_t>(steps));
  double prod = 1.0;
  for (int i = 0; i < steps; ++i) {
    double beta = steps == 1 ? beta_start
                             : beta_start + (beta_end - beta_start) * i / static_cast<double>(steps - 1);
    s.betas[static_cast<std::size_t>(i)] = beta;
    prod *= 1.0 - beta;
    s.alpha_bars[static_cast<std::size_t>(i)] = prod;
  }
  return s;
}

namespace detail {

template <class A, class B>
void require_same_shape(const A& a, const B& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(what) + ": shape mismatch (" + std::to_string(a.rows()) +
                                "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                                "x" + std::to_string(b.cols()) + ")");
}

}  // namespace detail

/// Draw from q(x_t | x_0) given the noise: sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.
template <class S>
Matrix<S> forward_sample(const Matrix<S>& x0, int t, const Matrix<S>& eps, const NoiseSchedule& sched) {
  detail::require_same_shape(x0, eps, "forward_sample");
  const double abar = sched.alpha_bar(t);
  return static_cast<S>(std::sqrt(abar)) * x0 + static_cast<S>(std::sqrt(1.0 - abar)) * eps;
}

/// One transition of q(x_t | x_{t-1}).
template <class S>
Matrix<S> forward_step(const Matrix<S>& x_prev, int t, const Matrix<S>& eps, const NoiseSchedule& sched) {
  detail::require_same_shape(x_prev, eps, "forward_step");
  const double beta = sched.beta(t);
  return static_cast<S>(std::sqrt(1.0 - beta)) * x_prev + static_cast<S>(std::sqrt(beta)) * eps;
}

inline double posterior_variance(int t, const NoiseSchedule& sched) {
  const double beta = sched.beta(t);
  return (1.0 - sched.alpha_bar(t - 1)) / (1.0 - sched.alpha_bar(t)) * beta;
}

/// Ancestral step x_t -> x_{t-1} from a noise prediction. z is ignored at t == 1.
template <class S>
Matrix<S> reverse_step(const Matrix<S>& x_t, const Matrix<S>& eps_hat, int t, const NoiseSchedule& sched,
                       const Matrix<S>& z) {
  detail::require_same_shape(x_t, eps_hat, "reverse_step");
  const double beta = sched.beta(t);
  const double abar = sched.alpha_bar(t);
  const S inv_sqrt_alpha = static_cast<S>(1.0 / std::sqrt(1.0 - beta));
  const S eps_coef = static_cast<S>(beta / std::sqrt(1.0 - abar));
  Matrix<S> mean = inv_sqrt_alpha * (x_t - eps_coef * eps_hat);
  if (t == 1) return mean;
  detail::require_same_shape(x_t, z, "reverse_step");
  return mean + static_cast<S>(std::sqrt(posterior_variance(t, sched))) * z;
}

/// Anything that predicts the injected noise for a (channels x length) input.
template <class M, class Label>
concept NoisePredictor = requires(M& m, const Matrix<typename M::Scalar>& x, int t, const Label& y) {
  { m.predict(x, t, y) } -> std::convertible_to<Matrix<typename M::Scalar>>;
  { m.channels() } -> std::convertible_to<int>;
  { m.length() } -> std::convertible_to<int>;
};

/// Reverse process from x_T ~ N(0, I). Noise is drawn in a fixed order so a seed fixes the output.
template <class M, class Label>
  requires NoisePredictor<M, Label>
Matrix<typename M::Scalar> sample(M& model, const Label& labels, const NoiseSchedule& sched, std::uint64_t seed) {
  using S = typename M::Scalar;
  Rng rng(seed);
  Matrix<S> x = rng.normal_matrix<S>(model.channels(), model.length());
  Matrix<S> z(model.channels(), model.length());
  for (int t = sched.steps; t >= 1; --t) {
    Matrix<S> eps_hat = model.predict(x, t, labels);
    if (t > 1) z = rng.normal_matrix<S>(model.channels(), model.length());
    x = reverse_step<S>(x, eps_hat, t, sched, z);
  }
  return x;
}

}  // namespace sssd
