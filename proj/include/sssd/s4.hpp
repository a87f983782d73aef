#pragma once

// Structured state-space layer with a dense kernel path.
//
// Discrete convention: x_{k+1} = Abar x_k + Bbar u_k,  y_k = C x_{k+1} + D u_k,
// so the output equals the causal convolution with K_l = C Abar^l Bbar plus D u.

#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "sssd/activation.hpp"
#include "sssd/rng.hpp"
#include "sssd/tensor.hpp"

namespace sssd::s4 {

template <class S>
struct StateSpaceParams {
  Matrix<S> A;
  Vector<S> B;
  Vector<S> C;
  S D = S(0);
  S log_dt = S(0);

  S dt() const { return std::exp(log_dt); }
};

template <class S>
struct ConvKernel {
  Vector<S> taps;
  int length() const { return static_cast<int>(taps.size()); }
};

template <class S>
struct HippoPair {
  Matrix<S> A;
  Vector<S> B;
};

template <class S>
struct Discretized {
  Matrix<S> Abar;
  Vector<S> Bbar;
};

/// HiPPO-LegS pair, 0-indexed:
///   A[n][k] = -sqrt(2n+1) sqrt(2k+1) for n > k,  -(n+1) for n == k,  0 above the diagonal
///   B[n]    = sqrt(2n+1)
template <class S>
HippoPair<S> hippo_legs_matrix(int n) {
  if (n < 1) throw std::invalid_argument("hippo_legs_matrix: state dimension must be >= 1");
  HippoPair<S> out{Matrix<S>::Zero(n, n), Vector<S>(n)};
  for (int i = 0; i < n; ++i) {
    out.B(i) = std::sqrt(S(2 * i + 1));
    for (int k = 0; k < i; ++k) out.A(i, k) = -std::sqrt(S(2 * i + 1)) * std::sqrt(S(2 * k + 1));
    out.A(i, i) = -S(i + 1);
  }
  return out;
}

/// Bilinear (Tustin) transform. Throws std::domain_error when I - dt/2 A is numerically singular.
template <class S>
Discretized<S> discretize_bilinear(const Matrix<S>& A, const Vector<S>& B, S dt) {
  const auto n = A.rows();
  if (A.cols() != n || B.size() != n) throw std::invalid_argument("discretize_bilinear: shape mismatch");
  const Matrix<S> I = Matrix<S>::Identity(n, n);
  const Matrix<S> lhs = I - (dt / S(2)) * A;
  Eigen::PartialPivLU<Matrix<S>> lu(lhs);
  const double rcond = static_cast<double>(lu.rcond());
  if (!(rcond > 1e3 * std::numeric_limits<S>::epsilon()))
    throw std::domain_error("ill-conditioned discretization (rcond " + std::to_string(rcond) + ")");
  Discretized<S> out;
  out.Abar = lu.solve(I + (dt / S(2)) * A);
  out.Bbar = lu.solve(dt * B);
  return out;
}

template <class S>
Discretized<S> discretize_bilinear(const StateSpaceParams<S>& p) {
  return discretize_bilinear<S>(p.A, p.B, p.dt());
}

/// K_l = C Abar^l Bbar by iterated matrix-vector products.
template <class S>
ConvKernel<S> compute_kernel(const Matrix<S>& Abar, const Vector<S>& Bbar, const Vector<S>& C, int length) {
  if (length < 1) throw std::invalid_argument("compute_kernel: length must be >= 1");
  if (Abar.rows() != Abar.cols() || Bbar.size() != Abar.rows() || C.size() != Abar.rows())
    throw std::invalid_argument("compute_kernel: shape mismatch");
  ConvKernel<S> k{Vector<S>(length)};
  Vector<S> v = Bbar;
  for (int l = 0; l < length; ++l) {
    k.taps(l) = C.dot(v);
    v = Abar * v;
  }
  return k;
}

/// Reference path: run the discrete recurrence from a zero state.
template <class S>
Vector<S> apply_recurrence(const Matrix<S>& Abar, const Vector<S>& Bbar, const Vector<S>& C, S D,
                           const Vector<S>& u) {
  Vector<S> x = Vector<S>::Zero(Abar.rows());
  Vector<S> y(u.size());
  for (Eigen::Index k = 0; k < u.size(); ++k) {
    x = Abar * x + Bbar * u(k);
    y(k) = C.dot(x) + D * u(k);
  }
  return y;
}

inline int fft_size_for(int length) {
  int n = 1;
  while (n < 2 * length) n <<= 1;
  return n;
}

/// Real FFT helper with zero padding to at least twice the signal length (no circular wrap).
template <class S>
class FftConvolver {
 public:
  using Complex = std::complex<S>;
  using Spectrum = std::vector<Complex>;

  explicit FftConvolver(int length) : length_(length), nfft_(fft_size_for(length)), buf_(nfft_) {
    fft_.SetFlag(Eigen::FFT<S>::HalfSpectrum);
  }

  int length() const { return length_; }
  int nfft() const { return nfft_; }

  template <class T>
  Spectrum spectrum(const T& x) {
    std::fill(buf_.begin(), buf_.end(), S(0));
    for (Eigen::Index i = 0; i < x.size(); ++i) buf_[static_cast<std::size_t>(i)] = x(i);
    Spectrum out;
    fft_.fwd(out, buf_);
    return out;
  }

  /// First `length()` samples of the inverse transform, written into out.
  template <class T>
  void inverse(const Spectrum& X, T&& out) {
    fft_.inv(buf_, X, nfft_);
    for (int i = 0; i < length_; ++i) out(i) = buf_[static_cast<std::size_t>(i)];
  }

 private:
  int length_;
  int nfft_;
  std::vector<S> buf_;
  Eigen::FFT<S> fft_;
};

enum class ConvolutionMethod { fft, direct };

/// y = causal_conv(K, u) + D u.
template <class S>
Vector<S> apply_convolution(const ConvKernel<S>& K, S D, const Vector<S>& u,
                            ConvolutionMethod method = ConvolutionMethod::fft) {
  if (u.size() != K.taps.size())
    throw std::invalid_argument("apply_convolution: input length " + std::to_string(u.size()) +
                                " != kernel length " + std::to_string(K.taps.size()));
  const auto L = u.size();
  Vector<S> y(L);
  if (method == ConvolutionMethod::direct) {
    for (Eigen::Index k = 0; k < L; ++k) {
      S acc = S(0);
      for (Eigen::Index j = 0; j <= k; ++j) acc += K.taps(k - j) * u(j);
      y(k) = acc;
    }
  } else {
    FftConvolver<S> conv(static_cast<int>(L));
    auto Kf = conv.spectrum(K.taps);
    auto Uf = conv.spectrum(u);
    for (std::size_t i = 0; i < Uf.size(); ++i) Uf[i] *= Kf[i];
    conv.inverse(Uf, y);
  }
  return y + D * u;
}

/// Trainable per-channel parameters of an S4 layer. A and B stay frozen at the HiPPO init.
template <class S>
struct S4Params {
  RowMatrix<S> C;    // channels x state
  Vector<S> D;       // channels
  Vector<S> log_dt;  // channels

  template <class F>
  void visit(F&& f, const std::string& prefix = "s4") {
    f(prefix + ".C", C);
    f(prefix + ".D", D);
    f(prefix + ".log_dt", log_dt);
  }
  template <class F>
  void visit(F&& f, const std::string& prefix = "s4") const {
    f(prefix + ".C", C);
    f(prefix + ".D", D);
    f(prefix + ".log_dt", log_dt);
  }
};

/// Per-sample values the backward pass needs.
template <class S>
struct S4Cache {
  Matrix<S> pre;  // pre-activation output, channels x length
  std::vector<typename FftConvolver<S>::Spectrum> input_spectra;
};

/// H independent single-input single-output systems sharing the HiPPO (A, B) and owning (C, D, dt).
/// prepare() materializes kernels; backward() accumulates into an internal buffer that
/// finish_backward() turns into parameter gradients, so a batch costs one kernel adjoint.
template <class S>
class S4Layer {
 public:
  S4Layer(int channels, int state_dim, int length, Activation activation)
      : channels_(channels),
        state_dim_(state_dim),
        length_(length),
        activation_(activation),
        hippo_(hippo_legs_matrix<S>(state_dim)),
        conv_(length),
        channels_state_(static_cast<std::size_t>(channels)) {}

  int channels() const { return channels_; }
  int state_dim() const { return state_dim_; }
  int length() const { return length_; }
  Activation activation() const { return activation_; }
  const HippoPair<S>& hippo() const { return hippo_; }

  /// C ~ N(0, 1/N), D ~ N(0, 1), log dt ~ U(log 1e-3, log 1e-1).
  S4Params<S> init_params(Rng& rng) const {
    S4Params<S> p = zero_params();
    rng.fill_normal(p.C, 1.0 / std::sqrt(static_cast<double>(state_dim_)));
    rng.fill_normal(p.D, 1.0);
    rng.fill_uniform(p.log_dt, std::log(1e-3), std::log(1e-1));
    return p;
  }

  S4Params<S> zero_params() const {
    return {RowMatrix<S>::Zero(channels_, state_dim_), Vector<S>::Zero(channels_), Vector<S>::Zero(channels_)};
  }

  void prepare(const S4Params<S>& p) {
    check_params(p);
    const Matrix<S> I = Matrix<S>::Identity(state_dim_, state_dim_);
    for (int h = 0; h < channels_; ++h) {
      auto& cs = channels_state_[static_cast<std::size_t>(h)];
      cs.dt = std::exp(p.log_dt(h));
      auto disc = discretize_bilinear<S>(hippo_.A, hippo_.B, cs.dt);
      cs.Abar = std::move(disc.Abar);
      cs.Bbar = std::move(disc.Bbar);
      cs.V.resize(state_dim_, length_);
      cs.V.col(0) = cs.Bbar;
      for (int l = 1; l < length_; ++l) cs.V.col(l).noalias() = cs.Abar * cs.V.col(l - 1);
      cs.K = (p.C.row(h) * cs.V).transpose();
      cs.Kf = conv_.spectrum(cs.K);
      cs.D = p.D(h);
      cs.C = p.C.row(h).transpose();
    }
    prepared_ = true;
  }

  const Vector<S>& kernel(int h) const { return channels_state_.at(static_cast<std::size_t>(h)).K; }

  /// u: channels x length. Returns activated output; fills cache when given.
  Matrix<S> forward(const Matrix<S>& u, S4Cache<S>* cache = nullptr) {
    require_prepared();
    if (u.rows() != channels_ || u.cols() != length_)
      throw std::invalid_argument("S4Layer::forward: expected " + std::to_string(channels_) + "x" +
                                  std::to_string(length_) + " input");
    Matrix<S> pre(channels_, length_);
    if (cache) cache->input_spectra.resize(static_cast<std::size_t>(channels_));
    for (int h = 0; h < channels_; ++h) {
      const auto& cs = channels_state_[static_cast<std::size_t>(h)];
      auto Uf = conv_.spectrum(u.row(h));
      auto Yf = Uf;
      for (std::size_t i = 0; i < Yf.size(); ++i) Yf[i] *= cs.Kf[i];
      conv_.inverse(Yf, pre.row(h));
      pre.row(h) += cs.D * u.row(h);
      if (cache) cache->input_spectra[static_cast<std::size_t>(h)] = std::move(Uf);
    }
    Matrix<S> out = apply_activation(activation_, pre);
    if (cache) cache->pre = std::move(pre);
    return out;
  }

  void begin_backward() {
    require_prepared();
    for (auto& cs : channels_state_) cs.grad_spectrum.assign(static_cast<std::size_t>(conv_.nfft() / 2 + 1), {});
  }

  /// Returns d loss / d u; accumulates dD into grad and kernel gradients internally.
  Matrix<S> backward(const Matrix<S>& u, const S4Cache<S>& cache, const Matrix<S>& dout, S4Params<S>& grad) {
    Matrix<S> dpre = dout.cwiseProduct(activation_grad(activation_, cache.pre));
    Matrix<S> du(channels_, length_);
    for (int h = 0; h < channels_; ++h) {
      auto& cs = channels_state_[static_cast<std::size_t>(h)];
      grad.D(h) += dpre.row(h).dot(u.row(h));
      auto DYf = conv_.spectrum(dpre.row(h));
      const auto& Uf = cache.input_spectra[static_cast<std::size_t>(h)];
      auto corr = DYf;
      for (std::size_t i = 0; i < DYf.size(); ++i) {
        corr[i] *= std::conj(cs.Kf[i]);
        cs.grad_spectrum[i] += std::conj(Uf[i]) * DYf[i];
      }
      conv_.inverse(corr, du.row(h));
      du.row(h) += cs.D * dpre.row(h);
    }
    return du;
  }

  /// Maps accumulated kernel gradients to dC and d log_dt.
  void finish_backward(S4Params<S>& grad) {
    const Matrix<S> I = Matrix<S>::Identity(state_dim_, state_dim_);
    const Matrix<S> halfA = hippo_.A / S(2);
    Vector<S> dK(length_);
    for (int h = 0; h < channels_; ++h) {
      auto& cs = channels_state_[static_cast<std::size_t>(h)];
      conv_.inverse(cs.grad_spectrum, dK);
      grad.C.row(h) += (cs.V * dK).transpose();

      // Adjoint of v_{l+1} = Abar v_l, with dL/dv_l = dK_l * C.
      Matrix<S> lambda(state_dim_, length_);
      const Vector<S>& Crow = cs.C;
      lambda.col(length_ - 1) = dK(length_ - 1) * Crow;
      const Matrix<S> AbarT = cs.Abar.transpose();
      for (int l = length_ - 2; l >= 0; --l) lambda.col(l).noalias() = dK(l) * Crow + AbarT * lambda.col(l + 1);
      Matrix<S> dAbar = Matrix<S>::Zero(state_dim_, state_dim_);
      if (length_ > 1)
        dAbar.noalias() = lambda.rightCols(length_ - 1) * cs.V.leftCols(length_ - 1).transpose();
      const Vector<S> dBbar = lambda.col(0);

      // d Abar / d dt = M^-1 (A/2)(I + Abar),  d Bbar / d dt = M^-1 (B + (A/2) Bbar),  M = I - dt A/2.
      Eigen::PartialPivLU<Matrix<S>> lu(I - cs.dt * halfA);
      const Matrix<S> dAbar_ddt = lu.solve(halfA * (I + cs.Abar));
      const Vector<S> dBbar_ddt = lu.solve(hippo_.B + halfA * cs.Bbar);
      const S ddt = dAbar.cwiseProduct(dAbar_ddt).sum() + dBbar.dot(dBbar_ddt);
      grad.log_dt(h) += ddt * cs.dt;
    }
  }

 private:
  struct ChannelState {
    S dt = S(0);
    S D = S(0);
    Vector<S> C;
    Matrix<S> Abar;
    Vector<S> Bbar;
    Matrix<S> V;  // state x length, columns Abar^l Bbar
    Vector<S> K;
    typename FftConvolver<S>::Spectrum Kf;
    typename FftConvolver<S>::Spectrum grad_spectrum;
  };

  void check_params(const S4Params<S>& p) const {
    if (p.C.rows() != channels_ || p.C.cols() != state_dim_ || p.D.size() != channels_ ||
        p.log_dt.size() != channels_)
      throw std::invalid_argument("S4Layer: parameter shapes do not match layer configuration");
  }

  void require_prepared() const {
    if (!prepared_) throw std::logic_error("S4Layer used before prepare()");
  }

  int channels_;
  int state_dim_;
  int length_;
  Activation activation_;
  HippoPair<S> hippo_;
  FftConvolver<S> conv_;
  std::vector<ChannelState> channels_state_;
  bool prepared_ = false;
};

}  // namespace sssd::s4
