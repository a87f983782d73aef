#include <cmath>

#include <gtest/gtest.h>

#include "sssd/s4.hpp"

using namespace sssd;
using namespace sssd::s4;

namespace {

double rel_err(const Vector<double>& a, const Vector<double>& b) {
  const double scale = std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff());
  return scale == 0.0 ? 0.0 : (a - b).cwiseAbs().maxCoeff() / scale;
}

// Second oracle for the kernel: Abar^l by binary exponentiation, independent of the iteration.
Vector<double> kernel_by_powers(const Matrix<double>& Abar, const Vector<double>& Bbar, const Vector<double>& C,
                                int L) {
  Vector<double> k(L);
  for (int l = 0; l < L; ++l) {
    Matrix<double> result = Matrix<double>::Identity(Abar.rows(), Abar.cols());
    Matrix<double> base = Abar;
    for (int e = l; e > 0; e >>= 1) {
      if (e & 1) result = result * base;
      base = base * base;
    }
    k(l) = C.dot(result * Bbar);
  }
  return k;
}

Matrix<double> scalar(double v) { return Matrix<double>::Constant(1, 1, v); }
Vector<double> vec1(double v) { return Vector<double>::Constant(1, v); }

}  // namespace

TEST(Hippo, SmallCases) {
  auto h1 = hippo_legs_matrix<double>(1);
  EXPECT_EQ(h1.A(0, 0), -1.0);
  EXPECT_EQ(h1.B(0), 1.0);

  auto h2 = hippo_legs_matrix<double>(2);
  EXPECT_EQ(h2.A(0, 0), -1.0);
  EXPECT_EQ(h2.A(0, 1), 0.0);
  EXPECT_NEAR(h2.A(1, 0), -std::sqrt(3.0), 1e-15);
  EXPECT_EQ(h2.A(1, 1), -2.0);
  EXPECT_NEAR(h2.B(1), std::sqrt(3.0), 1e-15);

  auto h8 = hippo_legs_matrix<double>(8);
  for (int n = 0; n < 8; ++n)
    for (int k = n + 1; k < 8; ++k) EXPECT_EQ(h8.A(n, k), 0.0);
  EXPECT_THROW(hippo_legs_matrix<double>(0), std::invalid_argument);
}

TEST(Discretize, ZeroStepAndScalar) {
  auto h = hippo_legs_matrix<double>(4);
  auto d0 = discretize_bilinear<double>(h.A, h.B, 0.0);
  EXPECT_TRUE(d0.Abar.isApprox(Matrix<double>::Identity(4, 4)));
  EXPECT_EQ(d0.Bbar.norm(), 0.0);

  auto d = discretize_bilinear<double>(scalar(-1.0), vec1(1.0), 1.0);
  EXPECT_NEAR(d.Abar(0, 0), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(d.Bbar(0), 2.0 / 3.0, 1e-15);
}

TEST(Discretize, SingularSolveReported) {
  // I - dt/2 A = 0 when A = 2/dt.
  EXPECT_THROW(discretize_bilinear<double>(scalar(2.0), vec1(1.0), 1.0), std::domain_error);
}

TEST(Discretize, HippoSystemsAreStable) {
  for (int n : {1, 2, 4, 8, 16}) {
    auto h = hippo_legs_matrix<double>(n);
    for (double dt : {1e-3, 1e-2, 0.1, 0.5, 1.0}) {
      auto d = discretize_bilinear<double>(h.A, h.B, dt);
      Eigen::EigenSolver<Matrix<double>> es(d.Abar);
      EXPECT_LT(es.eigenvalues().cwiseAbs().maxCoeff(), 1.0) << "N=" << n << " dt=" << dt;
    }
  }
}

TEST(Kernel, ScalarGeometric) {
  auto d = discretize_bilinear<double>(scalar(-1.0), vec1(1.0), 1.0);
  auto k = compute_kernel<double>(d.Abar, d.Bbar, vec1(1.0), 3);
  EXPECT_NEAR(k.taps(0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(k.taps(1), 2.0 / 9.0, 1e-15);
  EXPECT_NEAR(k.taps(2), 2.0 / 27.0, 1e-15);
}

TEST(Kernel, ZeroReadoutAndLengthCheck) {
  auto h = hippo_legs_matrix<double>(4);
  auto d = discretize_bilinear<double>(h.A, h.B, 0.1);
  auto k = compute_kernel<double>(d.Abar, d.Bbar, Vector<double>::Zero(4), 10);
  EXPECT_EQ(k.taps.norm(), 0.0);
  EXPECT_THROW(compute_kernel<double>(d.Abar, d.Bbar, Vector<double>::Zero(4), 0), std::invalid_argument);
}

TEST(Kernel, IterationMatchesRepeatedSquaring) {
  Rng rng(5);
  auto h = hippo_legs_matrix<double>(8);
  auto d = discretize_bilinear<double>(h.A, h.B, 0.05);
  Vector<double> C(8);
  rng.fill_normal(C, 1.0);
  auto k = compute_kernel<double>(d.Abar, d.Bbar, C, 64);
  EXPECT_LT(rel_err(k.taps, kernel_by_powers(d.Abar, d.Bbar, C, 64)), 1e-10);
}

TEST(Recurrence, TrivialCases) {
  auto h = hippo_legs_matrix<double>(3);
  auto d = discretize_bilinear<double>(h.A, h.B, 0.1);
  Vector<double> C = Vector<double>::Ones(3);
  EXPECT_EQ(apply_recurrence<double>(d.Abar, d.Bbar, C, 0.5, Vector<double>::Zero(12)).norm(), 0.0);
  Vector<double> u = Vector<double>::LinSpaced(12, -1.0, 2.0);
  EXPECT_EQ(apply_recurrence<double>(d.Abar, d.Bbar, Vector<double>::Zero(3), 1.0, u), u);
}

TEST(Convolution, IdentityKernel) {
  ConvKernel<double> delta{Vector<double>::Zero(16)};
  delta.taps(0) = 1.0;
  Vector<double> u = Vector<double>::LinSpaced(16, 0.0, 3.0);
  EXPECT_LT(rel_err(apply_convolution<double>(delta, 0.0, u), u), 1e-14);
  EXPECT_THROW(apply_convolution<double>(delta, 0.0, Vector<double>::Zero(8)), std::invalid_argument);
}

TEST(Convolution, FftMatchesDirect) {
  Rng rng(9);
  ConvKernel<double> k{Vector<double>(128)};
  rng.fill_normal(k.taps, 1.0);
  Vector<double> u(128);
  rng.fill_normal(u, 1.0);
  auto fft = apply_convolution<double>(k, 0.3, u, ConvolutionMethod::fft);
  auto direct = apply_convolution<double>(k, 0.3, u, ConvolutionMethod::direct);
  EXPECT_LT(rel_err(fft, direct), 1e-8);
}

TEST(Convolution, MatchesRecurrenceOnRandomSystems) {
  Rng rng(21);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = rng.uniform_int(1, 8);
    const int L = rng.uniform_int(1, 128);
    auto h = hippo_legs_matrix<double>(n);
    const double dt = std::exp(rng.uniform(std::log(1e-3), 0.0));
    auto d = discretize_bilinear<double>(h.A, h.B, dt);
    Vector<double> C(n), u(L);
    rng.fill_normal(C, 1.0);
    rng.fill_normal(u, 1.0);
    const double D = rng.normal();
    auto k = compute_kernel<double>(d.Abar, d.Bbar, C, L);
    worst = std::max(worst, rel_err(apply_convolution<double>(k, D, u), apply_recurrence<double>(d.Abar, d.Bbar, C, D, u)));
  }
  EXPECT_LE(worst, 1e-6);
}

TEST(Convolution, Linear) {
  Rng rng(4);
  ConvKernel<double> k{Vector<double>(50)};
  rng.fill_normal(k.taps, 1.0);
  Vector<double> u1(50), u2(50);
  rng.fill_normal(u1, 1.0);
  rng.fill_normal(u2, 1.0);
  const double a = 0.7, b = -1.9;
  auto lhs = apply_convolution<double>(k, 0.4, a * u1 + b * u2);
  Vector<double> rhs = a * apply_convolution<double>(k, 0.4, u1) + b * apply_convolution<double>(k, 0.4, u2);
  EXPECT_LT(rel_err(lhs, rhs), 1e-8);
}

namespace {

double layer_loss(S4Layer<double>& layer, const S4Params<double>& p, const Matrix<double>& u,
                  const Matrix<double>& w) {
  layer.prepare(p);
  return layer.forward(u).cwiseProduct(w).sum();
}

}  // namespace

TEST(S4Layer, SingleChannelIsConvolutionPlusActivation) {
  Rng rng(1);
  S4Layer<double> layer(1, 4, 16, Activation::gelu);
  auto p = layer.init_params(rng);
  layer.prepare(p);
  Matrix<double> u = rng.normal_matrix<double>(1, 16);
  auto out = layer.forward(u);
  EXPECT_EQ(out.rows(), 1);
  EXPECT_EQ(out.cols(), 16);
  auto d = discretize_bilinear<double>(layer.hippo().A, layer.hippo().B, std::exp(p.log_dt(0)));
  auto k = compute_kernel<double>(d.Abar, d.Bbar, p.C.row(0).transpose(), 16);
  Vector<double> ref = apply_activation(Activation::gelu, apply_convolution<double>(k, p.D(0), u.row(0).transpose()));
  EXPECT_LT(rel_err(out.row(0).transpose(), ref), 1e-12);
  EXPECT_THROW(layer.forward(rng.normal_matrix<double>(2, 16)), std::invalid_argument);
}

TEST(S4Layer, GradientsMatchFiniteDifferences) {
  Rng rng(2);
  S4Layer<double> layer(3, 4, 16, Activation::gelu);
  auto p = layer.init_params(rng);
  p.log_dt.setConstant(std::log(0.2));
  Matrix<double> u = rng.normal_matrix<double>(3, 16);
  Matrix<double> w = rng.normal_matrix<double>(3, 16);

  layer.prepare(p);
  S4Cache<double> cache;
  layer.forward(u, &cache);
  auto grad = layer.zero_params();
  layer.begin_backward();
  Matrix<double> du = layer.backward(u, cache, w, grad);
  layer.finish_backward(grad);

  auto fd = [&](auto& target, Eigen::Index i) {
    const double h = 1e-5;
    const double saved = target(i);
    target(i) = saved + h;
    const double up = layer_loss(layer, p, u, w);
    target(i) = saved - h;
    const double down = layer_loss(layer, p, u, w);
    target(i) = saved;
    return (up - down) / (2 * h);
  };
  auto check = [](double analytic, double numeric) {
    EXPECT_LT(std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8}), 1e-4)
        << analytic << " vs " << numeric;
  };
  for (Eigen::Index i = 0; i < p.C.size(); ++i) {
    auto flat = Eigen::Map<Vector<double>>(p.C.data(), p.C.size());
    check(grad.C.data()[i], fd(flat, i));
  }
  for (Eigen::Index i = 0; i < 3; ++i) {
    check(grad.D(i), fd(p.D, i));
    check(grad.log_dt(i), fd(p.log_dt, i));
  }
  for (Eigen::Index i = 0; i < u.size(); i += 5) {
    auto flat = Eigen::Map<Vector<double>>(u.data(), u.size());
    check(du.data()[i], fd(flat, i));
  }
}
