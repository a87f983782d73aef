#include <cmath>

#include <gtest/gtest.h>

#include "sssd/diffusion.hpp"

using namespace sssd;

namespace {

Matrix<double> filled(double v, int rows = 2, int cols = 3) { return Matrix<double>::Constant(rows, cols, v); }

struct MeanVar {
  double mean;
  double var;
};

MeanVar moments(const std::vector<double>& xs) {
  double m = 0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  double v = 0;
  for (double x : xs) v += (x - m) * (x - m);
  return {m, v / static_cast<double>(xs.size() - 1)};
}

}  // namespace

TEST(Schedule, SingleStep) {
  auto s = make_linear_schedule(1, 0.1, 0.1);
  ASSERT_EQ(s.betas.size(), 1u);
  EXPECT_DOUBLE_EQ(s.betas[0], 0.1);
  EXPECT_DOUBLE_EQ(s.alpha_bars[0], 0.9);
}

TEST(Schedule, FourStepCumulativeProduct) {
  auto s = make_linear_schedule(4, 0.1, 0.4);
  const double betas[] = {0.1, 0.2, 0.3, 0.4};
  const double abars[] = {0.9, 0.72, 0.504, 0.3024};
  for (int i = 0; i < 4; ++i) {
    EXPECT_NEAR(s.betas[i], betas[i], 1e-15);
    EXPECT_NEAR(s.alpha_bars[i], abars[i], 1e-15);
  }
}

TEST(Schedule, RejectsInvalid) {
  EXPECT_THROW(make_linear_schedule(10, 0.0, 0.02), std::invalid_argument);
  EXPECT_THROW(make_linear_schedule(0, 0.1, 0.2), std::invalid_argument);
  EXPECT_THROW(make_linear_schedule(10, 0.1, 1.0), std::invalid_argument);
  EXPECT_THROW(make_linear_schedule(10, 0.3, 0.2), std::invalid_argument);
}

TEST(Schedule, AlphaBarMonotoneInUnitInterval) {
  auto s = make_linear_schedule(200, 1e-4, 0.02);
  EXPECT_EQ(s.alpha_bar(0), 1.0);
  for (int t = 1; t <= s.steps; ++t) {
    EXPECT_GT(s.alpha_bar(t), 0.0);
    EXPECT_LT(s.alpha_bar(t), s.alpha_bar(t - 1));
  }
  EXPECT_THROW(s.beta(0), std::out_of_range);
  EXPECT_THROW(s.beta(201), std::out_of_range);
}

TEST(ForwardSample, NoiselessAndIdentityLimit) {
  auto s = make_linear_schedule(10, 0.1, 0.3);
  Matrix<double> x0 = filled(2.0);
  auto xt = forward_sample<double>(x0, 3, filled(0.0), s);
  EXPECT_NEAR(xt(0, 0), std::sqrt(s.alpha_bar(3)) * 2.0, 1e-15);

  auto tiny = make_linear_schedule(1, 1e-12, 1e-12);
  auto near = forward_sample<double>(x0, 1, filled(0.7), tiny);
  EXPECT_NEAR(near(1, 2), 2.0, 1e-5);
}

TEST(ForwardSample, Errors) {
  auto s = make_linear_schedule(4, 0.1, 0.4);
  EXPECT_THROW(forward_sample<double>(filled(1.0), 1, filled(0.0, 3, 3), s), std::invalid_argument);
  EXPECT_THROW(forward_sample<double>(filled(1.0), 5, filled(0.0), s), std::out_of_range);
}

TEST(ForwardStep, Examples) {
  auto s = make_linear_schedule(1, 0.19, 0.19);
  auto x = forward_step<double>(filled(3.0), 1, filled(0.0), s);
  EXPECT_NEAR(x(0, 0), 2.7, 1e-15);
  auto z = forward_step<double>(filled(0.0), 1, filled(0.0), s);
  EXPECT_EQ(z.norm(), 0.0);
}

// Monte-Carlo: composing single-step kernels reproduces the closed form in distribution.
TEST(ForwardSample, MatchesComposedStepsInDistribution) {
  auto s = make_linear_schedule(10, 0.05, 0.3);
  const int t = 6;
  const int draws = 10000;
  const double x0 = 1.5;
  Rng rng(7);
  std::vector<double> closed, composed;
  Matrix<double> m0 = filled(x0, 1, 1);
  for (int i = 0; i < draws; ++i) {
    closed.push_back(forward_sample<double>(m0, t, filled(rng.normal(), 1, 1), s)(0, 0));
    Matrix<double> x = m0;
    for (int k = 1; k <= t; ++k) x = forward_step<double>(x, k, filled(rng.normal(), 1, 1), s);
    composed.push_back(x(0, 0));
  }
  auto a = moments(closed);
  auto b = moments(composed);
  const double var = 1.0 - s.alpha_bar(t);
  const double mean_se = std::sqrt(2.0 * var / draws);
  const double var_se = var * std::sqrt(2.0 / (draws - 1)) * std::sqrt(2.0);
  EXPECT_LT(std::abs(a.mean - b.mean), 3 * mean_se);
  EXPECT_LT(std::abs(a.var - b.var), 3 * var_se);
  EXPECT_LT(std::abs(a.mean - std::sqrt(s.alpha_bar(t)) * x0), 3 * std::sqrt(var / draws));
}

TEST(PosteriorVariance, Examples) {
  auto s2 = make_linear_schedule(2, 0.1, 0.2);
  EXPECT_EQ(posterior_variance(1, s2), 0.0);
  EXPECT_NEAR(posterior_variance(2, s2), (1 - 0.9) / (1 - 0.72) * 0.2, 1e-15);
  EXPECT_NEAR(posterior_variance(2, s2), 0.0714285714285714, 1e-12);

  auto s = make_linear_schedule(200, 1e-4, 0.02);
  EXPECT_EQ(posterior_variance(1, s), 0.0);
  for (int t = 1; t <= s.steps; ++t) EXPECT_LT(posterior_variance(t, s), s.beta(t));
  EXPECT_THROW(posterior_variance(0, s), std::out_of_range);
}

TEST(ReverseStep, InvertsSingleStepWithOracleNoise) {
  auto s = make_linear_schedule(1, 0.3, 0.3);
  Rng rng(3);
  Matrix<double> x0 = rng.normal_matrix<double>(2, 16);
  Matrix<double> eps = rng.normal_matrix<double>(2, 16);
  auto x1 = forward_sample<double>(x0, 1, eps, s);
  auto back = reverse_step<double>(x1, eps, 1, s, rng.normal_matrix<double>(2, 16));
  EXPECT_LT((back - x0).norm() / x0.norm(), 1e-6);
}

TEST(ReverseStep, ZeroNoiseTerms) {
  auto s = make_linear_schedule(5, 0.1, 0.3);
  auto x = reverse_step<double>(filled(1.2), filled(0.0), 3, s, filled(0.0));
  EXPECT_NEAR(x(0, 0), 1.2 / std::sqrt(1 - s.beta(3)), 1e-14);
  EXPECT_THROW(reverse_step<double>(filled(1.0), filled(0.0, 1, 1), 3, s, filled(0.0)), std::invalid_argument);
}

TEST(ReverseStep, InjectedVarianceIsPosteriorVariance) {
  auto s = make_linear_schedule(5, 0.1, 0.3);
  const int t = 4;
  const int draws = 10000;
  Rng rng(11);
  std::vector<double> xs;
  for (int i = 0; i < draws; ++i)
    xs.push_back(reverse_step<double>(filled(0.5, 1, 1), filled(0.2, 1, 1), t, s, filled(rng.normal(), 1, 1))(0, 0));
  const double var = posterior_variance(t, s);
  EXPECT_LT(std::abs(moments(xs).var - var), 3 * var * std::sqrt(2.0 / (draws - 1)));
}

namespace {

// Exact noise predictor for data x0 ~ N(mu, sd^2) iid.
struct GaussianOracle {
  using Scalar = double;
  double mu;
  double sd;
  const NoiseSchedule* sched;
  int channels() const { return 1; }
  int length() const { return 1; }
  Matrix<double> predict(const Matrix<double>& x, int t, int) const {
    const double ab = sched->alpha_bar(t);
    const double k = std::sqrt(1 - ab) / (ab * sd * sd + 1 - ab);
    return ((x.array() - std::sqrt(ab) * mu) * k).matrix();
  }
};

}  // namespace

TEST(Sample, DeterministicForSeed) {
  auto s = make_linear_schedule(50, 1e-4, 0.05);
  GaussianOracle m{0.3, 0.8, &s};
  EXPECT_EQ(sample(m, 0, s, 42), sample(m, 0, s, 42));
  EXPECT_NE(sample(m, 0, s, 42), sample(m, 0, s, 43));
}

TEST(Sample, GaussianOracleReproducesDataStatistics) {
  auto s = make_linear_schedule(1000, 1e-4, 0.02);
  const double mu = 0.5, sd = 0.5;
  GaussianOracle m{mu, sd, &s};
  std::vector<double> xs;
  const int draws = 200;
  for (int i = 0; i < draws; ++i) xs.push_back(sample(m, 0, s, 1000 + i)(0, 0));
  auto mv = moments(xs);
  EXPECT_LT(std::abs(mv.mean - mu), 3 * sd / std::sqrt(draws));
  EXPECT_LT(std::abs(std::sqrt(mv.var) - sd), 3 * sd / std::sqrt(2.0 * draws));
}
