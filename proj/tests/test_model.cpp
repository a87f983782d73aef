#include <cmath>

#include <gtest/gtest.h>

#include "sssd/model.hpp"
#include "sssd/training.hpp"

using namespace sssd;

namespace {

ModelConfig tiny(Mechanism mech = Mechanism::nle, int labels = 2) {
  ModelConfig c;
  c.channels = 2;
  c.length = 32;
  c.residual_channels = 4;
  c.num_blocks = 2;
  c.state_dim = 4;
  c.embed_dim = 8;
  c.step_embed_dim = 8;
  c.num_labels = labels;
  c.mechanism = mech;
  return c;
}

}  // namespace

TEST(StepEmbedding, SinusoidalLayout) {
  auto e = diffusion_step_embedding<double>(7, 8);
  ASSERT_EQ(e.size(), 8);
  for (int k = 0; k < 4; ++k) {
    const double f = std::pow(10.0, -4.0 * k / 3.0);
    EXPECT_NEAR(e(k), std::sin(7 * f), 1e-12);
    EXPECT_NEAR(e(k + 4), std::cos(7 * f), 1e-12);
  }
  EXPECT_FALSE(diffusion_step_embedding<double>(3, 8).isApprox(diffusion_step_embedding<double>(4, 8)));
}

TEST(Config, Validation) {
  auto c = tiny();
  c.step_embed_dim = 7;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = tiny(Mechanism::legacy);
  c.pad_row = true;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_EQ(model_config_from_json(to_json(ModelConfig::full_scale())), ModelConfig::full_scale());
  EXPECT_THROW(model_config_from_json(Json{{"chanels", 2}}), std::invalid_argument);
}

TEST(Denoiser, OutputShapeAndDeterminism) {
  auto model = Denoiser<float>::initialized(tiny(), 11);
  Rng rng(1);
  Matrix<float> x = rng.normal_matrix<float>(2, 32);
  auto a = model.predict(x, 5, LabelVector{0, 1});
  auto b = model.predict(x, 5, LabelVector{0, 1});
  EXPECT_EQ(a.rows(), 2);
  EXPECT_EQ(a.cols(), 32);
  EXPECT_TRUE(a.array().isFinite().all());
  EXPECT_EQ(a, b);
  auto other = Denoiser<float>::initialized(tiny(), 11);
  EXPECT_EQ(other.predict(x, 5, LabelVector{0, 1}), a);
}

TEST(Denoiser, RejectsWrongShapes) {
  auto model = Denoiser<float>::initialized(tiny(), 1);
  EXPECT_THROW(model.predict(Matrix<float>::Zero(3, 32), 1, LabelVector{0, 0}), std::invalid_argument);
  EXPECT_THROW(model.predict(Matrix<float>::Zero(2, 31), 1, LabelVector{0, 0}), std::invalid_argument);
  EXPECT_THROW(model.predict(Matrix<float>::Zero(2, 32), 1, LabelVector{0}), std::invalid_argument);
  auto cfg = tiny();
  auto p = DenoiserParams<float>::zeros(tiny(Mechanism::nle, 3));
  EXPECT_THROW(Denoiser<float>(cfg, p), std::invalid_argument);
}

TEST(Denoiser, OutputDependsOnStepAndLabels) {
  for (auto mech : {Mechanism::legacy, Mechanism::nle}) {
    auto model = Denoiser<double>::initialized(tiny(mech), 3);
    Rng rng(2);
    Matrix<double> x = rng.normal_matrix<double>(2, 32);
    auto base = model.predict(x, 10, LabelVector{0, 0});
    EXPECT_GT((base - model.predict(x, 11, LabelVector{0, 0})).norm(), 1e-8);
    EXPECT_GT((base - model.predict(x, 10, LabelVector{1, 0})).norm(), 1e-8);
    EXPECT_GT((base - model.predict(x, 10, LabelVector{0, 1})).norm(), 1e-8);
  }
}

TEST(Denoiser, InitialOutputScaleIsModerate) {
  ModelConfig cfg = ModelConfig::desk();
  auto model = Denoiser<float>::initialized(cfg, 5);
  Rng rng(3);
  double sum2 = 0;
  int n = 0;
  for (int t : {1, 50, 200}) {
    auto out = model.predict(rng.normal_matrix<float>(cfg.channels, cfg.length), t, LabelVector{1});
    sum2 += out.squaredNorm();
    n += static_cast<int>(out.size());
  }
  const double sd = std::sqrt(sum2 / n);
  EXPECT_GT(sd, 0.1);
  EXPECT_LT(sd, 10.0);
}

TEST(Denoiser, ParamIndexNamesAreUnique) {
  auto idx = tensor_index(DenoiserParams<float>::zeros(tiny()));
  std::set<std::string> names;
  std::size_t offset = 0;
  for (const auto& t : idx) {
    EXPECT_TRUE(names.insert(t.name).second) << t.name;
    EXPECT_EQ(t.offset, offset);
    offset += t.size();
  }
  EXPECT_EQ(offset, param_count(DenoiserParams<float>::zeros(tiny())));
}

TEST(Denoiser, GradientMatchesFiniteDifferences) {
  for (auto mech : {Mechanism::legacy, Mechanism::nle}) {
    auto cfg = tiny(mech);
    auto params = init_params<double>(cfg, 21);
    ProbeConfig probe;
    probe.per_tensor = 4;
    probe.seed = 9;
    auto r = grad_check(params, cfg, probe);
    EXPECT_GE(r.coordinates, 50u);
    EXPECT_LT(r.max_rel_err, 1e-4) << to_string(mech) << " worst coordinate " << r.worst_coordinate;
  }
}

TEST(Denoiser, GradientCheckDetectsPerturbation) {
  auto cfg = tiny();
  auto params = init_params<double>(cfg, 4);
  ProbeConfig probe;
  probe.seed = 2;
  std::vector<std::size_t> coords{0};
  auto r = grad_check(params, cfg, probe, &coords, [](std::vector<double>& g) { g[0] = g[0] * 1.01 + 1e-3; });
  EXPECT_GT(r.max_rel_err, 1e-3);
}

TEST(Denoiser, WithPadRowAcceptsPad) {
  auto cfg = tiny();
  cfg.pad_row = true;
  auto model = Denoiser<float>::initialized(cfg, 1);
  auto out = model.predict(Matrix<float>::Zero(2, 32), 3, LabelVector{LabelVector::kPad, 1});
  EXPECT_TRUE(out.array().isFinite().all());
  auto no_pad = Denoiser<float>::initialized(tiny(), 1);
  EXPECT_THROW(no_pad.predict(Matrix<float>::Zero(2, 32), 3, LabelVector{LabelVector::kPad, 1}), std::invalid_argument);
}
