#pragma once

// Conditional denoiser: input projection, residual S4 blocks that receive the diffusion-step
// embedding and the label condition as per-channel biases, skip aggregation, output head.
//
// Block layout (R = residual channels):
//   h = W_conv x + b            (2R x L)
//   z = S4(h)                   (channelwise SSM + activation)
//   u = z + [W_step s + b_step + W_cond c]   broadcast over time
//   g = tanh(u[:R]) * sigmoid(u[R:])
//   x' = (x + W_res g + b_res) / sqrt(2),  skip = W_skip g + b_skip

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "sssd/activation.hpp"
#include "sssd/conditioning.hpp"
#include "sssd/rng.hpp"
#include "sssd/s4.hpp"
#include "sssd/tensor.hpp"

namespace sssd {

struct ModelConfig {
  int channels = 2;
  int length = 256;
  int residual_channels = 32;
  int num_blocks = 4;
  int state_dim = 16;
  int embed_dim = 128;       // label condition width
  int step_embed_dim = 128;  // sinusoidal encoding and step MLP width
  int num_labels = 1;
  Mechanism mechanism = Mechanism::nle;
  bool pad_row = false;
  Activation s4_activation = Activation::gelu;

  void validate() const {
    auto positive = [](int v, const char* name) {
      if (v < 1) throw std::invalid_argument(std::string("model config: ") + name + " must be >= 1");
    };
    positive(channels, "channels");
    positive(length, "length");
    positive(residual_channels, "residual_channels");
    positive(num_blocks, "num_blocks");
    positive(state_dim, "state_dim");
    positive(embed_dim, "embed_dim");
    positive(step_embed_dim, "step_embed_dim");
    positive(num_labels, "num_labels");
    if (step_embed_dim % 2 != 0) throw std::invalid_argument("model config: step_embed_dim must be even");
    if (pad_row && mechanism == Mechanism::legacy)
      throw std::invalid_argument("model config: legacy conditioning has no padding row");
  }

  /// Toy-data scale: two leads, 256 samples.
  static ModelConfig desk() { return {}; }

  /// Eight independent leads at 100 Hz for 10 s.
  static ModelConfig full_scale() {
    ModelConfig c;
    c.channels = 8;
    c.length = 1000;
    c.residual_channels = 64;
    c.num_blocks = 8;
    c.state_dim = 64;
    c.num_labels = 71;
    return c;
  }

  bool operator==(const ModelConfig&) const = default;
};

/// Raw sinusoidal encoding of a diffusion step: [sin(t f_k), cos(t f_k)], f_k = 10^(-4k/(dim/2-1)).
template <class S>
Vector<S> diffusion_step_embedding(int t, int dim) {
  if (dim < 2 || dim % 2 != 0) throw std::invalid_argument("diffusion_step_embedding: dim must be even and >= 2");
  const int half = dim / 2;
  Vector<S> e(dim);
  for (int k = 0; k < half; ++k) {
    const double freq = half == 1 ? 1.0 : std::pow(10.0, -4.0 * k / (half - 1));
    e(k) = static_cast<S>(std::sin(t * freq));
    e(half + k) = static_cast<S>(std::cos(t * freq));
  }
  return e;
}

template <class S>
struct BlockParams {
  RowMatrix<S> conv_w;  // 2R x R
  Vector<S> conv_b;
  s4::S4Params<S> s4;
  RowMatrix<S> step_w;  // 2R x step_dim
  Vector<S> step_b;
  RowMatrix<S> cond_w;  // 2R x embed_dim
  RowMatrix<S> res_w;   // R x R
  Vector<S> res_b;
  RowMatrix<S> skip_w;  // R x R
  Vector<S> skip_b;

  template <class Self, class F>
  static void visit_impl(Self& self, F& f, const std::string& p) {
    f(p + ".conv.weight", self.conv_w);
    f(p + ".conv.bias", self.conv_b);
    self.s4.visit(f, p + ".s4");
    f(p + ".step.weight", self.step_w);
    f(p + ".step.bias", self.step_b);
    f(p + ".cond.weight", self.cond_w);
    f(p + ".res.weight", self.res_w);
    f(p + ".res.bias", self.res_b);
    f(p + ".skip.weight", self.skip_w);
    f(p + ".skip.bias", self.skip_b);
  }
};

template <class S>
struct DenoiserParams {
  RowMatrix<S> in_w;  // R x C
  Vector<S> in_b;
  RowMatrix<S> step_fc1_w;
  Vector<S> step_fc1_b;
  RowMatrix<S> step_fc2_w;
  Vector<S> step_fc2_b;
  ConditioningParams<S> cond;
  std::vector<BlockParams<S>> blocks;
  RowMatrix<S> out1_w;  // R x R
  Vector<S> out1_b;
  RowMatrix<S> out2_w;  // C x R
  Vector<S> out2_b;

  static DenoiserParams zeros(const ModelConfig& c) {
    c.validate();
    const int R = c.residual_channels, R2 = 2 * R, Ds = c.step_embed_dim;
    DenoiserParams p;
    p.in_w = RowMatrix<S>::Zero(R, c.channels);
    p.in_b = Vector<S>::Zero(R);
    p.step_fc1_w = RowMatrix<S>::Zero(Ds, Ds);
    p.step_fc1_b = Vector<S>::Zero(Ds);
    p.step_fc2_w = RowMatrix<S>::Zero(Ds, Ds);
    p.step_fc2_b = Vector<S>::Zero(Ds);
    p.cond = ConditioningParams<S>::zeros(c.mechanism, c.num_labels, c.embed_dim, c.pad_row);
    for (int b = 0; b < c.num_blocks; ++b) {
      BlockParams<S> bp;
      bp.conv_w = RowMatrix<S>::Zero(R2, R);
      bp.conv_b = Vector<S>::Zero(R2);
      bp.s4 = {RowMatrix<S>::Zero(R2, c.state_dim), Vector<S>::Zero(R2), Vector<S>::Zero(R2)};
      bp.step_w = RowMatrix<S>::Zero(R2, Ds);
      bp.step_b = Vector<S>::Zero(R2);
      bp.cond_w = RowMatrix<S>::Zero(R2, c.embed_dim);
      bp.res_w = RowMatrix<S>::Zero(R, R);
      bp.res_b = Vector<S>::Zero(R);
      bp.skip_w = RowMatrix<S>::Zero(R, R);
      bp.skip_b = Vector<S>::Zero(R);
      p.blocks.push_back(std::move(bp));
    }
    p.out1_w = RowMatrix<S>::Zero(R, R);
    p.out1_b = Vector<S>::Zero(R);
    p.out2_w = RowMatrix<S>::Zero(c.channels, R);
    p.out2_b = Vector<S>::Zero(c.channels);
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
    f("input.weight", self.in_w);
    f("input.bias", self.in_b);
    f("step_mlp.fc1.weight", self.step_fc1_w);
    f("step_mlp.fc1.bias", self.step_fc1_b);
    f("step_mlp.fc2.weight", self.step_fc2_w);
    f("step_mlp.fc2.bias", self.step_fc2_b);
    self.cond.visit(f, "condition");
    for (std::size_t b = 0; b < self.blocks.size(); ++b)
      BlockParams<S>::visit_impl(self.blocks[b], f, "blocks." + std::to_string(b));
    f("output.fc1.weight", self.out1_w);
    f("output.fc1.bias", self.out1_b);
    f("output.fc2.weight", self.out2_w);
    f("output.fc2.bias", self.out2_b);
  }
};

/// Weights ~ N(0, 1/fan_in), biases zero; S4 and conditioning use their own initializers.
template <class S>
DenoiserParams<S> init_params(const ModelConfig& c, std::uint64_t seed) {
  auto p = DenoiserParams<S>::zeros(c);
  Rng rng(seed);
  auto dense = [&](RowMatrix<S>& w) { rng.fill_normal(w, 1.0 / std::sqrt(static_cast<double>(w.cols()))); };
  dense(p.in_w);
  dense(p.step_fc1_w);
  dense(p.step_fc2_w);
  p.cond = ConditioningParams<S>::init(c.mechanism, c.num_labels, c.embed_dim, c.pad_row, rng);
  s4::S4Layer<S> shape_only(2 * c.residual_channels, c.state_dim, 1, c.s4_activation);
  for (auto& b : p.blocks) {
    dense(b.conv_w);
    b.s4 = shape_only.init_params(rng);
    dense(b.step_w);
    dense(b.cond_w);
    dense(b.res_w);
    dense(b.skip_w);
  }
  dense(p.out1_w);
  dense(p.out2_w);
  return p;
}

template <class S>
class Denoiser {
 public:
  using Scalar = S;
  using Params = DenoiserParams<S>;

  struct BlockCache {
    Matrix<S> x;  // block input
    Matrix<S> h;
    s4::S4Cache<S> s4;
    Matrix<S> u;
  };

  struct Cache {
    Matrix<S> input;
    int t = 0;
    LabelVector labels;
    Vector<S> raw_step, step_a1, step_s1, step_a2, step;
    Vector<S> cond;
    Matrix<S> in_pre;
    std::vector<BlockCache> blocks;
    Matrix<S> skip;
    Matrix<S> out_pre;
    Matrix<S> out_hidden;
  };

  explicit Denoiser(ModelConfig config) : Denoiser(config, Params::zeros(config)) {}

  Denoiser(ModelConfig config, Params params) : config_(std::move(config)), params_(std::move(params)) {
    config_.validate();
    if (param_count(params_) != param_count(Params::zeros(config_)))
      throw std::invalid_argument("Denoiser: parameters do not match config");
    for (int b = 0; b < config_.num_blocks; ++b)
      s4_.emplace_back(2 * config_.residual_channels, config_.state_dim, config_.length, config_.s4_activation);
  }

  static Denoiser initialized(const ModelConfig& config, std::uint64_t seed) {
    return Denoiser(config, init_params<S>(config, seed));
  }

  const ModelConfig& config() const { return config_; }
  int channels() const { return config_.channels; }
  int length() const { return config_.length; }

  const Params& params() const { return params_; }
  /// Mutable access invalidates the materialized S4 kernels.
  Params& mutable_params() {
    prepared_ = false;
    return params_;
  }

  void prepare() {
    for (int b = 0; b < config_.num_blocks; ++b) s4_[static_cast<std::size_t>(b)].prepare(params_.blocks[static_cast<std::size_t>(b)].s4);
    prepared_ = true;
  }

  Matrix<S> predict(const Matrix<S>& x, int t, const LabelVector& y) {
    if (!prepared_) prepare();
    return forward(x, t, y, nullptr);
  }

  Matrix<S> forward(const Matrix<S>& x, int t, const LabelVector& y, Cache* cache) {
    if (!prepared_) prepare();
    if (x.rows() != config_.channels || x.cols() != config_.length)
      throw std::invalid_argument("Denoiser: expected " + std::to_string(config_.channels) + "x" +
                                  std::to_string(config_.length) + " input, got " + std::to_string(x.rows()) + "x" +
                                  std::to_string(x.cols()));
    if (y.size() != config_.num_labels)
      throw std::invalid_argument("Denoiser: expected " + std::to_string(config_.num_labels) + " labels, got " +
                                  std::to_string(y.size()));
    const auto& p = params_;
    const int R = config_.residual_channels;
    const S half_sqrt = static_cast<S>(M_SQRT1_2);

    Vector<S> raw = diffusion_step_embedding<S>(t, config_.step_embed_dim);
    Vector<S> a1 = p.step_fc1_w * raw + p.step_fc1_b;
    Vector<S> s1 = apply_activation(Activation::silu, a1);
    Vector<S> a2 = p.step_fc2_w * s1 + p.step_fc2_b;
    Vector<S> step = apply_activation(Activation::silu, a2);
    Vector<S> cond = p.cond.embed(y);

    Matrix<S> in_pre = p.in_w * x;
    in_pre.colwise() += p.in_b;
    Matrix<S> h_res = apply_activation(Activation::silu, in_pre);
    Matrix<S> skip = Matrix<S>::Zero(R, config_.length);

    if (cache) cache->blocks.resize(static_cast<std::size_t>(config_.num_blocks));
    for (int b = 0; b < config_.num_blocks; ++b) {
      const auto& bp = p.blocks[static_cast<std::size_t>(b)];
      BlockCache* bc = cache ? &cache->blocks[static_cast<std::size_t>(b)] : nullptr;
      Matrix<S> h = bp.conv_w * h_res;
      h.colwise() += bp.conv_b;
      Matrix<S> u = s4_[static_cast<std::size_t>(b)].forward(h, bc ? &bc->s4 : nullptr);
      Vector<S> bias = bp.step_w * step + bp.step_b + bp.cond_w * cond;
      u.colwise() += bias;
      Matrix<S> g = gate(u, R);
      Matrix<S> res = bp.res_w * g;
      res.colwise() += bp.res_b;
      Matrix<S> sk = bp.skip_w * g;
      sk.colwise() += bp.skip_b;
      skip += sk;
      if (bc) {
        bc->x = h_res;
        bc->h = std::move(h);
        bc->u = std::move(u);
      }
      h_res = (h_res + res) * half_sqrt;
    }
    skip *= static_cast<S>(1.0 / std::sqrt(static_cast<double>(config_.num_blocks)));
    Matrix<S> out_pre = p.out1_w * skip;
    out_pre.colwise() += p.out1_b;
    Matrix<S> out_hidden = apply_activation(Activation::silu, out_pre);
    Matrix<S> out = p.out2_w * out_hidden;
    out.colwise() += p.out2_b;

    if (cache) {
      cache->input = x;
      cache->t = t;
      cache->labels = y;
      cache->raw_step = std::move(raw);
      cache->step_a1 = std::move(a1);
      cache->step_s1 = std::move(s1);
      cache->step_a2 = std::move(a2);
      cache->step = std::move(step);
      cache->cond = std::move(cond);
      cache->in_pre = std::move(in_pre);
      cache->skip = std::move(skip);
      cache->out_pre = std::move(out_pre);
      cache->out_hidden = std::move(out_hidden);
    }
    return out;
  }

  void begin_backward() {
    if (!prepared_) throw std::logic_error("Denoiser::begin_backward before forward");
    for (auto& layer : s4_) layer.begin_backward();
  }

  /// Accumulates parameter gradients for one forward pass; returns d loss / d input.
  Matrix<S> backward(const Cache& c, const Matrix<S>& dout, Params& grad) {
    const auto& p = params_;
    const int R = config_.residual_channels;
    const S half_sqrt = static_cast<S>(M_SQRT1_2);
    const S skip_scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(config_.num_blocks)));

    grad.out2_w.noalias() += dout * c.out_hidden.transpose();
    grad.out2_b += dout.rowwise().sum();
    Matrix<S> d_out_pre = (p.out2_w.transpose() * dout).cwiseProduct(activation_grad(Activation::silu, c.out_pre));
    grad.out1_w.noalias() += d_out_pre * c.skip.transpose();
    grad.out1_b += d_out_pre.rowwise().sum();
    const Matrix<S> dskip = (p.out1_w.transpose() * d_out_pre) * skip_scale;

    Matrix<S> dx = Matrix<S>::Zero(R, config_.length);
    Vector<S> dstep = Vector<S>::Zero(config_.step_embed_dim);
    Vector<S> dcond = Vector<S>::Zero(config_.embed_dim);
    for (int b = config_.num_blocks - 1; b >= 0; --b) {
      const auto& bp = p.blocks[static_cast<std::size_t>(b)];
      auto& bg = grad.blocks[static_cast<std::size_t>(b)];
      const auto& bc = c.blocks[static_cast<std::size_t>(b)];
      const Matrix<S> dres = dx * half_sqrt;
      Matrix<S> g = gate(bc.u, R);
      bg.res_w.noalias() += dres * g.transpose();
      bg.res_b += dres.rowwise().sum();
      bg.skip_w.noalias() += dskip * g.transpose();
      bg.skip_b += dskip.rowwise().sum();
      Matrix<S> dg = bp.res_w.transpose() * dres;
      dg.noalias() += bp.skip_w.transpose() * dskip;

      Matrix<S> du(2 * R, config_.length);
      for (Eigen::Index j = 0; j < config_.length; ++j) {
        for (int r = 0; r < R; ++r) {
          const S ta = std::tanh(bc.u(r, j));
          const S sb = sigmoid(bc.u(R + r, j));
          du(r, j) = dg(r, j) * sb * (S(1) - ta * ta);
          du(R + r, j) = dg(r, j) * ta * sb * (S(1) - sb);
        }
      }
      const Vector<S> dbias = du.rowwise().sum();
      bg.step_w.noalias() += dbias * c.step.transpose();
      bg.step_b += dbias;
      dstep.noalias() += bp.step_w.transpose() * dbias;
      bg.cond_w.noalias() += dbias * c.cond.transpose();
      dcond.noalias() += bp.cond_w.transpose() * dbias;

      const Matrix<S> dh = s4_[static_cast<std::size_t>(b)].backward(bc.h, bc.s4, du, bg.s4);
      bg.conv_w.noalias() += dh * bc.x.transpose();
      bg.conv_b += dh.rowwise().sum();
      Matrix<S> dx_in = dx * half_sqrt;
      dx_in.noalias() += bp.conv_w.transpose() * dh;
      dx = std::move(dx_in);
    }

    const Matrix<S> d_in_pre = dx.cwiseProduct(activation_grad(Activation::silu, c.in_pre));
    grad.in_w.noalias() += d_in_pre * c.input.transpose();
    grad.in_b += d_in_pre.rowwise().sum();

    p.cond.backward(c.labels, dcond, grad.cond);

    const Vector<S> da2 = dstep.cwiseProduct(activation_grad(Activation::silu, c.step_a2));
    grad.step_fc2_w.noalias() += da2 * c.step_s1.transpose();
    grad.step_fc2_b += da2;
    const Vector<S> da1 = (p.step_fc2_w.transpose() * da2).cwiseProduct(activation_grad(Activation::silu, c.step_a1));
    grad.step_fc1_w.noalias() += da1 * c.raw_step.transpose();
    grad.step_fc1_b += da1;

    return p.in_w.transpose() * d_in_pre;
  }

  void finish_backward(Params& grad) {
    for (int b = 0; b < config_.num_blocks; ++b)
      s4_[static_cast<std::size_t>(b)].finish_backward(grad.blocks[static_cast<std::size_t>(b)].s4);
  }

 private:
  static Matrix<S> gate(const Matrix<S>& u, int R) {
    return u.topRows(R).array().tanh() * u.bottomRows(R).array().unaryExpr([](S v) { return sigmoid(v); });
  }

  ModelConfig config_;
  Params params_;
  std::vector<s4::S4Layer<S>> s4_;
  bool prepared_ = false;
};

}  // namespace sssd
