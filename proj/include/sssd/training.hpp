#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sssd/config.hpp"
#include "sssd/data.hpp"
#include "sssd/diffusion.hpp"
#include "sssd/model.hpp"
#include "sssd/rng.hpp"

namespace sssd {

inline NoiseSchedule schedule_for(const TrainConfig& c) {
  return make_linear_schedule(c.diffusion_steps, c.beta_start, c.beta_end);
}

/// Denoising objective for one example: mean over elements of (eps - model(x_t, t, y))^2.
template <class M>
double loss_term(M& model, const Matrix<typename M::Scalar>& x0, int t, const Matrix<typename M::Scalar>& eps,
                 const LabelVector& y, const NoiseSchedule& sched) {
  const auto xt = forward_sample(x0, t, eps, sched);
  const auto pred = model.predict(xt, t, y);
  return static_cast<double>((eps - pred).squaredNorm()) / static_cast<double>(eps.size());
}

/// Adaptive-moment optimizer over a flat parameter vector.
template <class S>
class Adam {
 public:
  explicit Adam(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::span<S> theta, std::span<const S> grad) {
    if (theta.size() != m_.size() || grad.size() != m_.size()) throw std::invalid_argument("Adam: size mismatch");
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double g = static_cast<double>(grad[i]);
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g * g;
      theta[i] -= static_cast<S>(lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_));
    }
  }

  long steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

// ---------------------------------------------------------------------------------------------
// Checkpoints

struct Checkpoint {
  static constexpr int kFormatVersion = 1;

  int format_version = kFormatVersion;
  ModelConfig config;
  NoiseSchedule schedule;
  long samples_seen = 0;
  DenoiserParams<float> params;

  Denoiser<float> model() const { return Denoiser<float>(config, params); }
};

inline std::string checkpoint_stem(long samples_seen) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ckpt_%09ld", samples_seen);
  return buf;
}

/// Writes <stem>.json (manifest with tensor index) and <stem>.bin (little-endian float32 payload).
/// Returns the manifest path.
inline std::filesystem::path save_checkpoint(const Checkpoint& ck, const std::filesystem::path& dir,
                                             const std::string& stem) {
  std::filesystem::create_directories(dir);
  Json tensors = Json::array();
  for (const auto& info : tensor_index(ck.params))
    tensors.push_back({{"name", info.name}, {"offset", info.offset}, {"shape", info.shape}});
  const auto flat = flatten<float>(ck.params);
  Json manifest{{"format_version", ck.format_version},
                {"samples_seen", ck.samples_seen},
                {"model", to_json(ck.config)},
                {"schedule",
                 {{"kind", "linear"},
                  {"steps", ck.schedule.steps},
                  {"beta_start", ck.schedule.beta_start},
                  {"beta_end", ck.schedule.beta_end}}},
                {"payload", stem + ".bin"},
                {"param_count", flat.size()},
                {"tensors", tensors}};
  const auto manifest_path = dir / (stem + ".json");
  {
    std::ofstream out(manifest_path);
    if (!out) throw std::runtime_error("cannot write " + manifest_path.string());
    out << manifest.dump(2) << "\n";
  }
  std::vector<char> bytes;
  bytes.reserve(flat.size() * 4);
  for (float v : flat) {
    const auto u = std::bit_cast<std::uint32_t>(v);
    for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<char>((u >> (8 * b)) & 0xFFu));
  }
  std::ofstream bin(dir / (stem + ".bin"), std::ios::binary);
  if (!bin) throw std::runtime_error("cannot write checkpoint payload in " + dir.string());
  bin.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  return manifest_path;
}

inline Checkpoint load_checkpoint(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("cannot read checkpoint " + manifest_path.string());
  Json m = Json::parse(in);
  Checkpoint ck;
  ck.format_version = m.at("format_version").get<int>();
  if (ck.format_version != Checkpoint::kFormatVersion)
    throw std::invalid_argument("unsupported checkpoint format version " + std::to_string(ck.format_version));
  ck.samples_seen = m.at("samples_seen").get<long>();
  ck.config = model_config_from_json(m.at("model"));
  const auto& s = m.at("schedule");
  if (s.at("kind").get<std::string>() != "linear") throw std::invalid_argument("unknown schedule kind");
  ck.schedule = make_linear_schedule(s.at("steps").get<int>(), s.at("beta_start").get<double>(),
                                     s.at("beta_end").get<double>());
  ck.params = DenoiserParams<float>::zeros(ck.config);

  const auto expected_index = tensor_index(ck.params);
  const auto& tensors = m.at("tensors");
  if (tensors.size() != expected_index.size()) throw std::invalid_argument("checkpoint tensor index does not match config");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    TensorInfo got{tensors[i].at("name").get<std::string>(), tensors[i].at("offset").get<std::size_t>(),
                   tensors[i].at("shape").get<std::vector<std::size_t>>()};
    if (!(got == expected_index[i])) throw std::invalid_argument("checkpoint tensor '" + got.name + "' does not match config");
  }

  const auto payload = manifest_path.parent_path() / m.at("payload").get<std::string>();
  std::ifstream bin(payload, std::ios::binary);
  if (!bin) throw std::runtime_error("cannot read checkpoint payload " + payload.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  const std::size_t n = param_count(ck.params);
  if (bytes.size() != n * 4)
    throw std::invalid_argument("checkpoint payload has " + std::to_string(bytes.size()) + " bytes, expected " +
                                std::to_string(n * 4));
  std::vector<float> flat(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[4 * i + b])) << (8 * b);
    flat[i] = std::bit_cast<float>(u);
  }
  unflatten<float>(ck.params, flat);
  return ck;
}

// ---------------------------------------------------------------------------------------------
// Training loop

struct LossRecord {
  long step = 0;
  long samples_seen = 0;
  double loss = 0.0;
};

struct TrainResult {
  std::vector<Checkpoint> checkpoints;
  std::vector<LossRecord> losses;
};

struct TrainHooks {
  std::function<void(const Checkpoint&)> on_checkpoint;
  std::function<void(const LossRecord&)> on_step;
  bool keep_checkpoints = true;
};

/// Trains on every record of `data`. Checkpoints fall exactly on multiples of
/// checkpoint_every_samples (the batch before a boundary is shortened), plus one at the end.
inline TrainResult train(const Dataset& data, const ModelConfig& model_config, const TrainConfig& cfg,
                         const TrainHooks& hooks = {}) {
  cfg.validate();
  model_config.validate();
  if (data.empty()) throw std::invalid_argument("train: dataset is empty");
  if (data.leads() != model_config.channels || data.length() != model_config.length)
    throw std::invalid_argument("train: dataset shape " + std::to_string(data.leads()) + "x" +
                                std::to_string(data.length()) + " does not match model " +
                                std::to_string(model_config.channels) + "x" + std::to_string(model_config.length));
  if (data.num_labels() != model_config.num_labels)
    throw std::invalid_argument("train: dataset has " + std::to_string(data.num_labels()) + " labels, model expects " +
                                std::to_string(model_config.num_labels));

  const NoiseSchedule sched = schedule_for(cfg);
  Rng master(cfg.seed);
  const std::uint64_t init_seed = master.split();
  Rng rng(master.split());

  Denoiser<float> model = Denoiser<float>::initialized(model_config, init_seed);
  auto grad = zeros_like(model.params());
  std::vector<float> theta = flatten<float>(model.params());
  Adam<float> opt(theta.size(), cfg.learning_rate);

  const int n = static_cast<int>(data.size());
  std::vector<int> order(static_cast<std::size_t>(n));
  std::size_t cursor = order.size();
  auto next_index = [&]() {
    if (cursor == order.size()) {
      std::iota(order.begin(), order.end(), 0);
      for (int i = n - 1; i > 0; --i) std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(rng.uniform_int(0, i))]);
      cursor = 0;
    }
    return order[cursor++];
  };

  TrainResult result;
  auto emit = [&](long seen) {
    Checkpoint ck;
    ck.config = model_config;
    ck.schedule = sched;
    ck.samples_seen = seen;
    ck.params = model.params();
    if (hooks.on_checkpoint) hooks.on_checkpoint(ck);
    if (hooks.keep_checkpoints) result.checkpoints.push_back(std::move(ck));
  };

  const float elems = static_cast<float>(model_config.channels * model_config.length);
  typename Denoiser<float>::Cache cache;
  long seen = 0;
  long step = 0;
  while (seen < cfg.total_samples) {
    const long next_boundary = (seen / cfg.checkpoint_every_samples + 1) * cfg.checkpoint_every_samples;
    const int batch = static_cast<int>(std::min<long>({cfg.batch_size, next_boundary - seen, cfg.total_samples - seen}));

    set_zero(grad);
    model.prepare();
    model.begin_backward();
    double batch_loss = 0.0;
    for (int b = 0; b < batch; ++b) {
      const auto& rec = data.records[static_cast<std::size_t>(next_index())];
      const int t = rng.uniform_int(1, sched.steps);
      Matrix<float> eps = rng.normal_matrix<float>(model_config.channels, model_config.length);
      Matrix<float> xt = forward_sample<float>(rec.signal, t, eps, sched);
      Matrix<float> pred = model.forward(xt, t, rec.labels, &cache);
      Matrix<float> diff = pred - eps;
      batch_loss += static_cast<double>(diff.squaredNorm()) / elems;
      model.backward(cache, diff * (2.0f / (elems * static_cast<float>(batch))), grad);
    }
    model.finish_backward(grad);
    batch_loss /= batch;
    if (!std::isfinite(batch_loss))
      throw std::runtime_error("training diverged at step " + std::to_string(step) + " (samples_seen " +
                               std::to_string(seen) + "): loss is not finite");

    std::vector<float> g = flatten<float>(grad);
    if (cfg.grad_clip > 0) {
      double norm2 = 0.0;
      for (float v : g) norm2 += static_cast<double>(v) * v;
      const double norm = std::sqrt(norm2);
      if (norm > cfg.grad_clip)
        for (float& v : g) v = static_cast<float>(v * (cfg.grad_clip / norm));
    }
    opt.step(theta, g);
    unflatten<float>(model.mutable_params(), theta);

    seen += batch;
    ++step;
    LossRecord rec{step, seen, batch_loss};
    if (hooks.on_step) hooks.on_step(rec);
    result.losses.push_back(rec);
    if (seen % cfg.checkpoint_every_samples == 0 || seen == cfg.total_samples) emit(seen);
  }
  return result;
}

// ---------------------------------------------------------------------------------------------
// Gradient verification

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t worst_coordinate = 0;
  std::size_t coordinates = 0;
};

/// Central differences with step h_rel * max(1, |theta_i|) on the listed coordinates.
/// Relative error is |a - n| / max(|a|, |n|, 1e-8).
inline GradCheckResult check_gradient(const std::function<double(std::span<const double>)>& loss,
                                      std::span<const double> theta, std::span<const double> analytic,
                                      std::span<const std::size_t> coords, double h_rel = 1e-3) {
  if (theta.size() != analytic.size()) throw std::invalid_argument("check_gradient: size mismatch");
  GradCheckResult r;
  std::vector<double> probe(theta.begin(), theta.end());
  for (std::size_t i : coords) {
    const double h = h_rel * std::max(1.0, std::abs(theta[i]));
    probe[i] = theta[i] + h;
    const double up = loss(probe);
    probe[i] = theta[i] - h;
    const double down = loss(probe);
    probe[i] = theta[i];
    const double numeric = (up - down) / (2 * h);
    const double err = std::abs(analytic[i] - numeric) / std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    if (err > r.max_rel_err || r.coordinates == 0) {
      r.max_rel_err = std::max(r.max_rel_err, err);
      if (err >= r.max_rel_err) r.worst_coordinate = i;
    }
    ++r.coordinates;
  }
  return r;
}

struct ProbeConfig {
  int per_tensor = 3;  // coordinates sampled from every named tensor
  std::uint64_t seed = 0;
  double h_rel = 1e-3;
  int diffusion_steps = 50;
};

/// Picks `per_tensor` distinct coordinates from every tensor of a parameter struct.
template <class P>
std::vector<std::size_t> sample_coordinates(const P& params, int per_tensor, Rng& rng) {
  std::vector<std::size_t> coords;
  for (const auto& info : tensor_index(params)) {
    const int n = static_cast<int>(info.size());
    std::vector<int> picks;
    for (int k = 0; k < std::min(per_tensor, n); ++k) {
      int c;
      do c = rng.uniform_int(0, n - 1);
      while (std::find(picks.begin(), picks.end(), c) != picks.end());
      picks.push_back(c);
    }
    std::sort(picks.begin(), picks.end());
    for (int c : picks) coords.push_back(info.offset + static_cast<std::size_t>(c));
  }
  return coords;
}

/// Analytic gradient of the denoising loss on one random example, in double precision.
inline std::vector<double> denoiser_gradient(Denoiser<double>& model, const Matrix<double>& x0, int t,
                                             const Matrix<double>& eps, const LabelVector& y, const NoiseSchedule& sched) {
  typename Denoiser<double>::Cache cache;
  auto grad = zeros_like(model.params());
  model.prepare();
  model.begin_backward();
  const Matrix<double> xt = forward_sample<double>(x0, t, eps, sched);
  const Matrix<double> pred = model.forward(xt, t, y, &cache);
  model.backward(cache, (pred - eps) * (2.0 / static_cast<double>(eps.size())), grad);
  model.finish_backward(grad);
  return flatten<double>(grad);
}

/// Gradient check of the full denoiser loss at `params`. Returns the worst relative error.
inline GradCheckResult grad_check(const DenoiserParams<double>& params, const ModelConfig& config,
                                  const ProbeConfig& probe, const std::vector<std::size_t>* coords_override = nullptr,
                                  const std::function<void(std::vector<double>&)>& tamper = {}) {
  Rng rng(probe.seed);
  const auto sched = make_linear_schedule(probe.diffusion_steps, 1e-4, 0.05);
  const Matrix<double> x0 = rng.normal_matrix<double>(config.channels, config.length);
  const Matrix<double> eps = rng.normal_matrix<double>(config.channels, config.length);
  const int t = rng.uniform_int(1, sched.steps);
  std::vector<std::int8_t> bits;
  for (int i = 0; i < config.num_labels; ++i) bits.push_back(static_cast<std::int8_t>(rng.uniform_int(0, 1)));
  const LabelVector y(bits);

  Denoiser<double> model(config, params);
  auto analytic = denoiser_gradient(model, x0, t, eps, y, sched);
  if (tamper) tamper(analytic);
  const auto theta = flatten<double>(params);
  const auto coords = coords_override ? *coords_override : sample_coordinates(params, probe.per_tensor, rng);

  Denoiser<double> probe_model(config, params);
  auto loss = [&](std::span<const double> th) {
    unflatten<double>(probe_model.mutable_params(), th);
    return loss_term(probe_model, x0, t, eps, y, sched);
  };
  return check_gradient(loss, theta, analytic, coords, probe.h_rel);
}

}  // namespace sssd
