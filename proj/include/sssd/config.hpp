#pragma once

#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>

#include "json.hpp"

#include "sssd/model.hpp"

namespace sssd {

using Json = nlohmann::json;

struct TrainConfig {
  int batch_size = 8;
  double learning_rate = 2e-4;
  long total_samples = 8000;
  long checkpoint_every_samples = 4000;
  std::uint64_t seed = 0;
  int diffusion_steps = 200;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  double grad_clip = 0.0;  // global-norm clip; 0 disables

  void validate() const {
    if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
    if (!(learning_rate > 0)) throw std::invalid_argument("train config: learning_rate must be > 0");
    if (total_samples < 1) throw std::invalid_argument("train config: total_samples must be >= 1");
    if (checkpoint_every_samples < 1) throw std::invalid_argument("train config: checkpoint_every_samples must be > 0");
    if (grad_clip < 0) throw std::invalid_argument("train config: grad_clip must be >= 0");
  }

  bool operator==(const TrainConfig&) const = default;
};

namespace detail {

inline void reject_unknown_keys(const Json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + ": expected an object");
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw std::invalid_argument(where + ": unknown key '" + key + "'");
}

template <class T>
void read_opt(const Json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline Json to_json(const ModelConfig& c) {
  return Json{{"channels", c.channels},
              {"length", c.length},
              {"residual_channels", c.residual_channels},
              {"num_blocks", c.num_blocks},
              {"state_dim", c.state_dim},
              {"embed_dim", c.embed_dim},
              {"step_embed_dim", c.step_embed_dim},
              {"num_labels", c.num_labels},
              {"mechanism", to_string(c.mechanism)},
              {"pad_row", c.pad_row},
              {"s4_activation", to_string(c.s4_activation)}};
}

/// Missing keys keep the desk-scale defaults; unknown keys are an error.
inline ModelConfig model_config_from_json(const Json& j, ModelConfig c = ModelConfig::desk()) {
  detail::reject_unknown_keys(j,
                              {"preset", "channels", "length", "residual_channels", "num_blocks", "state_dim",
                               "embed_dim", "step_embed_dim", "num_labels", "mechanism", "pad_row", "s4_activation"},
                              "model");
  if (j.contains("preset")) {
    const auto preset = j.at("preset").get<std::string>();
    if (preset == "desk") c = ModelConfig::desk();
    else if (preset == "full") c = ModelConfig::full_scale();
    else throw std::invalid_argument("model: unknown preset '" + preset + "'");
  }
  detail::read_opt(j, "channels", c.channels);
  detail::read_opt(j, "length", c.length);
  detail::read_opt(j, "residual_channels", c.residual_channels);
  detail::read_opt(j, "num_blocks", c.num_blocks);
  detail::read_opt(j, "state_dim", c.state_dim);
  detail::read_opt(j, "embed_dim", c.embed_dim);
  detail::read_opt(j, "step_embed_dim", c.step_embed_dim);
  detail::read_opt(j, "num_labels", c.num_labels);
  detail::read_opt(j, "pad_row", c.pad_row);
  if (j.contains("mechanism")) c.mechanism = parse_mechanism(j.at("mechanism").get<std::string>());
  if (j.contains("s4_activation")) c.s4_activation = parse_activation(j.at("s4_activation").get<std::string>());
  c.validate();
  return c;
}

inline Json to_json(const TrainConfig& c) {
  return Json{{"batch_size", c.batch_size},
              {"learning_rate", c.learning_rate},
              {"total_samples", c.total_samples},
              {"checkpoint_every_samples", c.checkpoint_every_samples},
              {"seed", c.seed},
              {"diffusion_steps", c.diffusion_steps},
              {"beta_start", c.beta_start},
              {"beta_end", c.beta_end},
              {"grad_clip", c.grad_clip}};
}

inline TrainConfig train_config_from_json(const Json& j, TrainConfig c = {}) {
  detail::reject_unknown_keys(j,
                              {"batch_size", "learning_rate", "total_samples", "checkpoint_every_samples", "seed",
                               "diffusion_steps", "beta_start", "beta_end", "grad_clip"},
                              "train");
  detail::read_opt(j, "batch_size", c.batch_size);
  detail::read_opt(j, "learning_rate", c.learning_rate);
  detail::read_opt(j, "total_samples", c.total_samples);
  detail::read_opt(j, "checkpoint_every_samples", c.checkpoint_every_samples);
  detail::read_opt(j, "seed", c.seed);
  detail::read_opt(j, "diffusion_steps", c.diffusion_steps);
  detail::read_opt(j, "beta_start", c.beta_start);
  detail::read_opt(j, "beta_end", c.beta_end);
  detail::read_opt(j, "grad_clip", c.grad_clip);
  c.validate();
  return c;
}

}  // namespace sssd
