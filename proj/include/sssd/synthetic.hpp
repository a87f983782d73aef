#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

#include "sssd/data.hpp"
#include "sssd/diffusion.hpp"
#include "sssd/training.hpp"

namespace sssd {

/// One generated record per real record, conditioned on the real record's labels.
/// Labels, fold and fs are copied; ids become "syn_<id>" and point back via source_id.
inline Dataset generate_synthetic_copy(const Checkpoint& ckpt, const Dataset& real, std::uint64_t seed,
                                       const std::function<void(std::size_t, std::size_t)>& progress = {}) {
  const auto& cfg = ckpt.config;
  if (real.num_labels() != cfg.num_labels)
    throw std::invalid_argument("generate: checkpoint has " + std::to_string(cfg.num_labels) +
                                " labels but dataset has " + std::to_string(real.num_labels()));
  if (real.leads() != cfg.channels)
    throw std::invalid_argument("generate: checkpoint has " + std::to_string(cfg.channels) +
                                " channels but dataset has " + std::to_string(real.leads()) + " leads");
  if (!real.empty() && real.length() != cfg.length)
    throw std::invalid_argument("generate: checkpoint length " + std::to_string(cfg.length) +
                                " != dataset length " + std::to_string(real.length()));

  Denoiser<float> model = ckpt.model();
  model.prepare();
  Rng rng(seed);
  Dataset out = real.empty_like();
  out.name = "syn_" + real.name + "@" + std::to_string(ckpt.samples_seen);
  out.records.reserve(real.size());
  for (std::size_t i = 0; i < real.size(); ++i) {
    const auto& src = real.records[i];
    EcgRecord r;
    r.id = "syn_" + src.id;
    r.source_id = src.id;
    r.fs = src.fs;
    r.fold = src.fold;
    r.labels = src.labels;
    r.signal = sample(model, src.labels, ckpt.schedule, rng.split());
    out.records.push_back(std::move(r));
    if (progress) progress(i + 1, real.size());
  }
  return out;
}

}  // namespace sssd
