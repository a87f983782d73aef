#pragma once

// Whole-run settings file. Every section is optional; unknown keys are an error.
//   { "seed": 0, "model": {...}, "train": {...}, "classifier": {...},
//     "eval": {"label": "AFIB", "seeds": [0, 1, 2], "generation_seed": 0, "jobs": 1} }

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "sssd/classifier.hpp"
#include "sssd/config.hpp"

namespace sssd {

struct EvalSettings {
  std::string label;  // empty: first label of the dataset
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::uint64_t generation_seed = 0;
  int jobs = 1;

  bool operator==(const EvalSettings&) const = default;
};

struct RunConfig {
  std::uint64_t seed = 0;
  ModelConfig model = ModelConfig::desk();
  TrainConfig train;
  ClassifierConfig classifier;
  EvalSettings eval;

  bool operator==(const RunConfig&) const = default;
};

inline Json to_json(const ClassifierConfig& c) {
  return Json{{"width", c.width},   {"kernel", c.kernel},         {"blocks", c.blocks},
              {"epochs", c.epochs}, {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate}};
}

inline ClassifierConfig classifier_config_from_json(const Json& j, ClassifierConfig c = {}) {
  detail::reject_unknown_keys(j, {"width", "kernel", "blocks", "epochs", "batch_size", "learning_rate"}, "classifier");
  detail::read_opt(j, "width", c.width);
  detail::read_opt(j, "kernel", c.kernel);
  detail::read_opt(j, "blocks", c.blocks);
  detail::read_opt(j, "epochs", c.epochs);
  detail::read_opt(j, "batch_size", c.batch_size);
  detail::read_opt(j, "learning_rate", c.learning_rate);
  c.validate();
  return c;
}

inline Json to_json(const RunConfig& r) {
  return Json{{"seed", r.seed},
              {"model", to_json(r.model)},
              {"train", to_json(r.train)},
              {"classifier", to_json(r.classifier)},
              {"eval",
               {{"label", r.eval.label},
                {"seeds", r.eval.seeds},
                {"generation_seed", r.eval.generation_seed},
                {"jobs", r.eval.jobs}}}};
}

/// The top-level seed also seeds training unless "train" sets its own.
inline RunConfig run_config_from_json(const Json& j) {
  detail::reject_unknown_keys(j, {"seed", "model", "train", "classifier", "eval"}, "config");
  RunConfig r;
  detail::read_opt(j, "seed", r.seed);
  r.train.seed = r.seed;
  r.eval.generation_seed = r.seed;
  if (j.contains("model")) r.model = model_config_from_json(j.at("model"));
  if (j.contains("train")) r.train = train_config_from_json(j.at("train"), r.train);
  if (j.contains("classifier")) r.classifier = classifier_config_from_json(j.at("classifier"));
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    detail::reject_unknown_keys(e, {"label", "seeds", "generation_seed", "jobs"}, "eval");
    detail::read_opt(e, "label", r.eval.label);
    detail::read_opt(e, "seeds", r.eval.seeds);
    detail::read_opt(e, "generation_seed", r.eval.generation_seed);
    detail::read_opt(e, "jobs", r.eval.jobs);
    if (r.eval.seeds.empty()) throw std::invalid_argument("eval: seeds must not be empty");
    if (r.eval.jobs < 1) throw std::invalid_argument("eval: jobs must be >= 1");
  }
  return r;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace sssd
