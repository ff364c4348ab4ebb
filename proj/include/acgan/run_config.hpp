#pragma once

// Run configuration file (JSON). Every key is optional; unknown keys are rejected.
//
// {
//   "data": "DIR", "out": "DIR", "image_size": 0, "folds": 5, "stratified": true, "seed": 0, "threads": 0,
//   "positive_class": "malignant", "audit": false,
//   "train":   {"epochs": 200, "lr": 1e-4, "beta1": 0.5, "beta2": 0.999, "adam_epsilon": 1e-8,
//               "batch_size": 32, "z_dim": 100, "augment": true, "keep_steps": 5},
//   "augment": {"probability": 0.5, "hflip": true, "vflip": true, "rotate": true,
//               "noise": true, "angles": [90, 180, 270], "noise_sigma": 0.05}
// }

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>

#include "json.hpp"

#include "acgan/cross_validate.hpp"

namespace acgan {

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct RunConfig {
  std::string data;
  std::string out;
  std::size_t image_size = 0;  // 0: native size of the dataset
  std::size_t folds = 5;
  bool stratified = true;
  std::uint64_t seed = 0;
  std::size_t threads = 0;  // 0: available cores
  std::string positive_class;  // empty: "malignant" if present, else class 1
  bool audit = false;          // assert the structural training invariants during the run
  TrainConfig train;

  CvConfig cv_config() const {
    CvConfig cv;
    cv.folds = folds;
    cv.stratified = stratified;
    cv.seed = seed;
    cv.threads = threads;
    cv.train = train;
    cv.train.seed = seed;
    cv.audit_invariants = audit;
    return cv;
  }

  void validate() const {
    if (image_size != 0 && image_size < 8) throw ConfigError("image_size must be 0 (native) or >= 8");
    if (folds < 2) throw ConfigError("folds must be >= 2");
    try {
      train.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!allowed.contains(key)) throw ConfigError("unknown config key '" + where + key + "'");
}

template <typename V>
void read_key(const nlohmann::json& j, const char* key, V& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config key '" + where + key + "' has the wrong type");
  }
}

}  // namespace detail

inline void apply_json(RunConfig& rc, const nlohmann::json& j) {
  using detail::read_key;
  detail::reject_unknown(j,
                         {"data", "out", "image_size", "folds", "stratified", "seed", "threads", "positive_class",
                          "audit", "train", "augment"},
                         "");
  read_key(j, "data", rc.data, "");
  read_key(j, "out", rc.out, "");
  read_key(j, "image_size", rc.image_size, "");
  read_key(j, "folds", rc.folds, "");
  read_key(j, "stratified", rc.stratified, "");
  read_key(j, "seed", rc.seed, "");
  read_key(j, "threads", rc.threads, "");
  read_key(j, "positive_class", rc.positive_class, "");
  read_key(j, "audit", rc.audit, "");
  if (j.contains("train")) {
    const auto& t = j.at("train");
    detail::reject_unknown(
        t, {"epochs", "lr", "beta1", "beta2", "adam_epsilon", "batch_size", "z_dim", "augment", "keep_steps"}, "train.");
    read_key(t, "epochs", rc.train.epochs, "train.");
    read_key(t, "lr", rc.train.lr, "train.");
    read_key(t, "beta1", rc.train.beta1, "train.");
    read_key(t, "beta2", rc.train.beta2, "train.");
    read_key(t, "adam_epsilon", rc.train.adam_epsilon, "train.");
    read_key(t, "batch_size", rc.train.batch_size, "train.");
    read_key(t, "z_dim", rc.train.z_dim, "train.");
    read_key(t, "augment", rc.train.augment, "train.");
    read_key(t, "keep_steps", rc.train.keep_steps, "train.");
  }
  if (j.contains("augment")) {
    const auto& a = j.at("augment");
    auto& ac = rc.train.augmentation;
    detail::reject_unknown(a, {"probability", "hflip", "vflip", "rotate", "noise", "angles", "noise_sigma"}, "augment.");
    read_key(a, "probability", ac.probability, "augment.");
    read_key(a, "hflip", ac.hflip, "augment.");
    read_key(a, "vflip", ac.vflip, "augment.");
    read_key(a, "rotate", ac.rotate, "augment.");
    read_key(a, "noise", ac.noise, "augment.");
    read_key(a, "angles", ac.angles, "augment.");
    read_key(a, "noise_sigma", ac.noise_sigma, "augment.");
  }
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  RunConfig rc;
  apply_json(rc, j);
  return rc;
}

inline nlohmann::json to_json(const RunConfig& rc) {
  const auto& t = rc.train;
  const auto& a = t.augmentation;
  return {
      {"data", rc.data},
      {"out", rc.out},
      {"image_size", rc.image_size},
      {"folds", rc.folds},
      {"stratified", rc.stratified},
      {"seed", rc.seed},
      {"threads", rc.threads},
      {"positive_class", rc.positive_class},
      {"audit", rc.audit},
      {"train",
       {{"epochs", t.epochs},
        {"lr", t.lr},
        {"beta1", t.beta1},
        {"beta2", t.beta2},
        {"adam_epsilon", t.adam_epsilon},
        {"batch_size", t.batch_size},
        {"z_dim", t.z_dim},
        {"augment", t.augment},
        {"keep_steps", t.keep_steps}}},
      {"augment",
       {{"probability", a.probability},
        {"hflip", a.hflip},
        {"vflip", a.vflip},
        {"rotate", a.rotate},
        {"noise", a.noise},
        {"angles", a.angles},
        {"noise_sigma", a.noise_sigma}}},
  };
}

// Index of `name` in the dataset's classes, or the default positive class when empty.
inline int resolve_positive_class(const std::string& name, const Dataset& data) {
  if (name.empty()) return default_positive_class(data);
  for (std::size_t c = 0; c < data.class_names.size(); ++c)
    if (data.class_names[c] == name) return static_cast<int>(c);
  throw ConfigError("positive class '" + name + "' is not one of the dataset's classes");
}

}  // namespace acgan
