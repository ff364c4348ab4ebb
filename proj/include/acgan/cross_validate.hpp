#pragma once

// k-fold evaluation: for every fold a fresh model is trained on the other k-1 folds
// (with augmentation) and its frozen discriminator classifies the held-out fold.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "acgan/folds.hpp"
#include "acgan/metrics.hpp"
#include "acgan/trainer.hpp"

namespace acgan {

struct CvConfig {
  std::size_t folds = 5;
  bool stratified = true;
  std::uint64_t seed = 0;
  int positive_class = -1;  // -1: "malignant" if present, else class 1
  std::size_t threads = 1;  // 0: hardware concurrency
  TrainConfig train;
  // Assert freeze enforcement, head separation and update partitioning per fold.
  bool audit_invariants = false;
  bool measure_train_accuracy = false;
  std::filesystem::path checkpoint_dir;  // per-fold checkpoints when non-empty
};

struct FoldTask {
  std::size_t fold = 0;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::uint64_t seed = 0;
};

struct FoldOutcome {
  std::vector<int> predictions;  // aligned with FoldTask::test
  History history;
  std::vector<std::string> audit;
  std::optional<double> train_accuracy;
};

using FoldRunner = std::function<FoldOutcome(const Dataset&, const FoldTask&)>;

struct FoldResult {
  FoldTask task;
  FoldOutcome outcome;
  std::optional<ConfusionMatrix> confusion;
  Metrics metrics;
};

struct CvResult {
  FoldPlan plan;
  int positive_class = 1;
  std::vector<FoldResult> folds;
  MetricsReport report;
};

struct FoldError : std::runtime_error {
  std::size_t fold;
  FoldError(std::size_t f, const std::string& what)
      : std::runtime_error("fold " + std::to_string(f + 1) + ": " + what), fold(f) {}
};

inline int default_positive_class(const Dataset& data) {
  for (std::size_t c = 0; c < data.class_names.size(); ++c)
    if (data.class_names[c] == "malignant") return static_cast<int>(c);
  return 1;
}

namespace detail {

template <typename T>
void audit_frozen_model(AcganModel<T>& model, const Dataset& data, const FoldTask& task, FoldOutcome& out) {
  // Freeze enforcement.
  {
    AcganModel<T> probe = model.clone();
    probe.unfreeze();
    auto imgs = stack_images<T>(data, std::span(task.test).first(std::min<std::size_t>(2, task.test.size())));
    bool refused = false;
    try {
      classify(probe, imgs);
    } catch (const NotFrozenError&) {
      refused = true;
    }
    if (!refused) throw InvariantViolation("classify() accepted an unfrozen model");
  }
  {
    bool refused = false;
    try {
      AdamState<T> opt;
      adam_step(model.disc, opt);
    } catch (const FrozenError&) {
      refused = true;
    }
    if (!refused) throw InvariantViolation("optimizer step accepted a frozen discriminator");
  }
  out.audit.push_back("freeze enforcement: ok");

  // Head separation: randomising the source head leaves predictions unchanged.
  AcganModel<T> perturbed = model.clone();
  Rng rng = make_rng(task.seed, "audit");
  std::normal_distribution<T> dist(T(0), T(1));
  for (const char* name : {"source_head.weight", "source_head.bias"})
    for (auto& v : perturbed.disc.at(name).mutable_data()) v = dist(rng);
  auto again = classify(perturbed, stack_images<T>(data, task.test));
  if (again != out.predictions) throw InvariantViolation("source-head weights changed class predictions");
  out.audit.push_back("head separation: ok");
}

}  // namespace detail

// Default fold runner: fresh ACGAN, fit on task.train, freeze, classify task.test.
template <typename T = float>
FoldRunner acgan_fold_runner(const CvConfig& config) {
  return [config](const Dataset& data, const FoldTask& task) {
    TrainConfig train = config.train;
    train.seed = task.seed;
    train.check_invariants = train.check_invariants || config.audit_invariants;
    auto gspec = GeneratorSpec::defaults(data.image_size, data.num_classes(), train.z_dim);
    auto dspec = DiscriminatorSpec::defaults(data.image_size, data.num_classes());
    AcganModel<T> model = make_model<T>(gspec, dspec, derive_seed(task.seed, "init"));
    model.class_names = data.class_names;

    FoldOutcome out;
    out.history = fit(model, data, task.train, train);
    if (train.check_invariants)
      out.audit.push_back("update partitioning: ok over " + std::to_string(train.epochs) + " epochs");
    model.freeze();
    out.predictions = classify(model, stack_images<T>(data, task.test));
    if (config.measure_train_accuracy) {
      auto train_pred = classify(model, stack_images<T>(data, task.train));
      std::vector<int> truth;
      for (auto i : task.train) truth.push_back(data.labels[i]);
      out.train_accuracy = accuracy(train_pred, truth);
    }
    if (config.audit_invariants) detail::audit_frozen_model(model, data, task, out);
    if (!config.checkpoint_dir.empty())
      save_model(model, config.checkpoint_dir / ("fold_" + std::to_string(task.fold + 1)));
    return out;
  };
}

inline CvResult cross_validate(const Dataset& data, const CvConfig& config, FoldRunner runner = {}) {
  data.validate();
  if (data.classes_present() < 2) throw std::invalid_argument("cross-validation needs at least 2 classes present");
  if (!runner) runner = acgan_fold_runner<float>(config);

  CvResult result;
  result.plan = kfold_split(data.labels, config.folds, config.seed, config.stratified);
  result.positive_class = config.positive_class >= 0 ? config.positive_class : default_positive_class(data);
  const std::size_t k = result.plan.k();
  result.folds.resize(k);
  for (std::size_t f = 0; f < k; ++f) {
    auto& task = result.folds[f].task;
    task.fold = f;
    task.test = result.plan.folds[f];
    task.train = result.plan.training_indices(f);
    task.seed = derive_seed(config.seed, "fold", f);
  }

  std::size_t threads = config.threads ? config.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, k);
  std::vector<std::exception_ptr> errors(k);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t f; (f = next.fetch_add(1)) < k;) {
      try {
        result.folds[f].outcome = runner(data, result.folds[f].task);
      } catch (...) {
        errors[f] = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (std::size_t f = 0; f < k; ++f) {
    if (!errors[f]) continue;
    try {
      std::rethrow_exception(errors[f]);
    } catch (const std::exception& e) {
      throw FoldError(f, e.what());
    }
  }

  std::vector<Metrics> per_fold;
  for (auto& fr : result.folds) {
    const auto& test = fr.task.test;
    if (fr.outcome.predictions.size() != test.size())
      throw FoldError(fr.task.fold, "runner returned " + std::to_string(fr.outcome.predictions.size()) +
                                        " predictions for " + std::to_string(test.size()) + " test images");
    for (auto i : fr.outcome.history.trained_on)
      if (std::binary_search(test.begin(), test.end(), i))
        throw InvariantViolation("fold " + std::to_string(fr.task.fold + 1) + " trained on its own test image " +
                                 std::to_string(i));
    std::vector<int> truth;
    for (auto i : test) truth.push_back(data.labels[i]);
    if (data.num_classes() == 2) {
      fr.confusion = confusion(fr.outcome.predictions, truth, result.positive_class);
      fr.metrics = metrics(*fr.confusion);
    } else {
      fr.metrics.accuracy = accuracy(fr.outcome.predictions, truth);
    }
    per_fold.push_back(fr.metrics);
  }
  result.report = summarize(std::move(per_fold));
  return result;
}

// metrics.csv, folds.json, and per fold: predictions_fold<k>.csv, history_fold<k>.csv,
// steps_fold<k>.csv (the first recorded training steps).
inline void write_cv_outputs(const CvResult& result, const Dataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream os(dir / "metrics.csv");
    write_metrics_csv(os, result.report);
  }
  {
    std::ofstream os(dir / "folds.json");
    nlohmann::json j = result.plan;
    os << j.dump(2) << '\n';
  }
  for (const auto& fr : result.folds) {
    const std::string id = std::to_string(fr.task.fold + 1);
    {
      std::ofstream os(dir / ("predictions_fold" + id + ".csv"));
      os << "filename,true,predicted\n";
      for (std::size_t i = 0; i < fr.task.test.size(); ++i) {
        const auto idx = fr.task.test[i];
        os << data.display_name(idx) << ',' << data.class_names[data.labels[idx]] << ','
           << data.class_names.at(fr.outcome.predictions[i]) << '\n';
      }
    }
    {
      std::ofstream os(dir / ("history_fold" + id + ".csv"));
      write_history_csv(os, fr.outcome.history);
    }
    {
      std::ofstream os(dir / ("steps_fold" + id + ".csv"));
      os << "step,loss_D,loss_G\n" << std::setprecision(17);
      for (const auto& s : fr.outcome.history.first_steps) os << s.step << ',' << s.loss_d << ',' << s.loss_g << '\n';
    }
  }
}

}  // namespace acgan
