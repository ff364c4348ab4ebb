#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <unistd.h>

#include "test_util.hpp"

using namespace acgan;
namespace fs = std::filesystem;

namespace {

std::vector<int> repeat(std::initializer_list<std::pair<int, std::size_t>> runs) {
  std::vector<int> out;
  for (auto [v, n] : runs) out.insert(out.end(), n, v);
  return out;
}

// Labels-only dataset with 8x8 blank images.
Dataset label_dataset(const std::vector<int>& labels, std::size_t classes = 2) {
  Dataset ds;
  ds.image_size = 8;
  for (std::size_t c = 0; c < classes; ++c) ds.class_names.push_back(c == 1 && classes == 2 ? "malignant" : "c" + std::to_string(c));
  for (int y : labels) {
    ds.images.push_back(Tensor<float>::zeros({1, 8, 8}));
    ds.labels.push_back(y);
  }
  return ds;
}

// Predicts the majority training label for every test image.
FoldOutcome majority_runner(const Dataset& data, const FoldTask& task) {
  std::map<int, std::size_t> counts;
  for (auto i : task.train) ++counts[data.labels[i]];
  int best = counts.begin()->first;
  for (auto [c, n] : counts)
    if (n > counts[best]) best = c;
  FoldOutcome out;
  out.predictions.assign(task.test.size(), best);
  out.history.trained_on = task.train;
  return out;
}

}  // namespace

TEST(Metrics, HandComputedConfusion) {
  // 150 positives (148 found), 100 negatives (99 rejected).
  auto truth = repeat({{1, 150}, {0, 100}});
  auto pred = repeat({{1, 148}, {0, 2}, {0, 99}, {1, 1}});
  auto cm = confusion(pred, truth, 1);
  EXPECT_EQ(cm, (ConfusionMatrix{148, 1, 99, 2}));
  auto m = metrics(cm);
  EXPECT_EQ(format_percent(m.accuracy), "98.80");
  EXPECT_EQ(format_percent(m.sensitivity), "98.67");
  EXPECT_EQ(format_percent(m.specificity), "99.00");
}

TEST(Metrics, PerfectAndDegeneratePredictors) {
  auto truth = repeat({{1, 150}, {0, 100}});
  auto perfect = metrics(confusion(truth, truth, 1));
  EXPECT_EQ(*perfect.accuracy, 1.0);
  EXPECT_EQ(*perfect.sensitivity, 1.0);
  EXPECT_EQ(*perfect.specificity, 1.0);
  auto all_pos = metrics(confusion(std::vector<int>(250, 1), truth, 1));
  EXPECT_EQ(*all_pos.sensitivity, 1.0);
  EXPECT_EQ(*all_pos.specificity, 0.0);
  EXPECT_DOUBLE_EQ(*all_pos.accuracy, 0.6);
}

TEST(Metrics, UndefinedRatiosAreNA) {
  auto m = metrics(confusion(std::vector<int>{0, 0}, std::vector<int>{0, 0}, 1));
  EXPECT_FALSE(m.sensitivity.has_value());
  EXPECT_EQ(format_percent(m.sensitivity), "NA");
  EXPECT_EQ(*m.specificity, 1.0);
  auto empty = metrics(ConfusionMatrix{});
  EXPECT_FALSE(empty.accuracy.has_value());
}

TEST(Metrics, InputErrors) {
  EXPECT_THROW(confusion(std::vector<int>{0, 1}, std::vector<int>{0}, 1), std::invalid_argument);
  EXPECT_THROW(confusion(std::vector<int>{0}, std::vector<int>{0}, 1, 3), std::invalid_argument);
  EXPECT_THROW(confusion(std::vector<int>{2}, std::vector<int>{0}, 1), std::invalid_argument);
  EXPECT_THROW(accuracy(std::vector<int>{}, std::vector<int>{}), std::invalid_argument);
}

TEST(Metrics, RandomTalliesMatchDirectCount) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = testutil::pick(rng, 1, 300);
    std::vector<int> truth(n), pred(n);
    for (std::size_t i = 0; i < n; ++i) {
      truth[i] = static_cast<int>(rng() % 2);
      pred[i] = static_cast<int>(rng() % 2);
    }
    const int pos = static_cast<int>(rng() % 2);
    auto cm = confusion(pred, truth, pos);
    std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      tp += pred[i] == pos && truth[i] == pos;
      fp += pred[i] == pos && truth[i] != pos;
      tn += pred[i] != pos && truth[i] != pos;
      fn += pred[i] != pos && truth[i] == pos;
    }
    ASSERT_EQ(cm, (ConfusionMatrix{tp, fp, tn, fn}));
    auto m = metrics(cm);
    ASSERT_NEAR(*m.accuracy, accuracy(pred, truth), 1e-15);
    if (m.sensitivity && m.specificity) {
      // Accuracy is the class-prevalence weighted mix of sensitivity and specificity.
      const double prev = static_cast<double>(cm.positives()) / n;
      ASSERT_NEAR(*m.accuracy, prev * *m.sensitivity + (1 - prev) * *m.specificity, 1e-12);
    }
    // Order of the pairs does not matter.
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<int> t2(n), p2(n);
    for (std::size_t i = 0; i < n; ++i) {
      t2[i] = truth[perm[i]];
      p2[i] = pred[perm[i]];
    }
    ASSERT_EQ(confusion(p2, t2, pos), cm);
  }
}

TEST(Metrics, SummaryAveragesDefinedFoldsAndFormatsCsv) {
  std::vector<Metrics> folds(2);
  folds[0] = {0.5, std::nullopt, 0.25};
  folds[1] = {1.0, 0.75, 0.75};
  auto r = summarize(folds);
  EXPECT_DOUBLE_EQ(*r.mean.accuracy, 0.75);
  EXPECT_DOUBLE_EQ(*r.mean.sensitivity, 0.75);
  EXPECT_DOUBLE_EQ(*r.mean.specificity, 0.5);
  std::ostringstream os;
  write_metrics_csv(os, r);
  EXPECT_EQ(os.str(),
            "fold,accuracy_pct,sensitivity_pct,specificity_pct\n"
            "1,50.00,NA,25.00\n"
            "2,100.00,75.00,75.00\n"
            "mean,75.00,75.00,50.00\n");
}

TEST(CrossValidate, FoldSizesAndMajorityStub) {
  auto ds = label_dataset(repeat({{0, 100}, {1, 150}}));
  CvConfig cfg;
  cfg.seed = 4;
  auto res = cross_validate(ds, cfg, majority_runner);
  ASSERT_EQ(res.folds.size(), 5u);
  EXPECT_EQ(res.positive_class, 1);
  double total = 0;
  for (const auto& f : res.folds) {
    EXPECT_EQ(f.task.train.size(), 200u);
    EXPECT_EQ(f.task.test.size(), 50u);
    std::size_t majority = 0;
    for (auto i : f.task.test) majority += ds.labels[i] == 1;
    EXPECT_DOUBLE_EQ(*f.metrics.accuracy, majority / 50.0);
    EXPECT_EQ(*f.metrics.sensitivity, 1.0);
    EXPECT_EQ(*f.metrics.specificity, 0.0);
    total += *f.metrics.accuracy;
  }
  EXPECT_NEAR(*res.report.mean.accuracy, total / 5, 1e-12);
  EXPECT_NEAR(*res.report.mean.accuracy, 0.6, 1e-12);
}

TEST(CrossValidate, ThreadCountDoesNotChangeResults) {
  auto ds = label_dataset(repeat({{0, 13}, {1, 20}}));
  CvConfig cfg;
  cfg.folds = 4;
  cfg.threads = 1;
  auto a = cross_validate(ds, cfg, majority_runner);
  cfg.threads = 4;
  auto b = cross_validate(ds, cfg, majority_runner);
  for (std::size_t f = 0; f < 4; ++f) {
    EXPECT_EQ(a.folds[f].task.test, b.folds[f].task.test);
    EXPECT_EQ(a.folds[f].task.seed, b.folds[f].task.seed);
    EXPECT_EQ(a.folds[f].outcome.predictions, b.folds[f].outcome.predictions);
  }
}

TEST(CrossValidate, FailuresNameTheFold) {
  auto ds = label_dataset(repeat({{0, 10}, {1, 10}}));
  CvConfig cfg;
  cfg.threads = 2;
  try {
    cross_validate(ds, cfg, [](const Dataset& d, const FoldTask& t) {
      if (t.fold == 2) throw std::runtime_error("boom");
      return majority_runner(d, t);
    });
    FAIL();
  } catch (const FoldError& e) {
    EXPECT_EQ(e.fold, 2u);
    EXPECT_NE(std::string(e.what()).find("fold 3"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("boom"), std::string::npos);
  }
  EXPECT_THROW(cross_validate(ds, cfg,
                              [](const Dataset&, const FoldTask& t) {
                                FoldOutcome o;
                                o.predictions.assign(t.test.size() + 1, 0);
                                return o;
                              }),
               FoldError);
}

TEST(CrossValidate, LeakageIsDetected) {
  auto ds = label_dataset(repeat({{0, 10}, {1, 10}}));
  CvConfig cfg;
  auto leaky = [](const Dataset& d, const FoldTask& t) {
    auto out = majority_runner(d, t);
    out.history.trained_on.push_back(t.test.front());
    std::sort(out.history.trained_on.begin(), out.history.trained_on.end());
    return out;
  };
  EXPECT_THROW(cross_validate(ds, cfg, leaky), InvariantViolation);
}

TEST(CrossValidate, InputValidation) {
  auto one_class = label_dataset(std::vector<int>(10, 0));
  EXPECT_THROW(cross_validate(one_class, CvConfig{}, majority_runner), std::invalid_argument);
  auto tiny = label_dataset({0, 1, 0});
  EXPECT_THROW(cross_validate(tiny, CvConfig{}, majority_runner), std::invalid_argument);  // k > I
}

TEST(CrossValidate, MultiClassReportsAccuracyOnly) {
  auto ds = label_dataset(repeat({{0, 10}, {1, 10}, {2, 15}}), 3);
  auto res = cross_validate(ds, CvConfig{}, majority_runner);
  for (const auto& f : res.folds) {
    EXPECT_TRUE(f.metrics.accuracy.has_value());
    EXPECT_FALSE(f.metrics.sensitivity.has_value());
    EXPECT_FALSE(f.confusion.has_value());
  }
}

TEST(CrossValidate, OutputFiles) {
  auto ds = label_dataset(repeat({{0, 10}, {1, 10}}));
  CvConfig cfg;
  cfg.folds = 3;
  auto res = cross_validate(ds, cfg, majority_runner);
  const auto dir = fs::temp_directory_path() / ("acgan_cv_out_" + std::to_string(::getpid()));
  write_cv_outputs(res, ds, dir);
  for (const char* f : {"metrics.csv", "folds.json", "predictions_fold1.csv", "history_fold3.csv", "steps_fold2.csv"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  std::ifstream is(dir / "metrics.csv");
  std::vector<std::string> lines;
  for (std::string line; std::getline(is, line);) lines.push_back(line);
  ASSERT_EQ(lines.size(), 5u);
  EXPECT_EQ(lines.front(), "fold,accuracy_pct,sensitivity_pct,specificity_pct");
  EXPECT_EQ(lines.back().substr(0, 5), "mean,");
  std::ifstream fj(dir / "folds.json");
  auto plan = nlohmann::json::parse(fj).get<FoldPlan>();
  EXPECT_EQ(plan.folds, res.plan.folds);
  fs::remove_all(dir);
}

TEST(RunConfig, ParsesAndRoundTrips) {
  RunConfig rc;
  apply_json(rc, nlohmann::json::parse(R"({"folds": 3, "seed": 9, "train": {"epochs": 7, "lr": 0.001},
                                            "augment": {"probability": 0.25, "angles": [180]}})"));
  EXPECT_EQ(rc.folds, 3u);
  EXPECT_EQ(rc.seed, 9u);
  EXPECT_EQ(rc.train.epochs, 7u);
  EXPECT_EQ(rc.train.lr, 0.001);
  EXPECT_EQ(rc.train.batch_size, 32u);
  EXPECT_EQ(rc.train.augmentation.probability, 0.25);
  EXPECT_EQ(rc.train.augmentation.angles, std::vector<int>{180});
  EXPECT_EQ(rc.cv_config().train.seed, 9u);

  RunConfig back;
  apply_json(back, to_json(rc));
  EXPECT_EQ(to_json(back), to_json(rc));
}

TEST(RunConfig, RejectsUnknownKeysAndBadValues) {
  RunConfig rc;
  EXPECT_THROW(apply_json(rc, nlohmann::json::parse(R"({"fold": 3})")), ConfigError);
  EXPECT_THROW(apply_json(rc, nlohmann::json::parse(R"({"train": {"epoch": 3}})")), ConfigError);
  EXPECT_THROW(apply_json(rc, nlohmann::json::parse(R"({"folds": "five"})")), ConfigError);
  RunConfig bad;
  bad.folds = 1;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = RunConfig{};
  bad.train.augmentation.angles = {45};
  EXPECT_THROW(bad.validate(), ConfigError);
  EXPECT_THROW(load_run_config("/nonexistent/config.json"), ConfigError);
}

TEST(RunConfig, PositiveClassResolution) {
  auto ds = label_dataset({0, 1});
  EXPECT_EQ(resolve_positive_class("", ds), 1);
  EXPECT_EQ(resolve_positive_class("c0", ds), 0);
  EXPECT_THROW(resolve_positive_class("benign", ds), ConfigError);
}
