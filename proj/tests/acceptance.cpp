// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
// Usage: acceptance [work_dir] [--skip-e2e]

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>

#include "test_util.hpp"

using namespace acgan;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool passed = true;
  std::string detail;
};

std::string fmt(double v, int precision = 3) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

Outcome metrics_oracle() {
  ConfusionMatrix cm{148, 1, 99, 2};
  auto m = metrics(cm);
  const std::string a = format_percent(m.accuracy), s = format_percent(m.sensitivity),
                    p = format_percent(m.specificity);
  return {a == "98.80" && s == "98.67" && p == "99.00", a + " / " + s + " / " + p};
}

Outcome gradient_suite() {
  GradCheckOptions opt;
  auto results = run_gradient_suite<double>(opt);
  Outcome o;
  double worst = 0;
  bool sweep = false;
  for (const auto& r : results) {
    worst = std::max(worst, r.max_rel_error);
    if (!r.passed || r.instances < 1 || (r.instances < 20 && r.op.find("sweep") == std::string::npos)) {
      o.passed = false;
      o.detail += r.op + " failed (" + fmt(r.max_rel_error) + "); ";
    }
    sweep = sweep || r.op == "discriminator_loss_sweep";
  }
  if (!sweep) {
    o.passed = false;
    o.detail += "no discriminator sweep; ";
  }
  o.detail += std::to_string(results.size()) + " ops, worst relative error " + fmt(worst);
  return o;
}

Outcome conv_oracles() {
  std::mt19937_64 rng(2024);
  using testutil::pick;
  double worst = 0, worst_dual = 0;
  for (int accepted = 0; accepted < 100;) {
    const std::size_t n = pick(rng, 1, 3), cin = pick(rng, 1, 4), cout = pick(rng, 1, 4);
    const std::size_t kh = pick(rng, 1, 5), s = pick(rng, 1, 3), p = pick(rng, 0, std::min<std::size_t>(2, kh - 1));
    const std::size_t oh = pick(rng, 1, 6), ow = pick(rng, 1, 6);
    // Input extent chosen so the transposed conv maps back to it exactly.
    const long hl = static_cast<long>((oh - 1) * s + kh) - 2 * static_cast<long>(p);
    const long wl = static_cast<long>((ow - 1) * s + kh) - 2 * static_cast<long>(p);
    const long up = static_cast<long>(std::min(hl, wl) - 1) * static_cast<long>(s) + static_cast<long>(kh) -
                    2 * static_cast<long>(p);
    if (hl < 1 || wl < 1 || up < 1) continue;
    ++accepted;
    const auto h = static_cast<std::size_t>(hl), w = static_cast<std::size_t>(wl);
    auto x = testutil::random_tensor<double>(rng, {n, cin, h, w});
    auto k = testutil::random_tensor<double>(rng, {cout, cin, kh, kh});
    auto b = testutil::random_tensor<double>(rng, {cout});
    auto y = conv2d(x, k, b, s, p);
    worst = std::max(worst, testutil::max_rel_diff(y.data(), testutil::conv2d_oracle(x, k, b, s, p)));

    auto tk = testutil::random_tensor<double>(rng, {cin, cout, kh, kh});
    auto tb = testutil::random_tensor<double>(rng, {cout});
    auto t = conv_transpose2d(x, tk, tb, s, p);
    worst = std::max(worst, testutil::max_rel_diff(t.data(), testutil::conv_transpose2d_oracle(x, tk, tb, s, p)));

    const std::size_t rows = pick(rng, 1, 5), f = pick(rng, 1, 40), g = pick(rng, 1, 10);
    auto lx = testutil::random_tensor<double>(rng, {rows, f});
    auto lw = testutil::random_tensor<double>(rng, {f, g});
    auto lb = testutil::random_tensor<double>(rng, {g});
    worst = std::max(worst, testutil::max_rel_diff(linear(lx, lw, lb).data(), testutil::matmul_oracle(lx, lw, lb)));

    // Adjoint duality: conv_transpose2d(r, k) is the input gradient of <conv2d(x, k), r>.
    auto xg = Tensor<double>::from_data(x.shape(), {x.data().begin(), x.data().end()}, true);
    auto r = testutil::random_tensor<double>(rng, y.shape());
    backward(sum(mul(conv2d(xg, k, Tensor<double>::zeros({cout}), s, p), r)));
    auto dual = conv_transpose2d(r, k, Tensor<double>::zeros({cin}), s, p);
    worst_dual = std::max(worst_dual, testutil::max_rel_diff(dual.data(), xg.grad()));
  }
  return {worst < 1e-6 && worst_dual < 1e-6,
          "worst relative error " + fmt(worst) + ", duality " + fmt(worst_dual) + " over 100 shapes"};
}

Outcome fold_properties() {
  std::mt19937_64 rng(77);
  using testutil::pick;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = pick(rng, 2, 400), k = pick(rng, 2, std::min<std::size_t>(n, 10));
    std::vector<int> labels(n);
    for (auto& y : labels) y = static_cast<int>(rng() % 2);
    auto plan = kfold_split(labels, k, rng());
    std::vector<int> hits(n, 0);
    std::size_t lo = n, hi = 0;
    for (const auto& fold : plan.folds) {
      lo = std::min(lo, fold.size());
      hi = std::max(hi, fold.size());
      for (auto i : fold) ++hits[i];
    }
    for (int h : hits)
      if (h != 1) return {false, "trial " + std::to_string(trial) + ": not a partition"};
    if (hi - lo > 1) return {false, "trial " + std::to_string(trial) + ": fold sizes differ by more than 1"};
    for (int c = 0; c < 2; ++c) {
      const auto total = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), c));
      for (const auto& fold : plan.folds) {
        std::size_t m = 0;
        for (auto i : fold) m += labels[i] == c;
        if (m < total / k || m > (total + k - 1) / k)
          return {false, "trial " + std::to_string(trial) + ": stratification off"};
      }
    }
  }
  std::vector<int> labels(250, 0);
  std::fill(labels.begin() + 100, labels.end(), 1);
  auto plan = kfold_split(labels, 5, 0);
  for (const auto& f : plan.folds)
    if (f.size() != 50) return {false, "250/5 fold of size " + std::to_string(f.size())};
  return {true, "200 random triples; 250 images -> 5 x 50"};
}

Outcome augmentation_contracts() {
  auto ds = synth_dataset(20, 16, 3);
  std::vector<std::size_t> all(ds.size());
  std::iota(all.begin(), all.end(), 0);
  auto same = [](const Tensor<float>& a, const Tensor<float>& b) {
    return std::equal(a.data().begin(), a.data().end(), b.data().begin(), b.data().end());
  };
  AugmentConfig off;
  off.probability = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    Rng rng(i);
    const auto& img = ds.images[i];
    if (!same(augment(img, off, rng), img)) return {false, "p=0 changed an image"};
    if (!same(hflip(hflip(img)), img)) return {false, "hflip is not an involution"};
    if (!same(rotate(rotate(rotate(rotate(img, 90), 90), 90), 90), img)) return {false, "4 x 90 rotation"};
  }
  // Test path: stacked images equal the stored ones bit for bit.
  auto stacked = stack_images<float>(ds, all);
  const std::size_t plane = 16 * 16;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (!std::equal(ds.images[i].data().begin(), ds.images[i].data().end(), stacked.data().begin() + i * plane))
      return {false, "test path altered an image"};
  // Cardinality: an augmented epoch yields each image exactly once and the dataset is untouched.
  const std::vector<float> before(ds.images[0].data().begin(), ds.images[0].data().end());
  AugmentConfig on;
  BatchLoader<float> loader(ds, all, 8, 1, &on, 2);
  std::vector<int> seen(ds.size(), 0);
  while (auto b = loader.next())
    for (auto i : b->indices) ++seen[i];
  for (int s : seen)
    if (s != 1) return {false, "augmented epoch changed cardinality"};
  if (ds.size() != 40 || !std::equal(before.begin(), before.end(), ds.images[0].data().begin())) return {false, "dataset modified"};
  return {true, "p=0 identity, involutions, test-path purity, 40 images per epoch"};
}

CvConfig paper_config(std::size_t epochs, std::size_t threads) {
  CvConfig cfg;
  cfg.folds = 5;
  cfg.seed = 2020;
  cfg.threads = threads;
  cfg.train.epochs = epochs;
  cfg.train.batch_size = 32;
  cfg.train.lr = 1e-4;
  cfg.train.beta1 = 0.5;
  cfg.train.seed = cfg.seed;
  return cfg;
}

Dataset e2e_dataset(const fs::path& work) {
  const auto dir = work / "synthetic";
  fs::remove_all(dir);
  save_directory(synth_dataset(150, 32, 2020), dir);
  return load_directory(dir);
}

Outcome determinism(const fs::path& work, const Dataset& ds) {
  auto cfg = paper_config(3, 1);
  std::vector<fs::path> dirs{work / "det_a", work / "det_b"};
  for (const auto& d : dirs) {
    fs::remove_all(d);
    write_cv_outputs(cross_validate(ds, cfg), ds, d);
  }
  std::vector<std::string> files{"metrics.csv"};
  for (int f = 1; f <= 5; ++f) files.push_back("steps_fold" + std::to_string(f) + ".csv");
  for (const auto& f : files) {
    const auto a = read_file(dirs[0] / f), b = read_file(dirs[1] / f);
    if (a.empty() || a != b) return {false, f + " differs between runs"};
  }
  std::ifstream steps(dirs[0] / "steps_fold1.csv");
  std::size_t lines = 0;
  for (std::string l; std::getline(steps, l);) ++lines;
  if (lines != 6) return {false, "expected 5 recorded steps, found " + std::to_string(lines - 1)};
  return {true, "metrics.csv and first 5 step losses identical for all 5 folds (3 epochs, 1 thread)"};
}

Outcome end_to_end(const fs::path& work, const Dataset& ds) {
  auto cfg = paper_config(50, 0);
  cfg.audit_invariants = true;
  cfg.measure_train_accuracy = true;
  auto result = cross_validate(ds, cfg);
  write_cv_outputs(result, ds, work / "e2e");
  std::ostringstream os;
  write_metrics_table(os, result.report);
  std::cout << os.str();
  Outcome o;
  std::size_t audits = 0;
  for (const auto& f : result.folds) {
    audits += f.outcome.audit.size();
    std::cout << "  fold " << f.task.fold + 1 << ": test " << format_percent(f.metrics.accuracy) << "%, train "
              << format_percent(f.outcome.train_accuracy) << "%";
    for (const auto& a : f.outcome.audit) std::cout << "; " << a;
    std::cout << '\n';
  }
  const double mean = *result.report.mean.accuracy;
  o.passed = mean >= 0.90 && audits == 3 * result.folds.size();
  o.detail = "mean accuracy " + fmt(mean, 4) + ", " + std::to_string(audits) + " invariant audits passed";
  return o;
}

Outcome objective_sanity() {
  auto m = testutil::tiny_model<double>(1);
  for (const char* name : {"class_head.weight", "class_head.bias", "source_head.weight", "source_head.bias"})
    for (auto& v : m.disc.at(name).mutable_data()) v = 0.0;
  auto ds = synth_dataset(2, 32, 1);
  auto real = stack_images<double>(ds, std::vector<std::size_t>{0, 1, 2, 3});
  std::vector<int> labels{0, 0, 1, 1}, fake_labels{1, 0, 0, 1};
  Rng rng(1);
  auto fake = generate(m, fake_labels, sample_noise<double>(rng, 4, m.gen_spec.z_dim), NormMode::train);
  const double ld = discriminator_loss(m, real, labels, fake, fake_labels).item();
  const double lg = generator_loss(m, fake, fake_labels).item();
  const double target = 2 * std::numbers::ln2;

  // Zero-gradient Adam step after some history leaves every parameter unchanged.
  ParamSet<double> ps;
  auto& p = ps.add("p", Tensor<double>::from_data({3}, {0.5, -1.0, 2.0}, true));
  AdamState<double> st;
  for (int i = 0; i < 3; ++i) {
    p.clear_grad();
    backward(sum(mul(p, p)));
    adam_step(ps, st);
  }
  const std::vector<double> before(p.data().begin(), p.data().end());
  p.clear_grad();
  backward(sum(scale(p, 0.0)));
  adam_step(ps, st);
  const bool noop = std::equal(before.begin(), before.end(), p.data().begin());
  return {std::abs(ld - target) < 1e-6 && std::abs(lg - target) < 1e-6 && noop,
          "D " + fmt(ld, 10) + ", G " + fmt(lg, 10) + " (2 ln 2 = " + fmt(target, 10) + "), zero-grad step " +
              (noop ? "no-op" : "moved parameters")};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = fs::temp_directory_path() / "acgan_acceptance";
  bool skip_e2e = false;
  for (int i = 1; i < argc; ++i) {
    std::string a = argv[i];
    if (a == "--skip-e2e")
      skip_e2e = true;
    else
      work = a;
  }
  fs::create_directories(work);

  int failures = 0;
  auto run = [&](int id, const std::string& name, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = body();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += !o.passed;
    std::cout << (o.passed ? "[PASS]" : "[FAIL]") << " criterion " << id << ": " << name << " (" << o.detail << "; "
              << fmt(secs) << " s)" << std::endl;
  };

  run(1, "metrics oracle", metrics_oracle);
  run(2, "gradient suite", gradient_suite);
  run(3, "convolution oracles", conv_oracles);
  run(4, "fold-plan properties", fold_properties);
  run(5, "augmentation contracts", augmentation_contracts);
  Dataset ds;
  try {
    ds = e2e_dataset(work);
  } catch (const std::exception& e) {
    std::cout << "synthetic dataset: " << e.what() << '\n';
  }
  run(6, "determinism", [&] { return determinism(work, ds); });
  if (skip_e2e)
    std::cout << "[SKIP] criterion 7: hermetic end-to-end\n";
  else
    run(7, "hermetic end-to-end", [&] { return end_to_end(work, ds); });
  run(8, "objective sanity", objective_sanity);
  std::cout << (failures ? std::to_string(failures) + " criteria failed" : "all criteria passed") << std::endl;
  return failures ? 1 : 0;
}
