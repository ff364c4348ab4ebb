// acgan: synthetic data, k-fold evaluation, training, classification, sampling and
// gradient checks from one binary. Exit codes: 0 ok, 1 runtime failure, 2 usage error.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "acgan/acgan.hpp"

namespace fs = std::filesystem;
using namespace acgan;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flags shared by cross-validate and train; applied on top of the config file.
struct Overrides {
  std::string config, data, out;
  std::size_t image_size = 0, folds = 0, epochs = 0, batch_size = 0, threads = 0, z_dim = 0;
  std::uint64_t seed = 0;
  double lr = 0, beta1 = 0, augment_p = 0;
  bool no_augment = false, stratified = true, audit = false;
  std::string positive;
  std::vector<std::function<void(RunConfig&)>> setters;

  template <typename V>
  void option(CLI::App* cmd, const std::string& flag, V& target, const std::string& help,
              std::function<void(RunConfig&, const V&)> apply) {
    CLI::Option* opt = cmd->add_option(flag, target, help);
    setters.push_back([opt, &target, apply](RunConfig& rc) {
      if (opt->count()) apply(rc, target);
    });
  }

  void flag(CLI::App* cmd, const std::string& name, bool& target, const std::string& help,
            std::function<void(RunConfig&, bool)> apply) {
    CLI::Option* opt = cmd->add_flag(name, target, help);
    setters.push_back([opt, &target, apply](RunConfig& rc) {
      if (opt->count()) apply(rc, target);
    });
  }

  void attach(CLI::App* cmd, bool with_folds) {
    cmd->add_option("--config", config, "JSON run configuration (flags override it)");
    option<std::string>(cmd, "--data", data, "dataset root: one subdirectory per class",
                        [](RunConfig& rc, const std::string& v) { rc.data = v; });
    option<std::string>(cmd, "--out", out, "output directory",
                        [](RunConfig& rc, const std::string& v) { rc.out = v; });
    option<std::size_t>(cmd, "--image-size", image_size, "resample images to this square size (default: native)",
                        [](RunConfig& rc, const std::size_t& v) { rc.image_size = v; });
    option<std::size_t>(cmd, "--epochs", epochs, "training epochs",
                        [](RunConfig& rc, const std::size_t& v) { rc.train.epochs = v; });
    option<std::size_t>(cmd, "--batch-size", batch_size, "minibatch size",
                        [](RunConfig& rc, const std::size_t& v) { rc.train.batch_size = v; });
    option<std::size_t>(cmd, "--z-dim", z_dim, "generator noise dimension",
                        [](RunConfig& rc, const std::size_t& v) { rc.train.z_dim = v; });
    option<double>(cmd, "--lr", lr, "Adam learning rate", [](RunConfig& rc, const double& v) { rc.train.lr = v; });
    option<double>(cmd, "--beta1", beta1, "Adam beta1", [](RunConfig& rc, const double& v) { rc.train.beta1 = v; });
    option<double>(cmd, "--augment-p", augment_p, "per-transform augmentation probability",
                   [](RunConfig& rc, const double& v) { rc.train.augmentation.probability = v; });
    flag(cmd, "--no-augment", no_augment, "disable on-the-fly augmentation",
         [](RunConfig& rc, bool v) { rc.train.augment = !v; });
    option<std::uint64_t>(cmd, "--seed", seed, "root seed",
                          [](RunConfig& rc, const std::uint64_t& v) { rc.seed = v; });
    flag(cmd, "--audit", audit, "assert structural training invariants during the run",
         [](RunConfig& rc, bool v) { rc.audit = v; });
    if (!with_folds) return;
    option<std::size_t>(cmd, "--folds", folds, "number of folds",
                        [](RunConfig& rc, const std::size_t& v) { rc.folds = v; });
    option<std::size_t>(cmd, "--threads", threads, "folds trained in parallel (0: available cores)",
                        [](RunConfig& rc, const std::size_t& v) { rc.threads = v; });
    flag(cmd, "!--unstratified", stratified, "plain shuffled folds instead of stratified ones",
         [](RunConfig& rc, bool v) { rc.stratified = v; });
    option<std::string>(cmd, "--positive-class", positive, "class reported as positive (default: malignant)",
                        [](RunConfig& rc, const std::string& v) { rc.positive_class = v; });
  }

  RunConfig resolve() const {
    RunConfig rc;
    if (!config.empty()) {
      if (!fs::is_regular_file(config)) throw UsageError("config file not found: " + config);
      rc = load_run_config(config);
    }
    for (const auto& set : setters) set(rc);
    if (rc.data.empty()) throw UsageError("--data is required");
    if (rc.out.empty()) throw UsageError("--out is required");
    if (!fs::is_directory(rc.data)) throw UsageError("data directory not found: " + rc.data);
    if (rc.train.epochs == 0) throw UsageError("--epochs must be >= 1");
    rc.validate();
    return rc;
  }
};

void echo_config(const RunConfig& rc, const fs::path& dir) {
  std::ofstream os(dir / "config.json");
  os << to_json(rc).dump(2) << '\n';
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int cmd_synth(const fs::path& out, std::size_t per_class, std::size_t size, std::uint64_t seed, bool force) {
  if (fs::exists(out) && !fs::is_directory(out)) throw UsageError(out.string() + " exists and is not a directory");
  if (fs::is_directory(out) && !fs::is_empty(out)) {
    if (!force) throw UsageError(out.string() + " is not empty; pass --force to overwrite");
    // Only previously generated class folders are cleared.
    for (const auto& name : {"benign", "malignant"}) fs::remove_all(out / name);
  }
  Dataset ds = synth_dataset(per_class, size, seed);
  save_directory(ds, out);
  std::cout << "wrote " << ds.size() << " images (" << per_class << " per class, " << size << "x" << size << ") to "
            << out.string() << '\n';
  return 0;
}

int cmd_cross_validate(const Overrides& ov) {
  RunConfig rc = ov.resolve();
  Dataset data = load_directory(rc.data, rc.image_size);
  CvConfig cv = rc.cv_config();
  cv.positive_class = resolve_positive_class(rc.positive_class, data);
  cv.measure_train_accuracy = true;
  const fs::path out = rc.out;
  cv.checkpoint_dir = out / "checkpoints";
  fs::create_directories(out);
  echo_config(rc, out);

  std::cerr << "cross-validate: " << data.size() << " images, " << data.num_classes() << " classes, " << rc.folds
            << " folds, epochs per fold: " << rc.train.epochs << "\n";
  const auto t0 = std::chrono::steady_clock::now();
  FoldRunner base = acgan_fold_runner<float>(cv);
  std::mutex log_mutex;
  CvResult result = cross_validate(data, cv, [&](const Dataset& d, const FoldTask& task) {
    FoldOutcome o = base(d, task);
    std::lock_guard lock(log_mutex);
    std::cerr << "  fold " << task.fold + 1 << " done (" << std::fixed << std::setprecision(1) << seconds_since(t0)
              << " s)";
    if (o.train_accuracy) std::cerr << ", train accuracy " << format_percent(o.train_accuracy) << "%";
    for (const auto& line : o.audit) std::cerr << "\n    " << line;
    std::cerr << '\n';
    return o;
  });
  write_cv_outputs(result, data, out);
  write_metrics_table(std::cout, result.report);
  std::cout << "positive class: " << data.class_names[result.positive_class] << "; outputs in " << out.string()
            << '\n';
  return 0;
}

int cmd_train(const Overrides& ov) {
  RunConfig rc = ov.resolve();
  Dataset data = load_directory(rc.data, rc.image_size);
  TrainConfig train = rc.train;
  train.seed = rc.seed;
  train.check_invariants = rc.audit;
  auto model = make_model<float>(GeneratorSpec::defaults(data.image_size, data.num_classes(), train.z_dim),
                                 DiscriminatorSpec::defaults(data.image_size, data.num_classes()),
                                 derive_seed(rc.seed, "init"));
  model.class_names = data.class_names;
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), std::size_t{0});

  const fs::path out = rc.out;
  fs::create_directories(out);
  echo_config(rc, out);
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t last_epoch = 0;
  History history = fit(model, data, all, train, [&](std::size_t epoch, const StepReport&) {
    if (epoch != last_epoch && epoch > 1)
      std::cerr << "  epoch " << epoch - 1 << " done (" << std::fixed << std::setprecision(1) << seconds_since(t0)
                << " s)\n";
    last_epoch = epoch;
  });
  std::cerr << "  epoch " << train.epochs << " done (" << std::fixed << std::setprecision(1) << seconds_since(t0)
            << " s)\n";
  model.freeze();
  save_model(model, out / "model");
  {
    std::ofstream os(out / "history.csv");
    write_history_csv(os, history);
  }
  const auto& last = history.epochs.back();
  std::cout << "trained on " << data.size() << " images for " << train.epochs << " epoch(s); final loss_D "
            << last.loss_d << ", loss_G " << last.loss_g << ", class accuracy " << last.class_acc << "\n"
            << "checkpoint: " << (out / "model").string() << '\n';
  return 0;
}

std::vector<std::pair<std::string, fs::path>> collect_inputs(const std::vector<std::string>& inputs) {
  std::vector<std::pair<std::string, fs::path>> files;
  for (const auto& in : inputs) {
    const fs::path p = in;
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::recursive_directory_iterator(p))
        if (e.is_regular_file() && is_image_file(e.path())) found.push_back(e.path());
      std::sort(found.begin(), found.end());
      for (const auto& f : found) files.emplace_back(fs::relative(f, p).generic_string(), f);
    } else if (fs::is_regular_file(p)) {
      files.emplace_back(p.filename().string(), p);
    } else {
      throw UsageError("input not found: " + in);
    }
  }
  return files;
}

int cmd_classify(const fs::path& model_dir, const std::vector<std::string>& inputs) {
  if (!fs::is_directory(model_dir)) throw UsageError("checkpoint directory not found: " + model_dir.string());
  const auto files = collect_inputs(inputs);
  AcganModel<float> model = load_model<float>(model_dir);
  model.freeze();
  const std::size_t s = model.disc_spec.image_size;
  for (const auto& [name, path] : files) {
    GrayImage img = read_image(path);
    if (img.width != s || img.height != s)
      throw DimensionError("image " + path.string() + " is " + std::to_string(img.width) + "x" +
                           std::to_string(img.height) + " but the checkpoint expects " + std::to_string(s) + "x" +
                           std::to_string(s));
    const Tensor<float> t = image_to_tensor(img, s);
    auto batch = Tensor<float>::from_data({1, 1, s, s}, std::vector<float>(t.data().begin(), t.data().end()));
    const int label = classify(model, batch).front();
    std::cout << name << ',' << model.class_names.at(static_cast<std::size_t>(label)) << '\n';
  }
  return 0;
}

int cmd_generate(const fs::path& model_dir, const fs::path& out, std::size_t per_class, std::uint64_t seed) {
  if (!fs::is_directory(model_dir)) throw UsageError("checkpoint directory not found: " + model_dir.string());
  AcganModel<float> model = load_model<float>(model_dir);
  model.freeze();
  fs::create_directories(out);
  Rng rng = make_rng(seed, "noise");
  std::size_t written = 0;
  for (std::size_t c = 0; c < model.num_classes(); ++c) {
    std::vector<int> labels(per_class, static_cast<int>(c));
    auto images = generate(model, labels, sample_noise<float>(rng, per_class, model.gen_spec.z_dim));
    const std::size_t plane = images.numel() / per_class, s = model.gen_spec.image_size;
    for (std::size_t i = 0; i < per_class; ++i) {
      const auto px = images.data().subspan(i * plane, plane);
      auto img = tensor_to_image(Tensor<float>::from_data({1, s, s}, std::vector<float>(px.begin(), px.end())));
      write_png(out / ("class_" + std::to_string(c) + "_" + std::to_string(i) + ".png"), img);
      ++written;
    }
  }
  std::cout << "wrote " << written << " images to " << out.string() << '\n';
  return 0;
}

int cmd_grad_check(std::size_t instances, double tolerance, std::uint64_t seed) {
  GradCheckOptions opt;
  opt.instances = instances;
  opt.tolerance = tolerance;
  opt.seed = seed;
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  std::cout << std::left << std::setw(26) << "op" << std::setw(11) << "instances" << std::setw(16)
            << "max_rel_error" << "result\n";
  for (const auto& r : run_gradient_suite<double>(opt)) {
    ok = ok && r.passed;
    std::cout << std::left << std::setw(26) << r.op << std::setw(11) << r.instances << std::setw(16)
              << std::scientific << std::setprecision(3) << r.max_rel_error << (r.passed ? "pass" : "FAIL") << '\n';
  }
  std::cout << std::defaultfloat << "tolerance " << tolerance << ", " << std::fixed << std::setprecision(1)
            << seconds_since(t0) << " s\n";
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ACGAN small-dataset image classifier"};
  app.require_subcommand(1);

  std::string synth_out;
  std::size_t synth_per_class = 150, synth_size = 64;
  std::uint64_t synth_seed = 0;
  bool synth_force = false;
  auto* synth = app.add_subcommand("synth-data", "write the two-class synthetic dataset");
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--per-class", synth_per_class, "images per class")->check(CLI::Range(std::size_t{1}, std::size_t{1000000}));
  synth->add_option("--size", synth_size, "image side length")->check(CLI::Range(8, 4096));
  synth->add_option("--seed", synth_seed, "root seed");
  synth->add_flag("--force", synth_force, "overwrite an existing dataset directory");

  Overrides cv_flags, train_flags;
  auto* cv = app.add_subcommand("cross-validate", "k-fold train/evaluate; writes metrics, histories, checkpoints");
  cv_flags.attach(cv, true);
  auto* train = app.add_subcommand("train", "fit on a whole dataset directory and write a checkpoint");
  train_flags.attach(train, false);

  std::string classify_model;
  std::vector<std::string> classify_inputs;
  auto* cls = app.add_subcommand("classify", "print <filename>,<class_name> for each image");
  cls->add_option("--model", classify_model, "checkpoint directory")->required();
  cls->add_option("inputs", classify_inputs, "image files or directories")->required();

  std::string gen_model, gen_out;
  std::size_t gen_per_class = 4;
  std::uint64_t gen_seed = 0;
  auto* gen = app.add_subcommand("generate", "sample class_<c>_<i>.png images from a checkpoint");
  gen->add_option("--model", gen_model, "checkpoint directory")->required();
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--per-class", gen_per_class, "images per class")->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "noise seed");

  std::size_t gc_instances = 20;
  double gc_tolerance = 1e-4;
  std::uint64_t gc_seed = GradCheckOptions{}.seed;
  auto* gc = app.add_subcommand("grad-check", "finite-difference check of every differentiable op (64-bit)");
  gc->add_option("--instances", gc_instances, "random instances per op")->check(CLI::PositiveNumber);
  gc->add_option("--tolerance", gc_tolerance, "maximum relative error");
  gc->add_option("--seed", gc_seed, "seed for the random instances");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*synth) return cmd_synth(synth_out, synth_per_class, synth_size, synth_seed, synth_force);
    if (*cv) return cmd_cross_validate(cv_flags);
    if (*train) return cmd_train(train_flags);
    if (*cls) return cmd_classify(classify_model, classify_inputs);
    if (*gen) return cmd_generate(gen_model, gen_out, gen_per_class, gen_seed);
    if (*gc) return cmd_grad_check(gc_instances, gc_tolerance, gc_seed);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
