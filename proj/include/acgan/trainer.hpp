#pragma once

// Adversarial training of the auxiliary-classifier GAN.
//
// Likelihood objectives are minimised as negative log-likelihoods:
//   D: source BCE on real (target 1) and generated (target 0) halves, plus class
//      cross-entropy on both halves. Each term is the mean of its two halves.
//   G: class cross-entropy on its own images plus BCE of its images toward "real"
//      (the non-saturating form of maximising L_class - L_source).

#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "acgan/adam.hpp"
#include "acgan/augment.hpp"
#include "acgan/batches.hpp"
#include "acgan/dataset.hpp"
#include "acgan/loss.hpp"
#include "acgan/model.hpp"

namespace acgan {

struct TrainConfig {
  std::size_t epochs = 200;
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  std::size_t z_dim = 100;
  bool augment = true;
  AugmentConfig augmentation;
  // Verify update partitioning on every step (parameter snapshots before/after).
  bool check_invariants = false;
  // Number of leading step reports kept in the history.
  std::size_t keep_steps = 5;

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (batch_size < 2) throw std::invalid_argument("batch size must be >= 2 (batch norm)");
    if (!(lr > 0)) throw std::invalid_argument("learning rate must be positive");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1))
      throw std::invalid_argument("Adam betas must lie in [0, 1)");
    if (z_dim < 1) throw std::invalid_argument("z_dim must be >= 1");
    augmentation.validate();
  }
};

struct TrainingAborted : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvariantViolation : std::logic_error {
  using std::logic_error::logic_error;
};

struct StepReport {
  std::uint64_t step = 0;
  double loss_d = 0;
  double loss_g = 0;
  double d_real_acc = 0;  // real images judged real
  double d_fake_acc = 0;  // generated images judged generated
  double class_acc = 0;   // class head on the real half
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double loss_d = 0;
  double loss_g = 0;
  double d_real_acc = 0;
  double d_fake_acc = 0;
  double class_acc = 0;
};

struct History {
  std::vector<EpochRecord> epochs;
  std::vector<StepReport> first_steps;
  std::vector<std::size_t> trained_on;  // sorted unique dataset indices seen by training
};

inline void write_history_csv(std::ostream& os, const History& h) {
  os << "epoch,loss_D,loss_G,D_real_acc,D_fake_acc,class_acc\n";
  os << std::setprecision(9);
  for (const auto& e : h.epochs)
    os << e.epoch << ',' << e.loss_d << ',' << e.loss_g << ',' << e.d_real_acc << ',' << e.d_fake_acc << ','
       << e.class_acc << '\n';
}

template <typename T>
struct Optimizers {
  AdamState<T> disc;
  AdamState<T> gen;

  static Optimizers from(const TrainConfig& c) {
    return {AdamState<T>(T(c.lr), T(c.beta1), T(c.beta2), T(c.adam_epsilon)),
            AdamState<T>(T(c.lr), T(c.beta1), T(c.beta2), T(c.adam_epsilon))};
  }
};

namespace detail {

template <typename T>
void require_batch(const Tensor<T>& images, std::span<const int> labels, const char* what) {
  if (images.rank() != 4 || images.dim(0) != labels.size())
    throw DimensionError(std::string(what) + ": " + std::to_string(labels.size()) + " labels for images " +
                         shape_str(images.shape()));
}

}  // namespace detail

// -(L_class + L_source) for D. Generated images are detached from G here.
template <typename T>
Tensor<T> discriminator_loss(AcganModel<T>& model, const Tensor<T>& real, std::span<const int> real_labels,
                             const Tensor<T>& fake, std::span<const int> fake_labels, bool update_stats = false,
                             Discrimination<T>* real_out = nullptr, Discrimination<T>* fake_out = nullptr) {
  detail::require_batch(real, real_labels, "discriminator_loss real");
  detail::require_batch(fake, fake_labels, "discriminator_loss fake");
  if (real.dim(0) != fake.dim(0))
    throw DimensionError("discriminator_loss: real and generated batches differ in size (" +
                         std::to_string(real.dim(0)) + " vs " + std::to_string(fake.dim(0)) + ")");
  auto on_real = discriminate(model, real, NormMode::train, update_stats);
  auto on_fake = discriminate(model, fake.detach(), NormMode::train, false);
  const T half(0.5);
  auto source = scale(add(bce_with_logits(on_real.source_logit, T(1)), bce_with_logits(on_fake.source_logit, T(0))), half);
  auto klass = scale(add(softmax_cross_entropy(on_real.class_logits, real_labels),
                         softmax_cross_entropy(on_fake.class_logits, fake_labels)),
                     half);
  if (real_out) *real_out = on_real;
  if (fake_out) *fake_out = on_fake;
  return add(source, klass);
}

// Minimisation target for G on its own (live) images.
template <typename T>
Tensor<T> generator_loss(AcganModel<T>& model, const Tensor<T>& fake, std::span<const int> fake_labels,
                         Discrimination<T>* fake_out = nullptr) {
  detail::require_batch(fake, fake_labels, "generator_loss");
  auto on_fake = discriminate(model, fake, NormMode::train, false);
  if (fake_out) *fake_out = on_fake;
  return add(softmax_cross_entropy(on_fake.class_logits, fake_labels), bce_with_logits(on_fake.source_logit, T(1)));
}

namespace detail {

template <typename T>
double fraction(const Tensor<T>& logits, bool positive) {
  std::size_t hits = 0;
  for (T v : logits.data()) hits += positive ? (v > T(0)) : !(v > T(0));
  return static_cast<double>(hits) / static_cast<double>(logits.numel());
}

template <typename T>
double class_accuracy(const Tensor<T>& logits, std::span<const int> labels) {
  auto pred = argmax_rows(logits);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

}  // namespace detail

// One D update followed by one G update. G sees only D's outputs on its own images.
template <typename T>
StepReport train_step(AcganModel<T>& model, const Tensor<T>& real, std::span<const int> real_labels,
                      Optimizers<T>& opt, Rng& rng, bool check_invariants = false) {
  if (model.frozen()) throw FrozenError("train_step on a frozen model");
  detail::require_batch(real, real_labels, "train_step");
  const std::size_t n = real.dim(0);
  if (n < 2) throw std::invalid_argument("train_step needs a batch of at least 2 images");
  const std::size_t classes = model.num_classes();

  std::vector<int> fake_labels(n);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(classes) - 1);
  for (auto& y : fake_labels) y = pick(rng);
  Tensor<T> noise = sample_noise<T>(rng, n, model.gen_spec.z_dim);

  StepReport report;
  report.step = opt.disc.step + 1;

  model.gen.set_requires_grad(true);
  model.disc.set_requires_grad(true);
  Tensor<T> fake = generate(model, fake_labels, noise, NormMode::train, true);

  // D update.
  std::vector<T> gen_before, disc_before;
  if (check_invariants) {
    gen_before = model.gen.snapshot();
    disc_before = model.disc.snapshot();
  }
  Discrimination<T> d_real, d_fake;
  auto loss_d = discriminator_loss(model, real, real_labels, fake, fake_labels, true, &d_real, &d_fake);
  report.loss_d = static_cast<double>(loss_d.item());
  if (!std::isfinite(report.loss_d))
    throw TrainingAborted("non-finite discriminator loss at step " + std::to_string(report.step) +
                          " (loss_D=" + std::to_string(report.loss_d) + ")");
  report.d_real_acc = detail::fraction(d_real.source_logit, true);
  report.d_fake_acc = detail::fraction(d_fake.source_logit, false);
  report.class_acc = detail::class_accuracy(d_real.class_logits, real_labels);
  backward(loss_d);
  for (const auto& [name, t] : model.gen)
    if (t.has_grad()) throw InvariantViolation("discriminator loss reached generator parameter '" + name + "'");
  adam_step(model.disc, opt.disc);
  if (check_invariants) {
    if (model.gen.snapshot() != gen_before) throw InvariantViolation("D update modified generator parameters");
    if (model.disc.snapshot() == disc_before) throw InvariantViolation("D update left the discriminator unchanged");
    disc_before = model.disc.snapshot();
  }

  // G update through the freshly updated D; D's parameters record no gradient.
  model.disc.set_requires_grad(false);
  auto loss_g = generator_loss(model, fake, fake_labels);
  report.loss_g = static_cast<double>(loss_g.item());
  if (!std::isfinite(report.loss_g)) {
    model.disc.set_requires_grad(true);
    throw TrainingAborted("non-finite generator loss at step " + std::to_string(report.step) +
                          " (loss_D=" + std::to_string(report.loss_d) + ", loss_G=" + std::to_string(report.loss_g) +
                          ")");
  }
  backward(loss_g);
  model.disc.set_requires_grad(true);
  for (const auto& [name, t] : model.disc)
    if (t.has_grad()) throw InvariantViolation("generator loss produced a gradient for '" + name + "'");
  adam_step(model.gen, opt.gen);
  if (check_invariants) {
    if (model.disc.snapshot() != disc_before) throw InvariantViolation("G update modified discriminator parameters");
    if (model.gen.snapshot() == gen_before) throw InvariantViolation("G update left the generator unchanged");
  }
  return report;
}

using StepCallback = std::function<void(std::size_t epoch, const StepReport&)>;

// Runs config.epochs passes over `indices`; batch order comes from the "shuffle"
// substream, augmentation from "augment", G's noise and labels from "noise".
template <typename T>
History fit(AcganModel<T>& model, const Dataset& data, std::span<const std::size_t> indices,
            const TrainConfig& config, Optimizers<T>& opt, const StepCallback& on_step = {}) {
  if (config.epochs > 0) config.validate();
  if (indices.empty()) throw std::invalid_argument("fit() on an empty training set");
  if (data.num_classes() != model.num_classes())
    throw std::invalid_argument("dataset and model disagree on the class count");
  {
    std::vector<bool> present(model.num_classes(), false);
    for (auto i : indices) present.at(static_cast<std::size_t>(data.labels.at(i))) = true;
    if (std::count(present.begin(), present.end(), true) < 2)
      throw std::invalid_argument("training data contains a single class; need at least 2");
  }
  History history;
  Rng noise_rng = make_rng(config.seed, "noise");
  std::vector<bool> seen(data.size(), false);
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    BatchLoader<T> loader(data, indices, config.batch_size, derive_seed(config.seed, "shuffle", epoch),
                          config.augment ? &config.augmentation : nullptr,
                          derive_seed(config.seed, "augment", epoch));
    EpochRecord rec;
    rec.epoch = epoch;
    std::size_t steps = 0;
    while (auto batch = loader.next()) {
      for (auto i : batch->indices) seen[i] = true;
      StepReport r = train_step(model, batch->images, batch->labels, opt, noise_rng, config.check_invariants);
      if (history.first_steps.size() < config.keep_steps) history.first_steps.push_back(r);
      if (on_step) on_step(epoch, r);
      rec.loss_d += r.loss_d;
      rec.loss_g += r.loss_g;
      rec.d_real_acc += r.d_real_acc;
      rec.d_fake_acc += r.d_fake_acc;
      rec.class_acc += r.class_acc;
      ++steps;
    }
    if (steps == 0) throw std::invalid_argument("training set too small for one batch of 2");
    const double inv = 1.0 / static_cast<double>(steps);
    rec.loss_d *= inv;
    rec.loss_g *= inv;
    rec.d_real_acc *= inv;
    rec.d_fake_acc *= inv;
    rec.class_acc *= inv;
    history.epochs.push_back(rec);
  }
  for (std::size_t i = 0; i < seen.size(); ++i)
    if (seen[i]) history.trained_on.push_back(i);
  return history;
}

template <typename T>
History fit(AcganModel<T>& model, const Dataset& data, std::span<const std::size_t> indices,
            const TrainConfig& config, const StepCallback& on_step = {}) {
  auto opt = Optimizers<T>::from(config);
  return fit(model, data, indices, config, opt, on_step);
}

}  // namespace acgan
