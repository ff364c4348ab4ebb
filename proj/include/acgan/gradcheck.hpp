#pragma once

// Central finite-difference checks of every differentiable op.
//
// Vector-valued ops are reduced to a scalar through a fixed random projection,
// f(x) = sum(op(x) * R). The error is norm-wise,
//   |g_analytic - g_numeric| / max(|g_analytic| + |g_numeric|, 1e-8),
// and an op's score is the worst over all sampled instances.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "acgan/batchnorm.hpp"
#include "acgan/conv.hpp"
#include "acgan/loss.hpp"
#include "acgan/model.hpp"
#include "acgan/ops.hpp"
#include "acgan/trainer.hpp"

namespace acgan {

struct GradCheckResult {
  std::string op;
  std::size_t instances = 0;
  double max_rel_error = 0;
  bool passed = false;
};

struct GradCheckOptions {
  std::size_t instances = 20;
  double step = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 20200101;
  bool include_model_sweeps = true;
};

template <typename T>
double relative_error(std::span<const T> analytic, std::span<const T> numeric) {
  double diff = 0, na = 0, nn = 0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i], n = numeric[i];
    diff += (a - n) * (a - n);
    na += a * a;
    nn += n * n;
  }
  return std::sqrt(diff) / std::max(std::sqrt(na) + std::sqrt(nn), 1e-8);
}

// Relative error between backward() and central differences of `f`, over all leaves
// concatenated. Pooling keeps gradients that are zero by construction (e.g. a conv bias
// feeding batch norm) from turning round-off into a large ratio.
template <typename T>
double gradient_error(std::vector<Tensor<T>> leaves, const std::function<Tensor<T>()>& f, double step) {
  for (auto& l : leaves) {
    l.set_requires_grad(true);
    l.clear_grad();
  }
  backward(f());
  std::vector<T> analytic, numeric;
  for (auto& l : leaves) {
    if (l.has_grad())
      analytic.insert(analytic.end(), l.grad().begin(), l.grad().end());
    else
      analytic.insert(analytic.end(), l.numel(), T(0));
    l.clear_grad();
  }
  for (auto& l : leaves) {
    auto values = l.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const T saved = values[i];
      values[i] = saved + static_cast<T>(step);
      const double up = f().item();
      values[i] = saved - static_cast<T>(step);
      const double down = f().item();
      values[i] = saved;
      numeric.push_back(static_cast<T>((up - down) / (2 * step)));
    }
  }
  return relative_error<T>(analytic, numeric);
}

namespace detail {

template <typename T>
Tensor<T> random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0, double keep_from_zero = 0.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) {
    double s;
    do s = u(rng);
    while (std::abs(s) < keep_from_zero);
    x = static_cast<T>(s);
  }
  return Tensor<T>::from_data(std::move(shape), std::move(v));
}

template <typename T>
Tensor<T> project(const Tensor<T>& out, const Tensor<T>& r) {
  return sum(mul(out, r));
}

inline std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

}  // namespace detail

// Runs `instances` random cases of one op through gradient_error.
// `make_case` returns the leaves and the scalar function over them.
template <typename T>
GradCheckResult check_op(const std::string& name, const GradCheckOptions& opt,
                         const std::function<std::pair<std::vector<Tensor<T>>, std::function<Tensor<T>()>>(Rng&)>&
                             make_case,
                         std::size_t instances) {
  Rng rng = make_rng(opt.seed, name);
  GradCheckResult r{name, instances, 0.0, false};
  for (std::size_t i = 0; i < instances; ++i) {
    auto [leaves, f] = make_case(rng);
    r.max_rel_error = std::max(r.max_rel_error, gradient_error<T>(leaves, f, opt.step));
  }
  r.passed = r.max_rel_error < opt.tolerance;
  return r;
}

// Default-shaped 64x64 ACGAN with narrow channels, for parameter sweeps.
template <typename T>
AcganModel<T> small_gradcheck_model(std::uint64_t seed) {
  GeneratorSpec g;
  g.z_dim = 6;
  g.num_classes = 2;
  g.image_size = 64;
  g.channels = {4, 3, 3, 2};
  DiscriminatorSpec d = DiscriminatorSpec::defaults(64, 2);
  const std::size_t widths[] = {3, 4, 4, 4, 4};
  for (std::size_t i = 0; i < d.convs.size(); ++i) d.convs[i].out_channels = widths[i];
  auto model = make_model<T>(g, d, seed);
  // Wider than the training init so gradients are well away from round-off.
  Rng rng = make_rng(seed, "gradcheck-init");
  std::normal_distribution<T> dist(T(0), T(0.3));
  for (auto* set : {&model.gen, &model.disc})
    for (auto& [name, t] : *set)
      if (name.find("weight") != std::string::npos)
        for (auto& v : t.mutable_data()) v = dist(rng);
  return model;
}

template <typename T = double>
std::vector<GradCheckResult> run_gradient_suite(const GradCheckOptions& opt = {}) {
  using Case = std::pair<std::vector<Tensor<T>>, std::function<Tensor<T>()>>;
  using detail::pick;
  using detail::random_tensor;
  std::vector<GradCheckResult> results;
  const std::size_t n = opt.instances;

  results.push_back(check_op<T>("add", opt, [](Rng& rng) -> Case {
    Shape s{pick(rng, 1, 4), pick(rng, 1, 5)};
    auto a = random_tensor<T>(rng, s), b = random_tensor<T>(rng, s), r = random_tensor<T>(rng, s);
    return {{a, b}, [=] { return detail::project(add(a, b), r); }};
  }, n));

  results.push_back(check_op<T>("mul", opt, [](Rng& rng) -> Case {
    Shape s{pick(rng, 1, 4), pick(rng, 1, 5)};
    auto a = random_tensor<T>(rng, s), b = random_tensor<T>(rng, s), r = random_tensor<T>(rng, s);
    return {{a, b}, [=] { return detail::project(mul(a, b), r); }};
  }, n));

  results.push_back(check_op<T>("concat_features", opt, [](Rng& rng) -> Case {
    const std::size_t rows = pick(rng, 1, 4);
    auto a = random_tensor<T>(rng, {rows, pick(rng, 1, 4)}), b = random_tensor<T>(rng, {rows, pick(rng, 1, 4)});
    auto r = random_tensor<T>(rng, {rows, a.dim(1) + b.dim(1)});
    return {{a, b}, [=] { return detail::project(concat_features(a, b), r); }};
  }, n));

  results.push_back(check_op<T>("reshape", opt, [](Rng& rng) -> Case {
    auto a = random_tensor<T>(rng, {pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 1, 3)});
    auto r = random_tensor<T>(rng, {a.dim(0), a.numel() / a.dim(0)});
    return {{a}, [=] { return detail::project(flatten(a), r); }};
  }, n));

  results.push_back(check_op<T>("linear", opt, [](Rng& rng) -> Case {
    const std::size_t rows = pick(rng, 1, 4), f = pick(rng, 1, 6), g = pick(rng, 1, 5);
    auto x = random_tensor<T>(rng, {rows, f}), w = random_tensor<T>(rng, {f, g}), b = random_tensor<T>(rng, {g});
    auto r = random_tensor<T>(rng, {rows, g});
    return {{x, w, b}, [=] { return detail::project(linear(x, w, b), r); }};
  }, n));

  results.push_back(check_op<T>("leaky_relu", opt, [kink = 4 * opt.step](Rng& rng) -> Case {
    Shape s{pick(rng, 1, 4), pick(rng, 1, 6)};
    auto x = random_tensor<T>(rng, s, -1, 1, std::max(1e-3, kink)), r = random_tensor<T>(rng, s);
    return {{x}, [=] { return detail::project(leaky_relu(x, T(0.2)), r); }};
  }, n));

  results.push_back(check_op<T>("relu", opt, [kink = 4 * opt.step](Rng& rng) -> Case {
    Shape s{pick(rng, 1, 4), pick(rng, 1, 6)};
    auto x = random_tensor<T>(rng, s, -1, 1, std::max(1e-3, kink)), r = random_tensor<T>(rng, s);
    return {{x}, [=] { return detail::project(relu(x), r); }};
  }, n));

  results.push_back(check_op<T>("tanh", opt, [](Rng& rng) -> Case {
    Shape s{pick(rng, 1, 4), pick(rng, 1, 6)};
    auto x = random_tensor<T>(rng, s, -2, 2), r = random_tensor<T>(rng, s);
    return {{x}, [=] { return detail::project(tanh(x), r); }};
  }, n));

  results.push_back(check_op<T>("conv2d", opt, [](Rng& rng) -> Case {
    const std::size_t batch = pick(rng, 1, 2), cin = pick(rng, 1, 3), cout = pick(rng, 1, 3);
    const std::size_t k = pick(rng, 1, 3), stride = pick(rng, 1, 2), pad = pick(rng, 0, 1);
    const std::size_t h = pick(rng, k, 6), w = pick(rng, k, 6);
    auto x = random_tensor<T>(rng, {batch, cin, h, w}), ker = random_tensor<T>(rng, {cout, cin, k, k});
    auto b = random_tensor<T>(rng, {cout});
    auto r = random_tensor<T>(rng, conv2d(x, ker, b, stride, pad).shape());
    return {{x, ker, b}, [=] { return detail::project(conv2d(x, ker, b, stride, pad), r); }};
  }, n));

  results.push_back(check_op<T>("conv_transpose2d", opt, [](Rng& rng) -> Case {
    const std::size_t batch = pick(rng, 1, 2), cin = pick(rng, 1, 3), cout = pick(rng, 1, 3);
    const std::size_t k = pick(rng, 2, 4), stride = pick(rng, 1, 2), pad = pick(rng, 0, 1);
    const std::size_t h = pick(rng, 1, 4), w = pick(rng, 1, 4);
    auto x = random_tensor<T>(rng, {batch, cin, h, w}), ker = random_tensor<T>(rng, {cin, cout, k, k});
    auto b = random_tensor<T>(rng, {cout});
    auto r = random_tensor<T>(rng, conv_transpose2d(x, ker, b, stride, pad).shape());
    return {{x, ker, b}, [=] { return detail::project(conv_transpose2d(x, ker, b, stride, pad), r); }};
  }, n));

  results.push_back(check_op<T>("batchnorm2d_train", opt, [](Rng& rng) -> Case {
    const std::size_t batch = pick(rng, 2, 3), c = pick(rng, 1, 3), h = pick(rng, 1, 3), w = pick(rng, 2, 3);
    auto x = random_tensor<T>(rng, {batch, c, h, w}, -2, 2);
    auto g = random_tensor<T>(rng, {c}, 0.5, 1.5), b = random_tensor<T>(rng, {c});
    auto r = random_tensor<T>(rng, x.shape());
    return {{x, g, b}, [=] { return detail::project(batchnorm2d(x, g, b, NormMode::train, static_cast<RunningStats<T>*>(nullptr)), r); }};
  }, n));

  results.push_back(check_op<T>("batchnorm2d_eval", opt, [](Rng& rng) -> Case {
    const std::size_t batch = pick(rng, 1, 3), c = pick(rng, 1, 3), h = pick(rng, 1, 3), w = pick(rng, 1, 3);
    auto x = random_tensor<T>(rng, {batch, c, h, w}, -2, 2);
    auto g = random_tensor<T>(rng, {c}, 0.5, 1.5), b = random_tensor<T>(rng, {c});
    auto stats = std::make_shared<RunningStats<T>>(c);
    for (std::size_t i = 0; i < c; ++i) {
      stats->mean[i] = static_cast<T>(std::uniform_real_distribution<double>(-0.5, 0.5)(rng));
      stats->var[i] = static_cast<T>(std::uniform_real_distribution<double>(0.5, 2.0)(rng));
    }
    auto r = random_tensor<T>(rng, x.shape());
    return {{x, g, b}, [=] { return detail::project(batchnorm2d(x, g, b, NormMode::eval, stats.get()), r); }};
  }, n));

  results.push_back(check_op<T>("softmax_cross_entropy", opt, [](Rng& rng) -> Case {
    const std::size_t rows = pick(rng, 1, 5), c = pick(rng, 2, 5);
    auto logits = random_tensor<T>(rng, {rows, c}, -3, 3);
    std::vector<int> labels(rows);
    for (auto& y : labels) y = static_cast<int>(pick(rng, 0, c - 1));
    return {{logits}, [=] { return softmax_cross_entropy(logits, std::span<const int>(labels)); }};
  }, n));

  results.push_back(check_op<T>("bce_with_logits", opt, [](Rng& rng) -> Case {
    const std::size_t rows = pick(rng, 1, 6);
    auto logits = random_tensor<T>(rng, {rows}, -4, 4);
    std::vector<T> targets(rows);
    for (auto& t : targets) t = static_cast<T>(pick(rng, 0, 1));
    return {{logits}, [=] { return bce_with_logits(logits, std::span<const T>(targets)); }};
  }, n));

  if (opt.include_model_sweeps) {
    // Every discriminator parameter under the full D objective on a 2-image batch.
    results.push_back(check_op<T>("discriminator_loss_sweep", opt, [](Rng& rng) -> Case {
      auto model = std::make_shared<AcganModel<T>>(small_gradcheck_model<T>(rng()));
      auto real = random_tensor<T>(rng, {2, 1, 64, 64}), fake = random_tensor<T>(rng, {2, 1, 64, 64});
      std::vector<int> real_labels{0, 1}, fake_labels{1, 0};
      std::vector<Tensor<T>> leaves;
      for (auto& [name, t] : model->disc) leaves.push_back(t);
      return {leaves, [=] { return discriminator_loss(*model, real, real_labels, fake, fake_labels); }};
    }, 1));

    // Every generator parameter under the G objective.
    results.push_back(check_op<T>("generator_loss_sweep", opt, [](Rng& rng) -> Case {
      auto model = std::make_shared<AcganModel<T>>(small_gradcheck_model<T>(rng()));
      model->disc.set_requires_grad(false);
      auto noise = random_tensor<T>(rng, {2, model->gen_spec.z_dim});
      std::vector<int> labels{1, 0};
      std::vector<Tensor<T>> leaves;
      for (auto& [name, t] : model->gen) leaves.push_back(t);
      return {leaves, [=] {
                auto fake = generate(*model, labels, noise, NormMode::train, false);
                return generator_loss(*model, fake, labels);
              }};
    }, 1));
  }
  return results;
}

}  // namespace acgan
