#pragma once

// Generator G and discriminator D of the auxiliary-classifier GAN.
//
// G: [z ; one-hot(y)] -> linear -> 4x4 feature map -> BN/ReLU ->
//    (transposed conv k4 s2 p1 -> BN/ReLU)* -> transposed conv to 1 channel -> tanh.
// D: 5 conv stages (BN after every stage but the first, leaky ReLU 0.2) feeding a
//    shared flat feature vector read by two linear heads: class (C logits) and
//    source (1 logit, real vs. generated).

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "acgan/batchnorm.hpp"
#include "acgan/checkpoint.hpp"
#include "acgan/conv.hpp"
#include "acgan/ops.hpp"
#include "acgan/param_set.hpp"
#include "acgan/rng.hpp"

namespace acgan {

struct ModelError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct GeneratorSpec {
  std::size_t z_dim = 100;
  std::size_t num_classes = 2;
  std::size_t image_size = 64;
  // Feature channels at 4x4, 8x8, ...; one entry per upsampling stage.
  std::vector<std::size_t> channels{256, 128, 64, 32};

  static GeneratorSpec defaults(std::size_t image_size, std::size_t num_classes, std::size_t z_dim = 100) {
    GeneratorSpec spec;
    spec.z_dim = z_dim;
    spec.num_classes = num_classes;
    spec.image_size = image_size;
    spec.channels.clear();
    const std::size_t stages = upsampling_stages(image_size);
    for (std::size_t i = 0; i < stages; ++i) spec.channels.push_back(std::size_t{32} << (stages - 1 - i));
    return spec;
  }

  // image_size = 4 * 2^stages
  static std::size_t upsampling_stages(std::size_t image_size) {
    std::size_t stages = 0, s = 4;
    while (s < image_size) {
      s *= 2;
      ++stages;
    }
    if (s != image_size || stages == 0)
      throw ModelError("generator image size must be 4*2^k with k >= 1, got " + std::to_string(image_size));
    return stages;
  }

  void validate() const {
    if (z_dim < 1) throw ModelError("z_dim must be >= 1");
    if (num_classes < 2) throw ModelError("need at least 2 classes");
    if (channels.size() != upsampling_stages(image_size))
      throw ModelError("generator needs one channel entry per upsampling stage");
    for (auto c : channels)
      if (c == 0) throw ModelError("generator channel counts must be positive");
  }
};

struct ConvStage {
  std::size_t out_channels;
  std::size_t kernel;
  std::size_t stride;
  std::size_t padding;
};

struct DiscriminatorSpec {
  std::size_t image_size = 64;
  std::size_t num_classes = 2;
  std::vector<ConvStage> convs{{32, 4, 2, 1}, {64, 4, 2, 1}, {128, 4, 2, 1}, {256, 4, 2, 1}, {256, 4, 1, 1}};
  double leaky_slope = 0.2;

  static DiscriminatorSpec defaults(std::size_t image_size, std::size_t num_classes) {
    DiscriminatorSpec spec;
    spec.image_size = image_size;
    spec.num_classes = num_classes;
    return spec;
  }

  // Spatial extent after each conv stage.
  std::vector<std::size_t> spatial_sizes() const {
    std::vector<std::size_t> out;
    std::size_t s = image_size;
    for (const auto& c : convs) {
      s = conv_output_extent(s, c.kernel, c.stride, c.padding);
      out.push_back(s);
    }
    return out;
  }

  std::size_t feature_count() const {
    const std::size_t s = spatial_sizes().back();
    return convs.back().out_channels * s * s;
  }

  void validate() const {
    if (num_classes < 2) throw ModelError("need at least 2 classes");
    if (convs.empty()) throw ModelError("discriminator needs at least one conv stage");
    if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) throw ModelError("leaky slope must lie in [0, 1)");
    try {
      spatial_sizes();
    } catch (const DimensionError& e) {
      throw ModelError(std::string("discriminator stages do not fit the image size: ") + e.what());
    }
  }
};

template <typename T>
struct AcganModel {
  GeneratorSpec gen_spec;
  DiscriminatorSpec disc_spec;
  ParamSet<T> gen;
  ParamSet<T> disc;
  std::vector<RunningStats<T>> gen_stats;   // bn0 .. bn{stages-1}
  std::vector<RunningStats<T>> disc_stats;  // bn2 .. bn{convs}
  std::vector<std::string> class_names;

  bool frozen() const { return disc.frozen(); }

  // No parameter may change afterwards; ops stop recording gradients for them.
  void freeze() {
    gen.freeze();
    disc.freeze();
    gen.set_requires_grad(false);
    disc.set_requires_grad(false);
  }

  void unfreeze() {
    gen.unfreeze();
    disc.unfreeze();
    gen.set_requires_grad(true);
    disc.set_requires_grad(true);
  }

  std::size_t num_classes() const { return disc_spec.num_classes; }

  // Deep copy (ParamSet copies share tensors; this does not).
  AcganModel clone() const {
    AcganModel out = *this;
    out.gen = gen.clone();
    out.disc = disc.clone();
    if (frozen()) out.freeze();
    return out;
  }
};

inline std::vector<ParamDecl> generator_layout(const GeneratorSpec& spec) {
  std::vector<ParamDecl> out;
  const std::size_t c0 = spec.channels.front();
  out.push_back({"project.weight", {spec.z_dim + spec.num_classes, c0 * 16}, ParamRole::weight});
  out.push_back({"project.bias", {c0 * 16}, ParamRole::bias});
  out.push_back({"bn0.gamma", {c0}, ParamRole::norm_scale});
  out.push_back({"bn0.beta", {c0}, ParamRole::norm_shift});
  for (std::size_t i = 0; i < spec.channels.size(); ++i) {
    const bool last = i + 1 == spec.channels.size();
    const std::size_t cin = spec.channels[i], cout = last ? 1 : spec.channels[i + 1];
    const std::string id = std::to_string(i + 1);
    out.push_back({"deconv" + id + ".weight", {cin, cout, 4, 4}, ParamRole::weight});
    out.push_back({"deconv" + id + ".bias", {cout}, ParamRole::bias});
    if (!last) {
      out.push_back({"bn" + id + ".gamma", {cout}, ParamRole::norm_scale});
      out.push_back({"bn" + id + ".beta", {cout}, ParamRole::norm_shift});
    }
  }
  return out;
}

inline std::vector<ParamDecl> discriminator_layout(const DiscriminatorSpec& spec) {
  std::vector<ParamDecl> out;
  std::size_t cin = 1;
  for (std::size_t i = 0; i < spec.convs.size(); ++i) {
    const auto& c = spec.convs[i];
    const std::string id = std::to_string(i + 1);
    out.push_back({"conv" + id + ".weight", {c.out_channels, cin, c.kernel, c.kernel}, ParamRole::weight});
    out.push_back({"conv" + id + ".bias", {c.out_channels}, ParamRole::bias});
    if (i > 0) {
      out.push_back({"bn" + id + ".gamma", {c.out_channels}, ParamRole::norm_scale});
      out.push_back({"bn" + id + ".beta", {c.out_channels}, ParamRole::norm_shift});
    }
    cin = c.out_channels;
  }
  const std::size_t f = spec.feature_count();
  out.push_back({"class_head.weight", {f, spec.num_classes}, ParamRole::weight});
  out.push_back({"class_head.bias", {spec.num_classes}, ParamRole::bias});
  out.push_back({"source_head.weight", {f, 1}, ParamRole::weight});
  out.push_back({"source_head.bias", {1}, ParamRole::bias});
  return out;
}

template <typename T>
AcganModel<T> make_model(const GeneratorSpec& gen_spec, const DiscriminatorSpec& disc_spec, std::uint64_t seed,
                         InitScheme scheme = InitScheme::normal) {
  gen_spec.validate();
  disc_spec.validate();
  if (gen_spec.image_size != disc_spec.image_size || gen_spec.num_classes != disc_spec.num_classes)
    throw ModelError("generator and discriminator disagree on image size or class count");
  AcganModel<T> model;
  model.gen_spec = gen_spec;
  model.disc_spec = disc_spec;
  model.gen = init_params<T>(generator_layout(gen_spec), scheme, derive_seed(seed, "init-generator"));
  model.disc = init_params<T>(discriminator_layout(disc_spec), scheme, derive_seed(seed, "init-discriminator"));
  model.gen_stats.emplace_back(gen_spec.channels.front());
  for (std::size_t i = 0; i + 1 < gen_spec.channels.size(); ++i) model.gen_stats.emplace_back(gen_spec.channels[i + 1]);
  for (std::size_t i = 1; i < disc_spec.convs.size(); ++i) model.disc_stats.emplace_back(disc_spec.convs[i].out_channels);
  for (std::size_t c = 0; c < gen_spec.num_classes; ++c) model.class_names.push_back("class" + std::to_string(c));
  return model;
}

template <typename T>
Tensor<T> sample_noise(Rng& rng, std::size_t n, std::size_t z_dim) {
  std::normal_distribution<T> dist(T(0), T(1));
  std::vector<T> z(n * z_dim);
  for (auto& v : z) v = dist(rng);
  return Tensor<T>::from_data({n, z_dim}, std::move(z));
}

template <typename T>
Tensor<T> one_hot(std::span<const int> labels, std::size_t classes) {
  std::vector<T> out(labels.size() * classes, T(0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes)
      throw std::out_of_range("label " + std::to_string(labels[i]) + " outside [0, " + std::to_string(classes) + ")");
    out[i * classes + static_cast<std::size_t>(labels[i])] = T(1);
  }
  return Tensor<T>::from_data({labels.size(), classes}, std::move(out));
}

// Class-conditional images [N,1,S,S] in [-1, 1]. In train mode batch statistics are
// used and, with update_stats, folded into G's running estimates.
template <typename T>
Tensor<T> generate(AcganModel<T>& model, std::span<const int> labels, const Tensor<T>& noise,
                   NormMode mode = NormMode::eval, bool update_stats = false) {
  const auto& spec = model.gen_spec;
  const std::size_t n = labels.size();
  if (noise.shape() != Shape{n, spec.z_dim})
    throw DimensionError("noise must be [" + std::to_string(n) + "," + std::to_string(spec.z_dim) + "], got " +
                         shape_str(noise.shape()));
  auto& p = model.gen;
  auto stats = [&](std::size_t i) -> RunningStats<T>* {
    return (mode == NormMode::eval || update_stats) ? &model.gen_stats[i] : nullptr;
  };
  Tensor<T> h = concat_features(noise, one_hot<T>(labels, spec.num_classes));
  h = linear(h, p.at("project.weight"), p.at("project.bias"));
  h = reshape(h, {n, spec.channels.front(), 4, 4});
  h = relu(batchnorm2d(h, p.at("bn0.gamma"), p.at("bn0.beta"), mode, stats(0)));
  for (std::size_t i = 0; i < spec.channels.size(); ++i) {
    const std::string id = std::to_string(i + 1);
    h = conv_transpose2d(h, p.at("deconv" + id + ".weight"), p.at("deconv" + id + ".bias"), 2, 1);
    if (i + 1 < spec.channels.size())
      h = relu(batchnorm2d(h, p.at("bn" + id + ".gamma"), p.at("bn" + id + ".beta"), mode, stats(i + 1)));
  }
  return tanh(h);
}

template <typename T>
void check_image_batch(const AcganModel<T>& model, const Tensor<T>& images) {
  const std::size_t s = model.disc_spec.image_size;
  if (images.rank() != 4 || images.dim(1) != 1 || images.dim(2) != s || images.dim(3) != s)
    throw DimensionError("discriminator expects [N,1," + std::to_string(s) + "," + std::to_string(s) +
                         "] images, got " + shape_str(images.shape()));
}

// Shared trunk: flat features [N,F] read by both heads.
template <typename T>
Tensor<T> trunk_features(AcganModel<T>& model, const Tensor<T>& images, NormMode mode = NormMode::eval,
                         bool update_stats = false) {
  check_image_batch(model, images);
  const auto& spec = model.disc_spec;
  auto& p = model.disc;
  const T slope = static_cast<T>(spec.leaky_slope);
  Tensor<T> h = images;
  for (std::size_t i = 0; i < spec.convs.size(); ++i) {
    const auto& c = spec.convs[i];
    const std::string id = std::to_string(i + 1);
    h = conv2d(h, p.at("conv" + id + ".weight"), p.at("conv" + id + ".bias"), c.stride, c.padding);
    if (i > 0) {
      RunningStats<T>* stats = (mode == NormMode::eval || update_stats) ? &model.disc_stats[i - 1] : nullptr;
      h = batchnorm2d(h, p.at("bn" + id + ".gamma"), p.at("bn" + id + ".beta"), mode, stats);
    }
    h = leaky_relu(h, slope);
  }
  return flatten(h);
}

template <typename T>
Tensor<T> class_head(AcganModel<T>& model, const Tensor<T>& features) {
  return linear(features, model.disc.at("class_head.weight"), model.disc.at("class_head.bias"));
}

template <typename T>
Tensor<T> source_head(AcganModel<T>& model, const Tensor<T>& features) {
  auto out = linear(features, model.disc.at("source_head.weight"), model.disc.at("source_head.bias"));
  return reshape(out, {features.dim(0)});
}

template <typename T>
struct Discrimination {
  Tensor<T> class_logits;   // [N,C]
  Tensor<T> source_logit;   // [N], > 0 means "real"
};

template <typename T>
Discrimination<T> discriminate(AcganModel<T>& model, const Tensor<T>& images, NormMode mode = NormMode::eval,
                               bool update_stats = false) {
  Tensor<T> features = trunk_features(model, images, mode, update_stats);
  return {class_head(model, features), source_head(model, features)};
}

struct NotFrozenError : std::logic_error {
  using std::logic_error::logic_error;
};

// Frozen-D inference: argmax of the class head (ties to the lower index). The source
// head is never evaluated.
template <typename T>
std::vector<int> classify(AcganModel<T>& model, const Tensor<T>& images, std::size_t chunk = 64) {
  if (!model.frozen()) throw NotFrozenError("classify() requires a frozen model; call freeze() after training");
  check_image_batch(model, images);
  const std::size_t n = images.dim(0), s = model.disc_spec.image_size, plane = s * s;
  std::vector<int> labels;
  labels.reserve(n);
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t take = std::min(chunk, n - start);
    std::vector<T> part(images.data().begin() + start * plane, images.data().begin() + (start + take) * plane);
    auto batch = Tensor<T>::from_data({take, 1, s, s}, std::move(part));
    auto logits = class_head(model, trunk_features(model, batch, NormMode::eval));
    auto pred = argmax_rows(logits);
    labels.insert(labels.end(), pred.begin(), pred.end());
  }
  return labels;
}

namespace detail {

inline std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? std::string(1, sep) : "") + parts[i];
  return out;
}

}  // namespace detail

template <typename T>
void save_model(const AcganModel<T>& model, const std::filesystem::path& dir) {
  CheckpointWriter w;
  w.add_meta("kind", "acgan");
  w.add_meta("dtype", dtype_name<T>());
  w.add_meta("z_dim", std::to_string(model.gen_spec.z_dim));
  w.add_meta("num_classes", std::to_string(model.gen_spec.num_classes));
  w.add_meta("image_size", std::to_string(model.gen_spec.image_size));
  std::vector<std::string> gc, dc;
  for (auto c : model.gen_spec.channels) gc.push_back(std::to_string(c));
  for (const auto& c : model.disc_spec.convs)
    dc.push_back(std::to_string(c.out_channels) + ":" + std::to_string(c.kernel) + ":" + std::to_string(c.stride) +
                 ":" + std::to_string(c.padding));
  w.add_meta("generator_channels", detail::join(gc, ','));
  w.add_meta("discriminator_convs", detail::join(dc, ','));
  {
    std::ostringstream os;
    os.precision(17);
    os << model.disc_spec.leaky_slope;
    w.add_meta("leaky_slope", os.str());
  }
  for (const auto& name : model.class_names)
    if (name.find(',') != std::string::npos) throw CheckpointError("class names may not contain commas");
  w.add_meta("class_names", detail::join(model.class_names, ','));

  for (const auto& [name, t] : model.gen) w.add<T>("G." + name, t.shape(), t.data());
  for (const auto& [name, t] : model.disc) w.add<T>("D." + name, t.shape(), t.data());
  auto add_stats = [&](const std::string& prefix, const std::vector<RunningStats<T>>& stats) {
    for (std::size_t i = 0; i < stats.size(); ++i) {
      const Shape shape{stats[i].mean.size()};
      w.add<T>(prefix + std::to_string(i) + ".running_mean", shape, stats[i].mean);
      w.add<T>(prefix + std::to_string(i) + ".running_var", shape, stats[i].var);
    }
  };
  add_stats("G.stats", model.gen_stats);
  add_stats("D.stats", model.disc_stats);
  w.write(dir);
}

template <typename T>
AcganModel<T> load_model(const std::filesystem::path& dir) {
  CheckpointReader r(dir);
  if (r.meta("kind") != "acgan") throw CheckpointError("checkpoint is not an ACGAN model");
  GeneratorSpec gs;
  DiscriminatorSpec ds;
  try {
    gs.z_dim = std::stoull(r.meta("z_dim"));
    gs.num_classes = ds.num_classes = std::stoull(r.meta("num_classes"));
    gs.image_size = ds.image_size = std::stoull(r.meta("image_size"));
    gs.channels.clear();
    for (const auto& c : detail::split(r.meta("generator_channels"), ',')) gs.channels.push_back(std::stoull(c));
    ds.convs.clear();
    for (const auto& c : detail::split(r.meta("discriminator_convs"), ',')) {
      auto f = detail::split(c, ':');
      if (f.size() != 4) throw CheckpointError("malformed discriminator stage '" + c + "'");
      ds.convs.push_back({std::stoull(f[0]), std::stoull(f[1]), std::stoull(f[2]), std::stoull(f[3])});
    }
    ds.leaky_slope = std::stod(r.meta("leaky_slope"));
  } catch (const std::logic_error& e) {
    throw CheckpointError(std::string("malformed checkpoint metadata: ") + e.what());
  }
  AcganModel<T> model = make_model<T>(gs, ds, 0, InitScheme::zeros);
  model.class_names = detail::split(r.meta("class_names"), ',');
  if (model.class_names.size() != gs.num_classes) throw CheckpointError("class name count mismatch");
  for (auto& [name, t] : model.gen) {
    auto v = r.load<T>("G." + name, t.shape());
    std::copy(v.begin(), v.end(), t.mutable_data().begin());
  }
  for (auto& [name, t] : model.disc) {
    auto v = r.load<T>("D." + name, t.shape());
    std::copy(v.begin(), v.end(), t.mutable_data().begin());
  }
  auto load_stats = [&](const std::string& prefix, std::vector<RunningStats<T>>& stats) {
    for (std::size_t i = 0; i < stats.size(); ++i) {
      const Shape shape{stats[i].mean.size()};
      stats[i].mean = r.load<T>(prefix + std::to_string(i) + ".running_mean", shape);
      stats[i].var = r.load<T>(prefix + std::to_string(i) + ".running_var", shape);
    }
  };
  load_stats("G.stats", model.gen_stats);
  load_stats("D.stats", model.disc_stats);
  return model;
}

}  // namespace acgan
