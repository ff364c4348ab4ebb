#pragma once

// Training-time stochastic transforms. Each enabled transform fires independently
// with the configured probability; inputs are never modified.

#include <algorithm>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "acgan/rng.hpp"
#include "acgan/tensor.hpp"

namespace acgan {

struct AugmentConfig {
  double probability = 0.5;
  bool hflip = true;
  bool vflip = true;
  bool rotate = true;
  bool noise = true;
  std::vector<int> angles{90, 180, 270};
  double noise_sigma = 0.05;

  void validate() const {
    if (!(probability >= 0.0 && probability <= 1.0))
      throw std::invalid_argument("augment probability must lie in [0, 1]");
    if (!(noise_sigma >= 0.0)) throw std::invalid_argument("augment noise sigma must be >= 0");
    if (rotate && angles.empty()) throw std::invalid_argument("rotation enabled with an empty angle set");
    for (int a : angles)
      if (a != 90 && a != 180 && a != 270)
        throw std::invalid_argument("rotation angle " + std::to_string(a) +
                                    " outside the supported set {90, 180, 270}");
  }
};

// Which transforms fired for one image.
struct AugmentRecord {
  bool hflip = false;
  bool vflip = false;
  int rotation = 0;
  bool noise = false;

  bool any() const { return hflip || vflip || rotation != 0 || noise; }
  bool operator==(const AugmentRecord&) const = default;
};

namespace detail {

template <typename T>
void require_image(const Tensor<T>& image, const char* op) {
  if (image.rank() != 3)
    throw DimensionError(std::string(op) + " expects a [C,H,W] image, got " + shape_str(image.shape()));
}

template <typename T, typename F>
Tensor<T> remap(const Tensor<T>& image, F source_index) {
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  std::vector<T> out(image.numel());
  auto in = image.data();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t col = 0; col < w; ++col)
        out[(ch * h + r) * w + col] = in[ch * h * w + source_index(r, col)];
  return Tensor<T>::from_data(image.shape(), std::move(out));
}

}  // namespace detail

template <typename T>
Tensor<T> hflip(const Tensor<T>& image) {
  detail::require_image(image, "hflip");
  const std::size_t w = image.dim(2);
  return detail::remap(image, [w](std::size_t r, std::size_t c) { return r * w + (w - 1 - c); });
}

template <typename T>
Tensor<T> vflip(const Tensor<T>& image) {
  detail::require_image(image, "vflip");
  const std::size_t h = image.dim(1), w = image.dim(2);
  return detail::remap(image, [h, w](std::size_t r, std::size_t c) { return (h - 1 - r) * w + c; });
}

// Clockwise rotation by a multiple of 90 degrees; a pure pixel permutation.
template <typename T>
Tensor<T> rotate(const Tensor<T>& image, int angle) {
  detail::require_image(image, "rotate");
  const std::size_t s = image.dim(1);
  if (image.dim(2) != s)
    throw DimensionError("rotate needs a square image, got " + shape_str(image.shape()));
  switch (angle) {
    case 90:
      return detail::remap(image, [s](std::size_t r, std::size_t c) { return (s - 1 - c) * s + r; });
    case 180:
      return detail::remap(image, [s](std::size_t r, std::size_t c) { return (s - 1 - r) * s + (s - 1 - c); });
    case 270:
      return detail::remap(image, [s](std::size_t r, std::size_t c) { return c * s + (s - 1 - r); });
    default:
      throw std::invalid_argument("rotation angle " + std::to_string(angle) + " is not one of 90/180/270");
  }
}

// Adds N(0, sigma^2) per pixel and clamps to [-1, 1].
template <typename T>
Tensor<T> add_noise(const Tensor<T>& image, double sigma, Rng& rng) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("noise sigma must be >= 0");
  std::vector<T> out(image.data().begin(), image.data().end());
  if (sigma > 0.0) {
    std::normal_distribution<double> dist(0.0, sigma);
    for (auto& v : out) v = static_cast<T>(std::clamp(static_cast<double>(v) + dist(rng), -1.0, 1.0));
  }
  return Tensor<T>::from_data(image.shape(), std::move(out));
}

// Applies hflip, vflip, rotate and noise in that order, each with probability p.
// One uniform draw is consumed per transform slot whether or not it is enabled,
// so toggling a transform does not shift the others' randomness.
template <typename T>
Tensor<T> augment(const Tensor<T>& image, const AugmentConfig& config, Rng& rng,
                  AugmentRecord* record = nullptr) {
  config.validate();
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  const double p = config.probability;
  AugmentRecord rec;
  rec.hflip = coin(rng) < p && config.hflip;
  rec.vflip = coin(rng) < p && config.vflip;
  const bool rot = coin(rng) < p && config.rotate;
  const std::size_t angle_pick = std::uniform_int_distribution<std::size_t>(
      0, std::max<std::size_t>(config.angles.size(), 1) - 1)(rng);
  if (rot) rec.rotation = config.angles[angle_pick];
  rec.noise = coin(rng) < p && config.noise && config.noise_sigma > 0.0;

  Tensor<T> out = image;
  if (rec.hflip) out = hflip(out);
  if (rec.vflip) out = vflip(out);
  if (rec.rotation) out = rotate(out, rec.rotation);
  if (rec.noise) out = add_noise(out, config.noise_sigma, rng);
  if (record) *record = rec;
  return out;
}

}  // namespace acgan
