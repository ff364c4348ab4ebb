#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "acgan/image_io.hpp"
#include "acgan/rng.hpp"
#include "acgan/tensor.hpp"

namespace acgan {

struct DatasetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Labelled single-channel images, each [1,S,S] with values in [-1, 1].
struct Dataset {
  std::size_t image_size = 0;
  std::vector<Tensor<float>> images;
  std::vector<int> labels;
  std::vector<std::string> class_names;
  std::vector<std::string> filenames;  // "<class>/<file>", empty for in-memory data

  std::size_t size() const { return images.size(); }
  std::size_t num_classes() const { return class_names.size(); }

  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> counts(num_classes(), 0);
    for (int y : labels) ++counts.at(static_cast<std::size_t>(y));
    return counts;
  }

  std::size_t classes_present() const {
    auto counts = class_counts();
    return static_cast<std::size_t>(std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }));
  }

  void validate() const {
    if (images.size() != labels.size()) throw DatasetError("image and label counts differ");
    if (!filenames.empty() && filenames.size() != images.size())
      throw DatasetError("filename and image counts differ");
    for (std::size_t i = 0; i < images.size(); ++i) {
      if (images[i].shape() != Shape{1, image_size, image_size})
        throw DatasetError("image " + std::to_string(i) + " has shape " + shape_str(images[i].shape()));
      if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes())
        throw DatasetError("label " + std::to_string(labels[i]) + " out of range");
    }
  }

  std::string display_name(std::size_t i) const {
    return filenames.empty() ? "#" + std::to_string(i) : filenames[i];
  }
};

inline Tensor<float> image_to_tensor(const GrayImage& img, std::size_t size) {
  std::vector<float> unit(img.pixels.size());
  std::transform(img.pixels.begin(), img.pixels.end(), unit.begin(), pixel_to_unit);
  return Tensor<float>::from_data({1, size, size}, resize_bilinear(unit, img.width, img.height, size, size));
}

inline GrayImage tensor_to_image(const Tensor<float>& t) {
  if (t.rank() != 3 || t.dim(0) != 1) throw DimensionError("expected a [1,H,W] image tensor");
  GrayImage img{t.dim(2), t.dim(1), {}};
  img.pixels.reserve(t.numel());
  for (float v : t.data()) img.pixels.push_back(unit_to_pixel(v));
  return img;
}

inline std::vector<std::filesystem::path> sorted_entries(const std::filesystem::path& dir, bool directories) {
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (directories ? e.is_directory() : (e.is_regular_file() && is_image_file(e.path())))
      out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

// One subdirectory per class (sorted by name), 8-bit grayscale PNG/PGM files inside,
// resampled to image_size x image_size. image_size 0 keeps the native size, which must
// then be square and shared by every image.
inline Dataset load_directory(const std::filesystem::path& root, std::size_t image_size = 0) {
  const bool native = image_size == 0;
  if (!std::filesystem::is_directory(root)) throw DatasetError("data directory not found: " + root.string());
  Dataset ds;
  ds.image_size = image_size;
  const auto class_dirs = sorted_entries(root, true);
  if (class_dirs.size() < 2)
    throw DatasetError("need at least 2 class subdirectories in " + root.string() + ", found " +
                       std::to_string(class_dirs.size()));
  for (const auto& dir : class_dirs) {
    const int label = static_cast<int>(ds.class_names.size());
    ds.class_names.push_back(dir.filename().string());
    const auto files = sorted_entries(dir, false);
    if (files.empty()) throw DatasetError("class directory has no images: " + dir.string());
    for (const auto& file : files) {
      GrayImage img;
      try {
        img = read_image(file);
      } catch (const ImageIoError& e) {
        throw DatasetError(std::string("unreadable image ") + file.string() + " (" + e.what() + ")");
      }
      if (native) {
        if (image_size == 0) image_size = img.width;
        if (img.width != image_size || img.height != image_size)
          throw DatasetError("image " + file.string() + " is " + std::to_string(img.width) + "x" +
                             std::to_string(img.height) + "; expected " + std::to_string(image_size) + "x" +
                             std::to_string(image_size) + " (set an image size to resample)");
        ds.image_size = image_size;
      }
      ds.images.push_back(image_to_tensor(img, image_size));
      ds.labels.push_back(label);
      ds.filenames.push_back(dir.filename().string() + "/" + file.filename().string());
    }
  }
  return ds;
}

// Writes <root>/<class>/<file>.png; images keep their dataset filenames when present.
inline void save_directory(const Dataset& ds, const std::filesystem::path& root) {
  for (const auto& name : ds.class_names) std::filesystem::create_directories(root / name);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto rel = ds.filenames.empty()
                         ? std::filesystem::path(ds.class_names[ds.labels[i]]) / ("img_" + std::to_string(i) + ".png")
                         : std::filesystem::path(ds.filenames[i]);
    write_png(root / rel, tensor_to_image(ds.images[i]));
  }
}

namespace detail {

// Separable box blur with clamped borders.
inline std::vector<double> box_blur(const std::vector<double>& src, std::size_t s, int radius) {
  if (radius <= 0) return src;
  std::vector<double> tmp(src.size()), out(src.size());
  const int n = static_cast<int>(s);
  const double norm = 1.0 / (2 * radius + 1);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      double acc = 0;
      for (int d = -radius; d <= radius; ++d) acc += src[y * n + std::clamp(x + d, 0, n - 1)];
      tmp[y * n + x] = acc * norm;
    }
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      double acc = 0;
      for (int d = -radius; d <= radius; ++d) acc += tmp[std::clamp(y + d, 0, n - 1) * n + x];
      out[y * n + x] = acc * norm;
    }
  return out;
}

}  // namespace detail

// Two-class stand-in for a small ultrasound set. Every image is a bright ellipse of
// random geometry on a dark background, filled with unit-variance texture: class 0
// ("benign") uses low-pass noise, class 1 ("malignant") high-pass noise. Pixels are
// quantised to 8 bits so the in-memory dataset equals a saved-and-reloaded copy.
inline Dataset synth_dataset(std::size_t n_per_class, std::size_t size, std::uint64_t seed) {
  if (n_per_class < 1) throw DatasetError("synthetic dataset needs at least one image per class");
  if (size < 8) throw DatasetError("synthetic images must be at least 8x8");
  Dataset ds;
  ds.image_size = size;
  ds.class_names = {"benign", "malignant"};
  const double s = static_cast<double>(size);
  for (int label = 0; label < 2; ++label) {
    for (std::size_t k = 0; k < n_per_class; ++k) {
      Rng rng = make_rng(seed, "synth", static_cast<std::uint64_t>(label) * n_per_class + k);
      std::uniform_real_distribution<double> u(0.0, 1.0);
      std::normal_distribution<double> gauss(0.0, 1.0);

      const double cx = s * (0.35 + 0.3 * u(rng)), cy = s * (0.35 + 0.3 * u(rng));
      const double ax = s * (0.22 + 0.15 * u(rng)), ay = s * (0.22 + 0.15 * u(rng));
      const double theta = std::numbers::pi * u(rng);
      const double brightness = 0.05 + 0.2 * u(rng);

      std::vector<double> white(size * size);
      for (auto& v : white) v = gauss(rng);
      std::vector<double> texture;
      if (label == 0) {
        texture = detail::box_blur(white, size, 2);
      } else {
        auto low = detail::box_blur(white, size, 1);
        texture.resize(white.size());
        for (std::size_t i = 0; i < white.size(); ++i) texture[i] = white[i] - low[i];
      }
      double mean = 0, var = 0;
      for (double v : texture) mean += v;
      mean /= texture.size();
      for (double v : texture) var += (v - mean) * (v - mean);
      const double inv_std = 1.0 / std::sqrt(var / texture.size() + 1e-12);

      std::vector<float> px(size * size);
      const double ct = std::cos(theta), st = std::sin(theta);
      for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) {
          const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
          const double rx = (dx * ct + dy * st) / ax, ry = (-dx * st + dy * ct) / ay;
          const double r = std::sqrt(rx * rx + ry * ry);
          const double inside = 1.0 / (1.0 + std::exp((r - 1.0) * 12.0));
          const std::size_t i = y * size + x;
          const double lesion = brightness + 0.3 * (texture[i] - mean) * inv_std;
          const double v = -0.6 + inside * (lesion + 0.6) + 0.04 * gauss(rng);
          px[i] = pixel_to_unit(unit_to_pixel(v));
        }
      ds.images.push_back(Tensor<float>::from_data({1, size, size}, std::move(px)));
      ds.labels.push_back(label);
      char name[32];
      std::snprintf(name, sizeof name, "img_%04zu.png", k);
      ds.filenames.push_back(ds.class_names[label] + "/" + name);
    }
  }
  return ds;
}

}  // namespace acgan
