#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "acgan/augment.hpp"
#include "acgan/dataset.hpp"
#include "acgan/rng.hpp"

namespace acgan {

template <typename T>
struct Batch {
  Tensor<T> images;  // [B,1,S,S]
  std::vector<int> labels;
  std::vector<std::size_t> indices;  // dataset positions
  std::vector<AugmentRecord> transforms;
};

// One epoch over `indices` in a seeded random order. A trailing short batch is
// dropped, unless it is the only batch and holds at least two images (batch norm
// needs two samples per channel).
// Augmentation, when given, uses a per-image substream of `augment_seed`.
template <typename T>
class BatchLoader {
 public:
  BatchLoader(const Dataset& data, std::span<const std::size_t> indices, std::size_t batch_size,
              std::uint64_t shuffle_seed, const AugmentConfig* augment = nullptr,
              std::uint64_t augment_seed = 0)
      : data_(data), order_(indices.begin(), indices.end()), batch_size_(batch_size),
        augment_(augment), augment_seed_(augment_seed) {
    if (batch_size_ < 1) throw std::invalid_argument("batch size must be >= 1");
    for (auto i : order_)
      if (i >= data_.size()) throw std::out_of_range("batch index " + std::to_string(i) + " out of range");
    if (augment_) augment_->validate();
    Rng rng(shuffle_seed);
    std::shuffle(order_.begin(), order_.end(), rng);
  }

  std::size_t batch_count() const {
    const std::size_t full = order_.size() / batch_size_;
    return full > 0 ? full : (order_.size() >= 2 ? 1 : 0);
  }

  std::optional<Batch<T>> next() {
    if (cursor_ >= order_.size()) return std::nullopt;
    const std::size_t take = std::min(batch_size_, order_.size() - cursor_);
    if (take < 2 || (take < batch_size_ && cursor_ > 0)) {
      cursor_ = order_.size();
      return std::nullopt;
    }
    const std::size_t s = data_.image_size, plane = s * s;
    Batch<T> batch;
    std::vector<T> pixels(take * plane);
    for (std::size_t b = 0; b < take; ++b) {
      const std::size_t idx = order_[cursor_ + b];
      Tensor<float> img = data_.images[idx];
      AugmentRecord rec;
      if (augment_) {
        Rng rng = make_rng(augment_seed_, "image", idx);
        img = acgan::augment(img, *augment_, rng, &rec);
      }
      std::copy(img.data().begin(), img.data().end(), pixels.begin() + b * plane);
      batch.labels.push_back(data_.labels[idx]);
      batch.indices.push_back(idx);
      batch.transforms.push_back(rec);
    }
    cursor_ += take;
    batch.images = Tensor<T>::from_data({take, 1, s, s}, std::move(pixels));
    return batch;
  }

 private:
  const Dataset& data_;
  std::vector<std::size_t> order_;
  std::size_t batch_size_;
  const AugmentConfig* augment_;
  std::uint64_t augment_seed_;
  std::size_t cursor_ = 0;
};

// Stacks dataset images (no augmentation) into one [N,1,S,S] tensor.
template <typename T>
Tensor<T> stack_images(const Dataset& data, std::span<const std::size_t> indices) {
  const std::size_t s = data.image_size, plane = s * s;
  std::vector<T> pixels(indices.size() * plane);
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const auto& img = data.images.at(indices[b]);
    std::copy(img.data().begin(), img.data().end(), pixels.begin() + b * plane);
  }
  return Tensor<T>::from_data({indices.size(), 1, s, s}, std::move(pixels));
}

}  // namespace acgan
