#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "acgan/rng.hpp"
#include "acgan/tensor.hpp"

namespace acgan {

struct FrozenError : std::logic_error {
  using std::logic_error::logic_error;
};

// Ordered name -> trainable tensor map. Iteration follows insertion order.
template <typename T>
class ParamSet {
 public:
  using Entry = std::pair<std::string, Tensor<T>>;

  Tensor<T>& add(std::string name, Tensor<T> tensor) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name '" + name + "'");
    tensor.set_requires_grad(true);
    index_.emplace(name, entries_.size());
    entries_.emplace_back(std::move(name), std::move(tensor));
    return entries_.back().second;
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const Tensor<T>& at(const std::string& name) const { return entries_.at(lookup(name)).second; }
  Tensor<T>& at(const std::string& name) { return entries_.at(lookup(name)).second; }

  std::size_t size() const { return entries_.size(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  std::size_t element_count() const {
    std::size_t total = 0;
    for (const auto& [name, t] : entries_) total += t.numel();
    return total;
  }

  void freeze() { frozen_ = true; }
  void unfreeze() { frozen_ = false; }
  bool frozen() const { return frozen_; }

  // Toggles whether ops on these tensors record gradients for them.
  void set_requires_grad(bool on) {
    for (auto& [name, t] : entries_) t.set_requires_grad(on);
  }

  void clear_grads() {
    for (auto& [name, t] : entries_) t.clear_grad();
  }

  // Deep copy; the clone shares no storage with the original.
  ParamSet clone() const {
    ParamSet out;
    for (const auto& [name, t] : entries_) out.add(name, t.clone_leaf(true));
    out.frozen_ = frozen_;
    return out;
  }

  // Flat copy of every value, in iteration order.
  std::vector<T> snapshot() const {
    std::vector<T> out;
    out.reserve(element_count());
    for (const auto& [name, t] : entries_) out.insert(out.end(), t.data().begin(), t.data().end());
    return out;
  }

 private:
  std::size_t lookup(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter named '" + name + "'");
    return it->second;
  }

  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  bool frozen_ = false;
};

enum class InitScheme { normal, zeros, ones };

inline InitScheme parse_init_scheme(std::string_view name) {
  if (name == "normal") return InitScheme::normal;
  if (name == "zeros") return InitScheme::zeros;
  if (name == "ones") return InitScheme::ones;
  throw std::invalid_argument("unknown init scheme '" + std::string(name) + "'");
}

enum class ParamRole { weight, bias, norm_scale, norm_shift };

struct ParamDecl {
  std::string name;
  Shape shape;
  ParamRole role;
};

// Weights follow `scheme` (normal: mean 0, std `stddev`); biases and norm shifts start at 0,
// norm scales at 1. Each tensor draws from its own substream of `seed`.
template <typename T>
ParamSet<T> init_params(const std::vector<ParamDecl>& layout, InitScheme scheme, std::uint64_t seed,
                        T stddev = T(0.02)) {
  ParamSet<T> params;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& decl = layout[i];
    std::vector<T> values(shape_numel(decl.shape), T(0));
    switch (decl.role) {
      case ParamRole::weight:
        if (scheme == InitScheme::normal) {
          Rng rng = make_rng(seed, decl.name, i);
          std::normal_distribution<T> dist(T(0), stddev);
          for (auto& v : values) v = dist(rng);
        } else if (scheme == InitScheme::ones) {
          std::fill(values.begin(), values.end(), T(1));
        }
        break;
      case ParamRole::norm_scale:
        std::fill(values.begin(), values.end(), T(1));
        break;
      case ParamRole::bias:
      case ParamRole::norm_shift:
        break;
    }
    params.add(decl.name, Tensor<T>::from_data(decl.shape, std::move(values)));
  }
  return params;
}

}  // namespace acgan
