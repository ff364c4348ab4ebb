#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "json.hpp"

#include "acgan/rng.hpp"

namespace acgan {

struct FoldPlan {
  std::vector<std::vector<std::size_t>> folds;         // sorted dataset indices
  std::vector<std::vector<std::size_t>> class_counts;  // [fold][class]
  std::uint64_t seed = 0;
  bool stratified = true;

  std::size_t k() const { return folds.size(); }

  // Every index outside fold `f`, ascending.
  std::vector<std::size_t> training_indices(std::size_t f) const {
    std::vector<std::size_t> out;
    for (std::size_t g = 0; g < folds.size(); ++g)
      if (g != f) out.insert(out.end(), folds[g].begin(), folds[g].end());
    std::sort(out.begin(), out.end());
    return out;
  }
};

// Shuffles each class with its own seeded stream, then deals the concatenated
// class lists round-robin over the k folds. Fold sizes differ by at most one
// and every fold holds floor or ceil of n_c / k images of class c.
inline FoldPlan kfold_split(std::span<const int> labels, std::size_t k, std::uint64_t seed,
                            bool stratified = true) {
  const std::size_t n = labels.size();
  if (k < 2) throw std::invalid_argument("k-fold split needs k >= 2");
  if (k > n)
    throw std::invalid_argument("cannot split " + std::to_string(n) + " images into " + std::to_string(k) +
                                " folds");
  int max_label = 0;
  for (int y : labels) {
    if (y < 0) throw std::invalid_argument("negative label in fold split");
    max_label = std::max(max_label, y);
  }
  const std::size_t classes = static_cast<std::size_t>(max_label) + 1;

  std::vector<std::size_t> order;
  order.reserve(n);
  if (stratified) {
    for (std::size_t c = 0; c < classes; ++c) {
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < n; ++i)
        if (static_cast<std::size_t>(labels[i]) == c) members.push_back(i);
      Rng rng = make_rng(seed, "fold-class", c);
      std::shuffle(members.begin(), members.end(), rng);
      order.insert(order.end(), members.begin(), members.end());
    }
  } else {
    order.resize(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = make_rng(seed, "fold-all");
    std::shuffle(order.begin(), order.end(), rng);
  }

  FoldPlan plan;
  plan.seed = seed;
  plan.stratified = stratified;
  plan.folds.resize(k);
  plan.class_counts.assign(k, std::vector<std::size_t>(classes, 0));
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    plan.folds[pos % k].push_back(order[pos]);
    ++plan.class_counts[pos % k][static_cast<std::size_t>(labels[order[pos]])];
  }
  for (auto& f : plan.folds) std::sort(f.begin(), f.end());
  return plan;
}

inline void to_json(nlohmann::json& j, const FoldPlan& plan) {
  j = nlohmann::json{{"k", plan.k()},
                     {"seed", plan.seed},
                     {"stratified", plan.stratified},
                     {"folds", plan.folds},
                     {"class_counts", plan.class_counts}};
}

inline void from_json(const nlohmann::json& j, FoldPlan& plan) {
  j.at("seed").get_to(plan.seed);
  j.at("stratified").get_to(plan.stratified);
  j.at("folds").get_to(plan.folds);
  j.at("class_counts").get_to(plan.class_counts);
}

}  // namespace acgan
