#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "acgan/param_set.hpp"

namespace acgan {

struct MissingGradientError : std::logic_error {
  using std::logic_error::logic_error;
};

template <typename T>
struct AdamState {
  T lr = T(1e-4);
  T beta1 = T(0.5);
  T beta2 = T(0.999);
  T epsilon = T(1e-8);
  std::uint64_t step = 0;
  std::vector<std::vector<T>> m;  // aligned with ParamSet iteration order
  std::vector<std::vector<T>> v;

  AdamState() = default;
  AdamState(T lr_, T beta1_, T beta2_ = T(0.999), T eps_ = T(1e-8))
      : lr(lr_), beta1(beta1_), beta2(beta2_), epsilon(eps_) {}
};

// One bias-corrected Adam update over every parameter, then clears the gradients.
// A tensor whose gradient is identically zero is left untouched (moments included).
template <typename T>
void adam_step(ParamSet<T>& params, AdamState<T>& state) {
  if (params.frozen()) throw FrozenError("adam_step on a frozen parameter set");
  for (const auto& [name, t] : params)
    if (!t.has_grad()) throw MissingGradientError("parameter '" + name + "' has no gradient");

  if (state.m.empty()) {
    for (const auto& [name, t] : params) {
      state.m.emplace_back(t.numel(), T(0));
      state.v.emplace_back(t.numel(), T(0));
    }
  }
  if (state.m.size() != params.size())
    throw std::invalid_argument("AdamState was built for a different parameter set");

  ++state.step;
  const T t = static_cast<T>(state.step);
  const T correction1 = T(1) - std::pow(state.beta1, t);
  const T correction2 = T(1) - std::pow(state.beta2, t);

  std::size_t k = 0;
  for (auto& [name, tensor] : params) {
    auto& m = state.m[k];
    auto& v = state.v[k];
    ++k;
    if (m.size() != tensor.numel())
      throw std::invalid_argument("AdamState moment size mismatch for '" + name + "'");
    auto grad = tensor.grad();
    bool any = false;
    for (T g : grad) any = any || g != T(0);
    if (any) {
      auto p = tensor.mutable_data();
      for (std::size_t i = 0; i < p.size(); ++i) {
        const T g = grad[i];
        m[i] = state.beta1 * m[i] + (T(1) - state.beta1) * g;
        v[i] = state.beta2 * v[i] + (T(1) - state.beta2) * g * g;
        const T mhat = m[i] / correction1;
        const T vhat = v[i] / correction2;
        p[i] -= state.lr * mhat / (std::sqrt(vhat) + state.epsilon);
      }
    }
    tensor.clear_grad();
  }
}

}  // namespace acgan
