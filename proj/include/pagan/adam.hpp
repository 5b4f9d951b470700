#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "pagan/errors.hpp"
#include "pagan/tensor.hpp"

namespace pagan::nn {

// Bias-corrected Adam over a fixed parameter list. Moment accumulators are
// allocated on first use and keyed by position, so the parameter enumeration
// must stay stable across steps.
template <typename T>
struct AdamState {
  int64_t step = 0;
  T lr = T(2e-4);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T epsilon = T(1e-8);
  std::vector<std::vector<T>> m, v;

  void validate() const {
    if (!(lr > T(0))) throw InvalidArgument("adam: lr must be > 0");
    if (beta1 < T(0) || beta1 >= T(1) || beta2 < T(0) || beta2 >= T(1))
      throw InvalidArgument("adam: betas must be in [0, 1)");
  }
};

template <typename T>
void adam_step(AdamState<T>& state, std::vector<Tensor<T>>& params) {
  state.validate();
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i].values().size(), T(0));
      state.v[i].assign(params[i].values().size(), T(0));
    }
  }
  if (state.m.size() != params.size())
    throw InvalidArgument("adam: parameter list size changed");

  state.step += 1;
  const T bc1 = T(1) - std::pow(state.beta1, static_cast<T>(state.step));
  const T bc2 = T(1) - std::pow(state.beta2, static_cast<T>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    auto& val = params[i].values();
    auto& grad = params[i].grad();
    if (grad.size() != val.size() || state.m[i].size() != val.size())
      throw InvalidArgument("adam: gradient/accumulator shape mismatch");
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (size_t k = 0; k < val.size(); ++k) {
      const T g = grad[k];
      m[k] = state.beta1 * m[k] + (T(1) - state.beta1) * g;
      v[k] = state.beta2 * v[k] + (T(1) - state.beta2) * g * g;
      const T mhat = m[k] / bc1;
      const T vhat = v[k] / bc2;
      val[k] -= state.lr * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
}

}  // namespace pagan::nn
