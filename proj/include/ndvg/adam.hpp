#pragma once

#include "ndvg/model.hpp"

namespace ndvg {

template <typename T>
struct AdamConfig {
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
};

// First/second moment buffers for one tensor.
template <typename T>
struct AdamState {
  std::vector<T> m, v;
  long long step = 0;

  void ensure(size_t n) {
    if (m.size() != n) {
      m.assign(n, T(0));
      v.assign(n, T(0));
      step = 0;
    }
  }
};

// Bias-corrected Adam update. Gradients are consumed (zeroed) by the step;
// non-finite gradients abort with a diagnostic naming the tensor.
template <typename T>
inline void adam_step(AdamState<T>& state, T* params, T* grads, size_t n, T lr,
                      const AdamConfig<T>& cfg, const std::string& tensor_name) {
  state.ensure(n);
  state.step += 1;
  const T bc1 = T(1) - std::pow(cfg.beta1, T(state.step));
  const T bc2 = T(1) - std::pow(cfg.beta2, T(state.step));
  for (size_t i = 0; i < n; ++i) {
    const T g = grads[i];
    if (!std::isfinite(g))
      throw std::runtime_error("non-finite gradient in tensor '" + tensor_name + "' at index " +
                               std::to_string(i));
    state.m[i] = cfg.beta1 * state.m[i] + (T(1) - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (T(1) - cfg.beta2) * g * g;
    const T m_hat = state.m[i] / bc1;
    const T v_hat = state.v[i] / bc2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    grads[i] = T(0);
  }
}

// One optimizer instance per model tensor, keyed by enumeration order.
template <typename T>
struct ModelOptimizer {
  AdamConfig<T> cfg;
  T lr_grid = T(0.1);
  T lr_mlp = T(1e-3);
  std::vector<AdamState<T>> states;

  // decay_t in [0,1] over a stage; learning rate shrinks to 10% by the end.
  void step(Model<T>& model, T decay_t) {
    auto tensors = param_tensors(model);
    if (states.size() != tensors.size()) states.assign(tensors.size(), {});
    const T decay = std::pow(T(0.1), decay_t);
    for (size_t i = 0; i < tensors.size(); ++i) {
      auto& t = tensors[i];
      const T lr = (t.is_mlp ? lr_mlp : lr_grid) * decay;
      adam_step(states[i], t.values, t.grads, t.size, lr, cfg, t.name);
    }
  }
};

}  // namespace ndvg
