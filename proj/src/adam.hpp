#pragma once

#include <cmath>

#include "tensor.hpp"

namespace dpc {

template <typename T>
struct AdamState {
  Tensor<T> m;  // first moment
  Tensor<T> v;  // second moment
  long step = 0;

  void init(const Shape& shape) {
    m = Tensor<T>::zeros(shape);
    v = Tensor<T>::zeros(shape);
    step = 0;
  }
};

template <typename T>
struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One Adam update with bias correction, in place.
template <typename T>
void adam_step(Tensor<T>& params, const Tensor<T>& grads, AdamState<T>& state,
               const AdamConfig<T>& cfg) {
  require(cfg.lr > 0, ErrorKind::config, "adam: learning rate must be positive");
  require(params.shape == grads.shape, ErrorKind::shape, "adam: param/grad shape mismatch");
  if (state.m.empty()) state.init(params.shape);
  require(state.m.shape == params.shape, ErrorKind::shape, "adam: state shape mismatch");
  state.step += 1;
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T bc1 = static_cast<T>(1.0 - std::pow(cfg.beta1, static_cast<double>(state.step)));
  const T bc2 = static_cast<T>(1.0 - std::pow(cfg.beta2, static_cast<double>(state.step)));
  const T lr = static_cast<T>(cfg.lr), eps = static_cast<T>(cfg.eps);
  const int64_t n = params.size();
  for (int64_t i = 0; i < n; ++i) {
    const T g = grads.v[i];
    state.m.v[i] = b1 * state.m.v[i] + (T(1) - b1) * g;
    state.v.v[i] = b2 * state.v.v[i] + (T(1) - b2) * g * g;
    const T mhat = state.m.v[i] / bc1;
    const T vhat = state.v.v[i] / bc2;
    params.v[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

}  // namespace dpc
