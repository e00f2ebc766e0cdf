#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dexined/error.hpp"
#include "dexined/layers.hpp"

namespace dexined {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moments per parameter, in parameter order.
template <class T>
struct AdamState {
  std::vector<std::vector<T>> m, v;
  std::uint64_t step = 0;

  void resize_for(const std::vector<Parameter<T>>& params) {
    if (m.size() == params.size()) return;
    m.assign(params.size(), {});
    v.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i].assign(params[i].tensor.numel(), T(0));
      v[i].assign(params[i].tensor.numel(), T(0));
    }
  }
};

// One bias-corrected Adam update with decoupled weight decay:
//   theta -= lr * m_hat / (sqrt(v_hat) + eps) + lr * weight_decay * theta
// Gradients are validated before any parameter moves; a parameter that never
// received a gradient is treated as having a zero gradient.
template <class T>
void adam_step(std::vector<Parameter<T>>& params, AdamState<T>& state, double lr,
               double weight_decay, const AdamConfig& cfg = {}) {
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    for (T g : p.tensor.grad())
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter '" + p.name + "'");
  }
  state.resize_for(params);
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, double(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, double(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& t = params[i].tensor;
    const std::span<T> grad = t.has_grad() ? t.grad() : std::span<T>{};
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < t.numel(); ++j) {
      const double g = grad.empty() ? 0.0 : double(grad[j]);
      const double mj = cfg.beta1 * double(m[j]) + (1 - cfg.beta1) * g;
      const double vj = cfg.beta2 * double(v[j]) + (1 - cfg.beta2) * g * g;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double update = (mj / c1) / (std::sqrt(vj / c2) + cfg.eps);
      t[j] = static_cast<T>(double(t[j]) - lr * update - lr * weight_decay * double(t[j]));
    }
  }
}

// Piecewise-constant step schedule: base * factor^(number of drops <= epoch).
inline double lr_at(std::size_t epoch, double base, const std::vector<std::size_t>& drop_epochs,
                    double factor) {
  double lr = base;
  for (std::size_t d : drop_epochs)
    if (epoch >= d) lr *= factor;
  return lr;
}

}  // namespace dexined
