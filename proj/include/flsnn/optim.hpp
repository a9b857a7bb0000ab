#pragma once

#include <span>
#include <vector>

#include "flsnn/core.hpp"

namespace flsnn {

struct OptimizerHyper {
  double learning_rate = 0.1;
  double momentum = 0.95;
  double weight_decay = 1e-4;
};

/// SGD with heavy-ball momentum and L2 weight decay folded into the buffer.
template <typename Real>
struct OptimizerState {
  std::vector<Real> momentum_buffer;
  OptimizerHyper hyper;

  OptimizerState() = default;
  OptimizerState(std::size_t n, OptimizerHyper h) : momentum_buffer(n, Real(0)), hyper(h) {}
};

/// m <- mu*m + g + decay*w ;  w <- w - lr*m
template <typename Real>
void sgd_step(std::span<Real> params, std::span<const Real> grad, OptimizerState<Real>& opt) {
  require_same_size(params.size(), grad.size(), "sgd_step gradient");
  require_same_size(params.size(), opt.momentum_buffer.size(), "sgd_step momentum buffer");
  const Real lr = static_cast<Real>(opt.hyper.learning_rate);
  const Real mu = static_cast<Real>(opt.hyper.momentum);
  const Real decay = static_cast<Real>(opt.hyper.weight_decay);
  auto& m = opt.momentum_buffer;
  for (std::size_t i = 0; i < params.size(); ++i) {
    m[i] = mu * m[i] + grad[i] + decay * params[i];
    params[i] -= lr * m[i];
  }
}

}  // namespace flsnn
