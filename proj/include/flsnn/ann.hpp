#pragma once

// Dense affine+ReLU MLP with a softmax cross-entropy head.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "flsnn/core.hpp"
#include "flsnn/snn.hpp"

namespace flsnn {

template <typename Real>
struct AnnActivations {
  std::vector<float> input;
  std::vector<std::vector<Real>> pre;   // z_l = W_l a_{l-1} + b_l
  std::vector<std::vector<Real>> post;  // a_l = relu(z_l); the last layer keeps z_L (logits)

  std::span<const Real> logits() const { return post.back(); }
};

namespace detail {

inline void check_dense(const MlpTopology& topo, const Layout& layout) {
  if (topo.kind != ModelKind::dense) throw ShapeError("ann routine called with a spiking topology");
  if (layout.entries.size() != 2 * topo.num_layers()) throw ShapeError("parameter layout does not match topology");
  for (std::size_t l = 0; l < topo.num_layers(); ++l) {
    const auto& w = layout.entries[2 * l];
    const auto& b = layout.entries[2 * l + 1];
    if (w.rows != topo.layer_sizes[l + 1] || w.cols != topo.layer_sizes[l] || b.rows != w.rows || b.cols != 1) {
      throw ShapeError("parameter block shape does not match topology");
    }
  }
}

}  // namespace detail

template <typename Real>
AnnActivations<Real> ann_forward(const ParameterVector<Real>& params, std::span<const float> input,
                                 const MlpTopology& topo) {
  detail::check_dense(topo, params.layout);
  if (input.size() != topo.input_dim()) throw ShapeError("ann_forward: input dimension does not match topology");
  const std::size_t L = topo.num_layers();
  AnnActivations<Real> act;
  act.input.assign(input.begin(), input.end());
  act.pre.resize(L);
  act.post.resize(L);
  for (std::size_t l = 0; l < L; ++l) {
    const std::size_t n_in = topo.layer_sizes[l];
    const std::size_t n_out = topo.layer_sizes[l + 1];
    const auto W = params.block(2 * l);
    const auto b = params.block(2 * l + 1);
    auto& z = act.pre[l];
    z.assign(n_out, Real(0));
    for (std::size_t i = 0; i < n_out; ++i) {
      Real acc(0);
      const Real* row = W.data() + i * n_in;
      if (l == 0) {
        for (std::size_t j = 0; j < n_in; ++j) acc += row[j] * static_cast<Real>(input[j]);
      } else {
        const auto& a = act.post[l - 1];
        for (std::size_t j = 0; j < n_in; ++j) acc += row[j] * a[j];
      }
      z[i] = acc + b[i];
    }
    auto& a = act.post[l];
    a = z;
    if (l + 1 < L) {
      for (auto& v : a) v = std::max(v, Real(0));
    }
  }
  return act;
}

/// Softmax cross-entropy of logits; fills d_logits with softmax - onehot when non-empty.
template <typename Real>
Real softmax_ce(std::span<const Real> logits, std::size_t label, std::span<Real> d_logits = {}) {
  if (label >= logits.size()) throw ShapeError("softmax_ce: label out of range");
  const Real mx = *std::max_element(logits.begin(), logits.end());
  Real z(0);
  for (auto v : logits) z += std::exp(v - mx);
  if (!d_logits.empty()) {
    for (std::size_t i = 0; i < logits.size(); ++i) {
      d_logits[i] = std::exp(logits[i] - mx) / z - (i == label ? Real(1) : Real(0));
    }
  }
  return std::log(z) + mx - logits[label];
}

/// Accumulates scale * dLoss/dparams into `grad`; returns the loss.
template <typename Real>
Real ann_backward(const AnnActivations<Real>& act, const ParameterVector<Real>& params, const MlpTopology& topo,
                  std::size_t label, std::span<Real> grad, Real scale = Real(1)) {
  detail::check_dense(topo, params.layout);
  require_same_size(grad.size(), params.size(), "ann_backward gradient buffer");
  const std::size_t L = topo.num_layers();
  std::vector<Real> delta(topo.output_dim());
  const Real loss = softmax_ce<Real>(act.logits(), label, delta);
  std::vector<Real> below;
  for (std::size_t l = L; l-- > 0;) {
    const std::size_t n_in = topo.layer_sizes[l];
    const std::size_t n_out = topo.layer_sizes[l + 1];
    const auto& we = params.layout.entries[2 * l];
    const auto& be = params.layout.entries[2 * l + 1];
    Real* gw = grad.data() + we.offset;
    Real* gb = grad.data() + be.offset;
    for (std::size_t i = 0; i < n_out; ++i) {
      const Real di = scale * delta[i];
      gb[i] += di;
      if (l == 0) {
        for (std::size_t j = 0; j < n_in; ++j) gw[i * n_in + j] += di * static_cast<Real>(act.input[j]);
      } else {
        const auto& a = act.post[l - 1];
        for (std::size_t j = 0; j < n_in; ++j) gw[i * n_in + j] += di * a[j];
      }
    }
    if (l == 0) break;
    const auto W = params.block(2 * l);
    below.assign(n_in, Real(0));
    for (std::size_t i = 0; i < n_out; ++i) {
      const Real* row = W.data() + i * n_in;
      for (std::size_t j = 0; j < n_in; ++j) below[j] += row[j] * delta[i];
    }
    const auto& z = act.pre[l - 1];
    for (std::size_t j = 0; j < n_in; ++j) {
      if (z[j] <= Real(0)) below[j] = Real(0);
    }
    delta.swap(below);
  }
  return loss;
}

}  // namespace flsnn
