#pragma once

// Kind-agnostic entry points used by the federated engine.

#include <cmath>
#include <span>
#include <vector>

#include "flsnn/ann.hpp"
#include "flsnn/data.hpp"
#include "flsnn/snn.hpp"

namespace flsnn {

struct ModelSpec {
  MlpTopology topology;
  LifParams lif;
  EncodingMode encoding = EncodingMode::direct;

  ModelKind kind() const { return topology.kind; }

  void validate() const {
    topology.validate();
    if (kind() == ModelKind::spiking) lif.validate();
  }
};

/// Mean-over-batch gradient written into `grad` (overwritten). Returns the mean loss.
/// `enc_rng` is only consulted for poisson-encoded spiking models.
template <typename Real>
double batch_gradient(const ModelSpec& spec, const ParameterVector<Real>& params, const Dataset& data,
                      std::span<const std::size_t> batch, std::span<Real> grad, Rng* enc_rng = nullptr) {
  if (batch.empty()) throw ShapeError("batch_gradient: empty batch");
  require_same_size(grad.size(), params.size(), "batch_gradient buffer");
  std::fill(grad.begin(), grad.end(), Real(0));
  const Real scale = Real(1) / static_cast<Real>(batch.size());
  double loss = 0.0;
  for (auto idx : batch) {
    const auto x = data.sample(idx);
    const std::size_t y = data.labels[idx];
    if (spec.kind() == ModelKind::spiking) {
      auto fw = snn_forward(params, encode_input<Real>(x, spec.lif.timesteps, spec.encoding, enc_rng), spec.topology,
                            spec.lif);
      loss += static_cast<double>(snn_backward_bptt(fw.trace, params, spec.topology, spec.lif, y, grad, scale));
    } else {
      auto act = ann_forward(params, x, spec.topology);
      loss += static_cast<double>(ann_backward(act, params, spec.topology, y, grad, scale));
    }
  }
  return loss / static_cast<double>(batch.size());
}

/// Predicted class: spike-count argmax for spiking nets, logit argmax for dense ones.
template <typename Real>
std::size_t predict(const ModelSpec& spec, const ParameterVector<Real>& params, std::span<const float> x,
                    Rng* enc_rng = nullptr) {
  if (spec.kind() == ModelKind::spiking) {
    auto fw = snn_forward(params, encode_input<Real>(x, spec.lif.timesteps, spec.encoding, enc_rng), spec.topology,
                          spec.lif);
    return argmax_counts(fw.counts);
  }
  const auto act = ann_forward(params, x, spec.topology);
  const auto logits = act.logits();
  return static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

}  // namespace flsnn
