#pragma once

// Reference gradients for the spiking and dense networks, computed without
// any of the production forward/backward code.

#include <cstdint>
#include <vector>

#include "flsnn/flsnn.hpp"
#include "oracles/tape.hpp"

namespace oracle {

struct BpttReference {
  double loss = 0.0;
  std::vector<double> grad;
  std::vector<std::uint32_t> counts;
};

/// Fully unrolls the LIF network on a tape: every timestep, every neuron, every
/// synapse is its own node. frames[t] is the input at timestep t.
inline BpttReference naive_bptt(const flsnn::ParameterVector<double>& params, const flsnn::MlpTopology& topo,
                                const flsnn::LifParams& p, const std::vector<std::vector<double>>& frames,
                                std::size_t label) {
  Tape tape;
  const std::size_t L = topo.num_layers();
  const std::size_t T = p.timesteps;
  std::vector<std::vector<Tape::Id>> W(L);
  for (std::size_t l = 0; l < L; ++l) {
    for (double w : params.block(l)) W[l].push_back(tape.leaf(w));
  }
  const auto zero = tape.leaf(0.0);
  const auto beta = tape.leaf(p.beta);
  const auto thr = tape.leaf(p.u_thr);
  auto pseudo = [&](double u) { return flsnn::surrogate_derivative<double>(u, p); };

  std::vector<std::vector<Tape::Id>> u_prev(L), s_prev(L);
  for (std::size_t l = 0; l < L; ++l) {
    u_prev[l].assign(topo.layer_sizes[l + 1], zero);
    s_prev[l].assign(topo.layer_sizes[l + 1], zero);
  }
  std::vector<std::vector<Tape::Id>> out_spikes(T);
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<Tape::Id> below;
    for (double x : frames[t]) below.push_back(tape.leaf(x));
    for (std::size_t l = 0; l < L; ++l) {
      const std::size_t n_in = topo.layer_sizes[l];
      const std::size_t n_out = topo.layer_sizes[l + 1];
      std::vector<Tape::Id> spikes(n_out);
      for (std::size_t i = 0; i < n_out; ++i) {
        auto cur = zero;
        for (std::size_t j = 0; j < n_in; ++j) cur = tape.add(cur, tape.mul(W[l][i * n_in + j], below[j]));
        auto u = tape.add(cur, tape.mul(beta, u_prev[l][i]));
        u = tape.sub(u, tape.mul(s_prev[l][i], thr));
        spikes[i] = tape.step(u, p.u_thr, pseudo);
        u_prev[l][i] = u;
        s_prev[l][i] = spikes[i];
      }
      below = spikes;
    }
    out_spikes[t] = below;
  }

  const std::size_t C = topo.output_dim();
  BpttReference ref;
  ref.counts.assign(C, 0);
  std::vector<Tape::Id> rates(C);
  for (std::size_t i = 0; i < C; ++i) {
    auto c = zero;
    for (std::size_t t = 0; t < T; ++t) {
      c = tape.add(c, out_spikes[t][i]);
      ref.counts[i] += static_cast<std::uint32_t>(tape.value(out_spikes[t][i]));
    }
    rates[i] = tape.scale(c, 1.0 / static_cast<double>(T));
  }
  auto z = zero;
  for (auto r : rates) z = tape.add(z, tape.exp(r));
  const auto loss = tape.sub(tape.log(z), rates[label]);
  ref.loss = tape.value(loss);

  const auto adj = tape.gradient(loss);
  for (std::size_t l = 0; l < L; ++l) {
    for (auto id : W[l]) ref.grad.push_back(adj[id]);
  }
  return ref;
}

/// Central finite differences of the dense-network loss (double precision).
inline std::vector<double> finite_difference_grad(const flsnn::ParameterVector<double>& params,
                                                  const flsnn::MlpTopology& topo, const std::vector<float>& x,
                                                  std::size_t label, double h = 1e-5) {
  auto loss_at = [&](const flsnn::ParameterVector<double>& q) {
    const auto act = flsnn::ann_forward(q, std::span<const float>(x), topo);
    return flsnn::softmax_ce<double>(act.logits(), label);
  };
  std::vector<double> g(params.size());
  auto q = params;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double w = q.values[i];
    q.values[i] = w + h;
    const double up = loss_at(q);
    q.values[i] = w - h;
    const double down = loss_at(q);
    q.values[i] = w;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// max|a - b| / max|b|, or max|a - b| when b vanishes.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max(scale, std::abs(b[i]));
  }
  return scale > 1e-300 ? diff / scale : diff;
}

}  // namespace oracle
