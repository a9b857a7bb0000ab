#pragma once

// Leaky integrate-and-fire MLP trained with surrogate-gradient BPTT.
//
// Layer l at timestep t (1-based, U^0 = S^0 = 0):
//   U_l^t = W_l s_{l-1}^t + beta * U_l^{t-1} - S_l^{t-1} * u_thr
//   S_l^t = [U_l^t > u_thr]
// where s_0^t is the encoded input frame. Spikes propagate to the next layer
// within the same timestep. Output class scores are spike counts over T.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "flsnn/core.hpp"
#include "flsnn/data.hpp"

namespace flsnn {

struct LifParams {
  double beta = 0.99;
  double u_thr = 1.0;
  std::size_t timesteps = 25;
  double surrogate_slope = 25.0;

  void validate() const {
    if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("LIF leak beta must lie in (0,1)");
    if (!(u_thr > 0.0)) throw ConfigError("LIF threshold must be positive");
    if (timesteps < 1) throw ConfigError("LIF timesteps must be >= 1");
    if (!(surrogate_slope > 0.0)) throw ConfigError("surrogate slope must be positive");
  }
};

template <typename Real>
struct LifOutput {
  Real u;
  bool spike;
};

template <typename Real>
constexpr LifOutput<Real> lif_step(Real u_prev, Real weighted_input, bool s_prev, const LifParams& p) {
  const Real u = weighted_input + static_cast<Real>(p.beta) * u_prev - (s_prev ? static_cast<Real>(p.u_thr) : Real(0));
  return {u, u > static_cast<Real>(p.u_thr)};
}

/// Fast-sigmoid surrogate for dS/dU: 1 / (1 + slope*|u - u_thr|)^2.
template <typename Real>
constexpr Real surrogate_derivative(Real u, const LifParams& p) {
  const Real x = static_cast<Real>(1) + static_cast<Real>(p.surrogate_slope) * std::abs(u - static_cast<Real>(p.u_thr));
  return static_cast<Real>(1) / (x * x);
}

struct MlpTopology {
  std::vector<std::size_t> layer_sizes;
  ModelKind kind = ModelKind::spiking;

  std::size_t num_layers() const { return layer_sizes.size() - 1; }
  std::size_t input_dim() const { return layer_sizes.front(); }
  std::size_t output_dim() const { return layer_sizes.back(); }

  void validate() const {
    if (layer_sizes.size() < 2) throw ConfigError("topology needs at least input and output sizes");
    for (auto s : layer_sizes) {
      if (s == 0) throw ConfigError("topology layer sizes must be >= 1");
    }
  }
};

/// Spiking nets carry one weight block per layer; dense nets add a bias block after each weight block.
inline Layout make_layout(const MlpTopology& topo) {
  topo.validate();
  Layout layout;
  std::size_t offset = 0;
  for (std::size_t l = 0; l < topo.num_layers(); ++l) {
    const std::size_t in = topo.layer_sizes[l];
    const std::size_t out = topo.layer_sizes[l + 1];
    layout.entries.push_back({l, offset, out, in, BlockRole::weight});
    offset += out * in;
    if (topo.kind == ModelKind::dense) {
      layout.entries.push_back({l, offset, out, 1, BlockRole::bias});
      offset += out;
    }
  }
  return layout;
}

/// Glorot-uniform weights, zero biases.
template <typename Real>
ParameterVector<Real> init_params(const MlpTopology& topo, Rng& rng) {
  ParameterVector<Real> p(make_layout(topo));
  for (std::size_t i = 0; i < p.layout.entries.size(); ++i) {
    const auto& e = p.layout.entries[i];
    if (e.role != BlockRole::weight) continue;
    const double limit = std::sqrt(6.0 / static_cast<double>(e.rows + e.cols));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (auto& w : p.block(i)) w = static_cast<Real>(dist(rng));
  }
  return p;
}

/// Membrane potentials and spikes of every layer at every timestep, stored [t][neuron].
template <typename Real>
struct ForwardTrace {
  EncodedInput<Real> input;
  std::vector<std::vector<Real>> potentials;
  std::vector<std::vector<std::uint8_t>> spikes;
  std::vector<std::size_t> widths;
  std::size_t timesteps = 0;

  std::span<const Real> u(std::size_t layer, std::size_t t) const {
    return std::span<const Real>(potentials[layer]).subspan(t * widths[layer], widths[layer]);
  }
  std::span<const std::uint8_t> s(std::size_t layer, std::size_t t) const {
    return std::span<const std::uint8_t>(spikes[layer]).subspan(t * widths[layer], widths[layer]);
  }
};

template <typename Real>
struct SnnForwardResult {
  std::vector<std::uint32_t> counts;
  ForwardTrace<Real> trace;
};

namespace detail {

inline void check_spiking(const MlpTopology& topo, const Layout& layout) {
  if (topo.kind != ModelKind::spiking) throw ShapeError("snn routine called with a dense topology");
  if (layout.entries.size() != topo.num_layers()) throw ShapeError("parameter layout does not match topology");
  for (std::size_t l = 0; l < topo.num_layers(); ++l) {
    const auto& e = layout.entries[l];
    if (e.rows != topo.layer_sizes[l + 1] || e.cols != topo.layer_sizes[l]) {
      throw ShapeError("parameter block shape does not match topology");
    }
  }
}

}  // namespace detail

template <typename Real>
SnnForwardResult<Real> snn_forward(const ParameterVector<Real>& params, EncodedInput<Real> input,
                                   const MlpTopology& topo, const LifParams& p) {
  detail::check_spiking(topo, params.layout);
  if (input.dim != topo.input_dim()) throw ShapeError("snn_forward: input dimension does not match topology");
  if (input.timesteps != p.timesteps) throw ShapeError("snn_forward: input length does not match T");

  const std::size_t T = p.timesteps;
  const std::size_t L = topo.num_layers();
  const Real beta = static_cast<Real>(p.beta);
  const Real thr = static_cast<Real>(p.u_thr);

  SnnForwardResult<Real> res;
  auto& tr = res.trace;
  tr.timesteps = T;
  tr.widths.assign(topo.layer_sizes.begin() + 1, topo.layer_sizes.end());
  tr.potentials.resize(L);
  tr.spikes.resize(L);

  std::vector<Real> current;
  std::vector<std::size_t> active;
  for (std::size_t l = 0; l < L; ++l) {
    const std::size_t n_in = topo.layer_sizes[l];
    const std::size_t n_out = topo.layer_sizes[l + 1];
    const auto W = params.block(l);
    tr.potentials[l].assign(T * n_out, Real(0));
    tr.spikes[l].assign(T * n_out, 0);
    current.assign(n_out, Real(0));

    for (std::size_t t = 0; t < T; ++t) {
      if (l == 0) {
        // constant-current inputs only need one matrix-vector product
        if (!input.constant || t == 0) {
          const auto x = input.frame(t);
          for (std::size_t i = 0; i < n_out; ++i) {
            Real acc(0);
            const Real* row = W.data() + i * n_in;
            for (std::size_t j = 0; j < n_in; ++j) acc += row[j] * x[j];
            current[i] = acc;
          }
        }
      } else {
        active.clear();
        const auto prev = tr.s(l - 1, t);
        for (std::size_t j = 0; j < n_in; ++j) {
          if (prev[j]) active.push_back(j);
        }
        for (std::size_t i = 0; i < n_out; ++i) {
          Real acc(0);
          const Real* row = W.data() + i * n_in;
          for (auto j : active) acc += row[j];
          current[i] = acc;
        }
      }

      Real* u_now = tr.potentials[l].data() + t * n_out;
      std::uint8_t* s_now = tr.spikes[l].data() + t * n_out;
      for (std::size_t i = 0; i < n_out; ++i) {
        const Real u_prev = t == 0 ? Real(0) : u_now[i - n_out];
        const bool s_prev = t == 0 ? false : s_now[i - n_out] != 0;
        const Real u = current[i] + beta * u_prev - (s_prev ? thr : Real(0));
        u_now[i] = u;
        s_now[i] = u > thr ? 1 : 0;
      }
    }
  }

  res.counts.assign(topo.output_dim(), 0);
  for (std::size_t t = 0; t < T; ++t) {
    const auto s = tr.s(L - 1, t);
    for (std::size_t i = 0; i < s.size(); ++i) res.counts[i] += s[i];
  }
  tr.input = std::move(input);
  return res;
}

/// Softmax cross-entropy on firing rates counts/T. Returns the loss; when
/// `d_rates` is non-empty it receives dLoss/d(rate_i).
template <typename Real>
Real loss_rate_ce(std::span<const std::uint32_t> counts, std::size_t timesteps, std::size_t label,
                  std::span<Real> d_rates = {}) {
  if (label >= counts.size()) throw ShapeError("loss_rate_ce: label out of range");
  const Real inv_t = Real(1) / static_cast<Real>(timesteps);
  Real max_r = Real(0);
  for (auto c : counts) max_r = std::max(max_r, static_cast<Real>(c) * inv_t);
  Real z(0);
  for (auto c : counts) z += std::exp(static_cast<Real>(c) * inv_t - max_r);
  const Real loss = std::log(z) + max_r - static_cast<Real>(counts[label]) * inv_t;
  if (!d_rates.empty()) {
    require_same_size(d_rates.size(), counts.size(), "loss_rate_ce gradient");
    for (std::size_t i = 0; i < counts.size(); ++i) {
      d_rates[i] = std::exp(static_cast<Real>(counts[i]) * inv_t - max_r) / z - (i == label ? Real(1) : Real(0));
    }
  }
  return loss;
}

/// Accumulates scale * dLoss/dW into `grad` (same layout as params) and returns the loss.
/// Every Heaviside derivative is replaced by surrogate_derivative, including the
/// one on the reset term.
template <typename Real>
Real snn_backward_bptt(const ForwardTrace<Real>& trace, const ParameterVector<Real>& params,
                       const MlpTopology& topo, const LifParams& p, std::size_t label, std::span<Real> grad,
                       Real scale = Real(1)) {
  detail::check_spiking(topo, params.layout);
  require_same_size(grad.size(), params.size(), "snn_backward_bptt gradient buffer");
  const std::size_t L = topo.num_layers();
  const std::size_t T = p.timesteps;
  if (trace.timesteps != T || trace.potentials.size() != L) throw ShapeError("trace does not match network");
  for (std::size_t l = 0; l < L; ++l) {
    if (trace.widths[l] != topo.layer_sizes[l + 1] || trace.potentials[l].size() != T * trace.widths[l]) {
      throw ShapeError("trace does not match network");
    }
  }

  const Real beta = static_cast<Real>(p.beta);
  const Real thr = static_cast<Real>(p.u_thr);
  const Real inv_t = Real(1) / static_cast<Real>(T);

  // counts from the trace itself so forward/backward can't disagree
  std::vector<std::uint32_t> counts(topo.output_dim(), 0);
  for (std::size_t t = 0; t < T; ++t) {
    const auto s = trace.s(L - 1, t);
    for (std::size_t i = 0; i < s.size(); ++i) counts[i] += s[i];
  }
  std::vector<Real> d_rates(counts.size());
  const Real loss = loss_rate_ce<Real>(counts, T, label, d_rates);

  // upstream[t * n + i] = dLoss/dS_i^t arriving from the layer above (or the loss)
  std::vector<Real> upstream(T * topo.output_dim());
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t i = 0; i < counts.size(); ++i) upstream[t * counts.size() + i] = d_rates[i] * inv_t;
  }

  std::vector<Real> delta;  // dLoss/dU_i^t, [t][i]
  std::vector<Real> next_upstream;
  for (std::size_t l = L; l-- > 0;) {
    const std::size_t n_in = topo.layer_sizes[l];
    const std::size_t n_out = topo.layer_sizes[l + 1];
    delta.assign(T * n_out, Real(0));
    for (std::size_t t = T; t-- > 0;) {
      const auto u = trace.u(l, t);
      Real* d_now = delta.data() + t * n_out;
      const Real* up = upstream.data() + t * n_out;
      for (std::size_t i = 0; i < n_out; ++i) {
        Real d_spike = up[i];
        Real carry(0);
        if (t + 1 < T) {
          const Real d_next = d_now[n_out + i];
          d_spike -= thr * d_next;
          carry = beta * d_next;
        }
        d_now[i] = d_spike * surrogate_derivative(u[i], p) + carry;
      }
    }

    const auto& e = params.layout.entries[l];
    Real* g = grad.data() + e.offset;
    if (l == 0 && trace.input.constant) {
      std::vector<Real> d_sum(n_out, Real(0));
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t i = 0; i < n_out; ++i) d_sum[i] += delta[t * n_out + i];
      }
      const auto x = trace.input.frame(0);
      for (std::size_t i = 0; i < n_out; ++i) {
        const Real di = scale * d_sum[i];
        for (std::size_t j = 0; j < n_in; ++j) g[i * n_in + j] += di * x[j];
      }
    } else {
      for (std::size_t t = 0; t < T; ++t) {
        const Real* d_now = delta.data() + t * n_out;
        if (l == 0) {
          const auto x = trace.input.frame(t);
          for (std::size_t i = 0; i < n_out; ++i) {
            const Real di = scale * d_now[i];
            for (std::size_t j = 0; j < n_in; ++j) g[i * n_in + j] += di * x[j];
          }
        } else {
          const auto s = trace.s(l - 1, t);
          for (std::size_t j = 0; j < n_in; ++j) {
            if (!s[j]) continue;
            for (std::size_t i = 0; i < n_out; ++i) g[i * n_in + j] += scale * d_now[i];
          }
        }
      }
    }

    if (l > 0) {
      const auto W = params.block(l);
      next_upstream.assign(T * n_in, Real(0));
      for (std::size_t t = 0; t < T; ++t) {
        const Real* d_now = delta.data() + t * n_out;
        Real* dst = next_upstream.data() + t * n_in;
        for (std::size_t i = 0; i < n_out; ++i) {
          const Real di = d_now[i];
          if (di == Real(0)) continue;
          const Real* row = W.data() + i * n_in;
          for (std::size_t j = 0; j < n_in; ++j) dst[j] += row[j] * di;
        }
      }
      upstream.swap(next_upstream);
    }
  }
  return loss;
}

/// Index of the most active output neuron (lowest index on ties).
inline std::size_t argmax_counts(std::span<const std::uint32_t> counts) {
  return static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

}  // namespace flsnn
