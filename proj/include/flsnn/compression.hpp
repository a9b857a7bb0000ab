#pragma once

// Top-kappa magnitude sparsification of client updates.
//
// Wire format (little-endian):
//   sparse: u32 dim, u32 k, then k x (u32 index, f32 value), index-sorted
//   dense:  u32 dim, u32 0xFFFFFFFF, then dim x f32

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "flsnn/core.hpp"

namespace flsnn {

struct CompressionConfig {
  double kappa = 0.1;

  void validate() const {
    if (!(kappa > 0.0 && kappa <= 1.0)) throw ConfigError("kappa must lie in (0, 1]");
  }
};

struct SparseUpdate {
  std::uint32_t dim = 0;
  std::vector<std::uint32_t> indices;
  std::vector<float> values;

  std::size_t nnz() const { return indices.size(); }

  void check() const {
    require_same_size(indices.size(), values.size(), "sparse update");
    for (std::size_t i = 0; i < indices.size(); ++i) {
      if (indices[i] >= dim) throw ShapeError("sparse update index out of range");
      if (i > 0 && indices[i] <= indices[i - 1]) throw ShapeError("sparse update indices not strictly increasing");
    }
  }
};

inline constexpr std::size_t kPayloadHeaderBytes = 8;
inline constexpr std::uint32_t kDenseTag = 0xFFFFFFFFu;

/// Number of retained coordinates: max(1, floor(kappa * d)).
inline std::size_t topk_count(double kappa, std::size_t d) {
  // guard against 0.1*50 landing on 4.999... before flooring
  const double raw = kappa * static_cast<double>(d);
  auto k = static_cast<std::size_t>(std::floor(raw + 1e-9 * std::max(1.0, raw)));
  return std::clamp<std::size_t>(k, 1, d);
}

inline std::size_t sparse_payload_bytes(std::size_t k) { return kPayloadHeaderBytes + 8 * k; }
inline std::size_t dense_payload_bytes(std::size_t d) { return kPayloadHeaderBytes + 4 * d; }

/// Keeps the k largest-magnitude coordinates; equal magnitudes prefer the lower index.
inline SparseUpdate topk_compress(std::span<const float> dense, const CompressionConfig& cfg) {
  cfg.validate();
  if (dense.empty()) throw ShapeError("topk_compress: empty update");
  const std::size_t d = dense.size();
  const std::size_t k = topk_count(cfg.kappa, d);

  SparseUpdate sp;
  sp.dim = static_cast<std::uint32_t>(d);
  if (k == d) {
    sp.indices.resize(d);
    std::iota(sp.indices.begin(), sp.indices.end(), 0u);
    sp.values.assign(dense.begin(), dense.end());
    return sp;
  }

  std::vector<std::uint32_t> order(d);
  std::iota(order.begin(), order.end(), 0u);
  auto before = [&](std::uint32_t a, std::uint32_t b) {
    const float ma = std::abs(dense[a]);
    const float mb = std::abs(dense[b]);
    if (ma != mb) return ma > mb;
    return a < b;
  };
  std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), before);
  order.resize(k);
  std::sort(order.begin(), order.end());
  sp.indices = std::move(order);
  sp.values.reserve(k);
  for (auto i : sp.indices) sp.values.push_back(dense[i]);
  return sp;
}

inline std::vector<float> decompress(const SparseUpdate& sp) {
  require_same_size(sp.indices.size(), sp.values.size(), "sparse update");
  std::vector<float> out(sp.dim, 0.0f);
  for (std::size_t i = 0; i < sp.indices.size(); ++i) {
    if (sp.indices[i] >= sp.dim) throw ShapeError("decompress: index out of range");
    out[sp.indices[i]] = sp.values[i];
  }
  return out;
}

/// Per-coordinate count of how often each parameter survived compression.
struct RetentionCounters {
  std::vector<std::uint64_t> counts;
  std::uint64_t updates = 0;

  RetentionCounters() = default;
  explicit RetentionCounters(std::size_t dim) : counts(dim, 0) {}

  std::uint64_t total() const { return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}); }
};

inline void record_retention(const SparseUpdate& sp, RetentionCounters& acc) {
  require_same_size(acc.counts.size(), sp.dim, "retention counters");
  for (auto i : sp.indices) {
    if (i >= acc.counts.size()) throw ShapeError("record_retention: index out of range");
    ++acc.counts[i];
  }
  ++acc.updates;
}

// ---------------------------------------------------------------------------
// Serialization

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}
inline void put_f32(std::vector<std::uint8_t>& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

inline std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
  if (at + 4 > in.size()) throw std::runtime_error("payload truncated");
  return std::uint32_t{in[at]} | (std::uint32_t{in[at + 1]} << 8) | (std::uint32_t{in[at + 2]} << 16) |
         (std::uint32_t{in[at + 3]} << 24);
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_sparse(const SparseUpdate& sp) {
  std::vector<std::uint8_t> out;
  out.reserve(sparse_payload_bytes(sp.nnz()));
  detail::put_u32(out, sp.dim);
  detail::put_u32(out, static_cast<std::uint32_t>(sp.nnz()));
  for (std::size_t i = 0; i < sp.nnz(); ++i) {
    detail::put_u32(out, sp.indices[i]);
    detail::put_f32(out, sp.values[i]);
  }
  return out;
}

inline SparseUpdate decode_sparse(std::span<const std::uint8_t> in) {
  SparseUpdate sp;
  sp.dim = detail::get_u32(in, 0);
  const std::uint32_t k = detail::get_u32(in, 4);
  if (k == kDenseTag) throw std::runtime_error("payload is dense, not sparse");
  if (in.size() != sparse_payload_bytes(k)) throw std::runtime_error("sparse payload has wrong length");
  sp.indices.resize(k);
  sp.values.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    sp.indices[i] = detail::get_u32(in, 8 + 8 * i);
    sp.values[i] = std::bit_cast<float>(detail::get_u32(in, 12 + 8 * i));
  }
  sp.check();
  return sp;
}

inline std::vector<std::uint8_t> encode_dense(std::span<const float> v) {
  std::vector<std::uint8_t> out;
  out.reserve(dense_payload_bytes(v.size()));
  detail::put_u32(out, static_cast<std::uint32_t>(v.size()));
  detail::put_u32(out, kDenseTag);
  for (auto f : v) detail::put_f32(out, f);
  return out;
}

inline std::vector<float> decode_dense(std::span<const std::uint8_t> in) {
  const std::uint32_t d = detail::get_u32(in, 0);
  if (detail::get_u32(in, 4) != kDenseTag) throw std::runtime_error("payload is not dense");
  if (in.size() != dense_payload_bytes(d)) throw std::runtime_error("dense payload has wrong length");
  std::vector<float> v(d);
  for (std::size_t i = 0; i < d; ++i) v[i] = std::bit_cast<float>(detail::get_u32(in, 8 + 4 * i));
  return v;
}

}  // namespace flsnn
