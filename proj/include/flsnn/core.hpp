#pragma once

#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace flsnn {

/// Raised when vector/matrix dimensions disagree.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for invalid hyperparameters or experiment configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class ModelKind { spiking, dense };

inline const char* to_string(ModelKind k) { return k == ModelKind::spiking ? "snn" : "ann"; }

inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "snn" || s == "spiking") return ModelKind::spiking;
  if (s == "ann" || s == "dense") return ModelKind::dense;
  throw ConfigError("unknown model kind '" + s + "' (expected snn|ann)");
}

enum class BlockRole : std::uint8_t { weight, bias };

/// One contiguous block of the flat parameter array. Weights are stored
/// row-major with `rows` = fan-out and `cols` = fan-in; biases have cols = 1.
struct LayoutEntry {
  std::size_t layer = 0;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  BlockRole role = BlockRole::weight;

  std::size_t size() const { return rows * cols; }
  bool operator==(const LayoutEntry&) const = default;
};

struct Layout {
  std::vector<LayoutEntry> entries;

  std::size_t total() const {
    return std::accumulate(entries.begin(), entries.end(), std::size_t{0},
                           [](std::size_t acc, const LayoutEntry& e) { return acc + e.size(); });
  }

  /// True when the entries are laid out back to back from 0 and cover exactly n values.
  bool tiles(std::size_t n) const {
    std::size_t cursor = 0;
    for (const auto& e : entries) {
      if (e.offset != cursor) return false;
      cursor += e.size();
    }
    return cursor == n;
  }

  bool operator==(const Layout&) const = default;
};

/// Flat model weights plus the layer map that gives them shape.
template <typename Real>
struct ParameterVector {
  std::vector<Real> values;
  Layout layout;

  ParameterVector() = default;
  explicit ParameterVector(Layout l) : values(l.total(), Real(0)), layout(std::move(l)) {}

  std::size_t size() const { return values.size(); }

  std::span<Real> block(std::size_t i) {
    const auto& e = layout.entries.at(i);
    return std::span<Real>(values).subspan(e.offset, e.size());
  }
  std::span<const Real> block(std::size_t i) const {
    const auto& e = layout.entries.at(i);
    return std::span<const Real>(values).subspan(e.offset, e.size());
  }

  void check() const {
    if (!layout.tiles(values.size())) throw ShapeError("parameter layout does not tile the value array");
  }
};

/// A client's round delta in dense form.
template <typename Real>
using GradientUpdate = std::vector<Real>;

inline void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw ShapeError(std::string(what) + ": size mismatch (" + std::to_string(a) + " vs " +
                     std::to_string(b) + ")");
  }
}

}  // namespace flsnn
