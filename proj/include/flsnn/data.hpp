#pragma once

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "flsnn/core.hpp"
#include "flsnn/rng.hpp"

namespace flsnn {

/// Row-major n x d feature matrix in [0,1] with class labels.
struct Dataset {
  std::size_t dim = 0;
  std::size_t num_classes = 0;
  std::vector<float> samples;
  std::vector<std::uint32_t> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const float> sample(std::size_t i) const {
    return std::span<const float>(samples).subspan(i * dim, dim);
  }

  void check() const {
    if (labels.empty()) throw ShapeError("dataset is empty");
    require_same_size(samples.size(), labels.size() * dim, "dataset samples");
    for (auto l : labels) {
      if (l >= num_classes) throw ShapeError("dataset label out of range");
    }
  }
};

// ---------------------------------------------------------------------------
// IDX reader

class IdxError : public std::runtime_error {
 public:
  enum class Kind { io, bad_magic, truncated, count_mismatch };
  IdxError(Kind k, const std::string& msg) : std::runtime_error(msg), kind_(k) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

namespace detail {

/// Reads a whole file, transparently inflating gzip input.
inline std::vector<unsigned char> read_maybe_gz(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw IdxError(IdxError::Kind::io, "cannot open " + path.string());
  }
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (f == nullptr) throw IdxError(IdxError::Kind::io, "cannot open " + path.string());
  std::vector<unsigned char> out;
  std::array<unsigned char, 1 << 16> buf{};
  for (;;) {
    int n = gzread(f, buf.data(), static_cast<unsigned>(buf.size()));
    if (n < 0) {
      gzclose(f);
      throw IdxError(IdxError::Kind::io, "read failure in " + path.string());
    }
    if (n == 0) break;
    out.insert(out.end(), buf.begin(), buf.begin() + n);
  }
  gzclose(f);
  return out;
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) |
         std::uint32_t{b[at + 3]};
}

}  // namespace detail

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Loads an IDX image/label pair (plain or gzip). Pixels are scaled by 1/255.
inline Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  using K = IdxError::Kind;
  const auto img = detail::read_maybe_gz(images_path);
  const auto lab = detail::read_maybe_gz(labels_path);

  if (img.size() < 16) throw IdxError(K::truncated, "image file truncated: " + images_path.string());
  if (lab.size() < 8) throw IdxError(K::truncated, "label file truncated: " + labels_path.string());
  if (detail::read_be32(img, 0) != kIdxImageMagic) throw IdxError(K::bad_magic, "bad image magic in " + images_path.string());
  if (detail::read_be32(lab, 0) != kIdxLabelMagic) throw IdxError(K::bad_magic, "bad label magic in " + labels_path.string());

  const std::size_t n_img = detail::read_be32(img, 4);
  const std::size_t rows = detail::read_be32(img, 8);
  const std::size_t cols = detail::read_be32(img, 12);
  const std::size_t n_lab = detail::read_be32(lab, 4);
  if (n_img != n_lab) {
    throw IdxError(K::count_mismatch,
                   "image/label count mismatch: " + std::to_string(n_img) + " vs " + std::to_string(n_lab));
  }
  const std::size_t d = rows * cols;
  if (img.size() < 16 + n_img * d) throw IdxError(K::truncated, "image payload truncated");
  if (lab.size() < 8 + n_lab) throw IdxError(K::truncated, "label payload truncated");

  Dataset ds;
  ds.dim = d;
  ds.samples.resize(n_img * d);
  ds.labels.resize(n_lab);
  for (std::size_t i = 0; i < n_img * d; ++i) ds.samples[i] = static_cast<float>(img[16 + i]) / 255.0f;
  std::uint32_t max_label = 0;
  for (std::size_t i = 0; i < n_lab; ++i) {
    ds.labels[i] = lab[8 + i];
    max_label = std::max(max_label, ds.labels[i]);
  }
  ds.num_classes = n_lab == 0 ? 0 : std::max<std::size_t>(10, max_label + 1);
  return ds;
}

/// Looks for the conventional MNIST file names (optionally .gz) under `dir`.
inline Dataset load_idx_dir(const std::filesystem::path& dir, bool train) {
  const std::string stem = train ? "train" : "t10k";
  auto pick = [&](const std::string& name) {
    auto p = dir / name;
    if (std::filesystem::exists(p)) return p;
    auto gz = dir / (name + ".gz");
    if (std::filesystem::exists(gz)) return gz;
    throw IdxError(IdxError::Kind::io, "missing " + p.string() + "[.gz]");
  };
  return load_idx(pick(stem + "-images-idx3-ubyte"), pick(stem + "-labels-idx1-ubyte"));
}

// ---------------------------------------------------------------------------
// Synthetic data

/// Gaussian blobs around class centres drawn uniformly from [0.15, 0.85]^d,
/// clamped to [0,1]. Samples are interleaved by class.
inline Dataset synth_blobs(std::size_t num_classes, std::size_t d, std::size_t per_class, double spread,
                           std::uint64_t seed) {
  if (num_classes == 0 || d == 0 || per_class == 0 || spread < 0.0) {
    throw ConfigError("synth_blobs: sizes must be positive and spread non-negative");
  }
  Rng rng(derive_seed(seed, {tag(Stream::dataset)}));
  std::uniform_real_distribution<double> centre_dist(0.15, 0.85);
  std::normal_distribution<double> noise(0.0, 1.0);

  std::vector<double> centres(num_classes * d);
  for (auto& c : centres) c = centre_dist(rng);

  Dataset ds;
  ds.dim = d;
  ds.num_classes = num_classes;
  ds.samples.reserve(num_classes * per_class * d);
  for (std::size_t i = 0; i < per_class; ++i) {
    for (std::size_t c = 0; c < num_classes; ++c) {
      for (std::size_t j = 0; j < d; ++j) {
        double v = centres[c * d + j] + spread * noise(rng);
        ds.samples.push_back(static_cast<float>(std::clamp(v, 0.0, 1.0)));
      }
      ds.labels.push_back(static_cast<std::uint32_t>(c));
    }
  }
  return ds;
}

/// Deterministic split of a dataset into a train part and a test part (test = every k-th sample).
inline std::pair<Dataset, Dataset> holdout_split(const Dataset& ds, std::size_t every) {
  Dataset train, test;
  train.dim = test.dim = ds.dim;
  train.num_classes = test.num_classes = ds.num_classes;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto& dst = (i % every == every - 1) ? test : train;
    auto s = ds.sample(i);
    dst.samples.insert(dst.samples.end(), s.begin(), s.end());
    dst.labels.push_back(ds.labels[i]);
  }
  return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// Partitioning and batching

/// A client's slice of the training set. Batches are drawn sequentially from
/// a per-epoch shuffled order; the order depends only on (seed, client, epoch).
class ClientShard {
 public:
  ClientShard() = default;
  ClientShard(std::vector<std::size_t> indices, std::uint64_t seed, std::uint64_t client_id)
      : indices_(std::move(indices)), seed_(seed), client_id_(client_id) {
    reshuffle();
  }

  const std::vector<std::size_t>& indices() const { return indices_; }
  std::size_t size() const { return indices_.size(); }
  std::size_t epoch() const { return epoch_; }

  /// Next `batch_size` sample indices, wrapping into a freshly shuffled epoch as needed.
  std::vector<std::size_t> next_batch(std::size_t batch_size) {
    if (indices_.empty()) throw ShapeError("client shard is empty");
    std::vector<std::size_t> batch;
    batch.reserve(batch_size);
    while (batch.size() < batch_size) {
      if (cursor_ == order_.size()) {
        ++epoch_;
        reshuffle();
      }
      batch.push_back(order_[cursor_++]);
    }
    return batch;
  }

 private:
  void reshuffle() {
    order_ = indices_;
    Rng rng = make_rng(seed_, {tag(Stream::shuffle), client_id_, epoch_});
    std::shuffle(order_.begin(), order_.end(), rng);
    cursor_ = 0;
  }

  std::vector<std::size_t> indices_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
  std::uint64_t seed_ = 0;
  std::uint64_t client_id_ = 0;
};

/// Random permutation of [0, n) cut into `num_clients` contiguous shards whose
/// sizes differ by at most one (the first n % num_clients shards get the extra sample).
inline std::vector<ClientShard> partition_iid(const Dataset& ds, std::size_t num_clients, std::uint64_t seed) {
  const std::size_t n = ds.size();
  if (num_clients == 0) throw ConfigError("partition_iid: need at least one client");
  if (num_clients > n) throw ConfigError("partition_iid: more clients than samples");

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng = make_rng(seed, {tag(Stream::partition)});
  std::shuffle(perm.begin(), perm.end(), rng);

  std::vector<ClientShard> shards;
  shards.reserve(num_clients);
  const std::size_t base = n / num_clients;
  const std::size_t extra = n % num_clients;
  std::size_t at = 0;
  for (std::size_t c = 0; c < num_clients; ++c) {
    const std::size_t len = base + (c < extra ? 1 : 0);
    shards.emplace_back(std::vector<std::size_t>(perm.begin() + at, perm.begin() + at + len), seed, c);
    at += len;
  }
  return shards;
}

// ---------------------------------------------------------------------------
// SNN input encoding

enum class EncodingMode { direct, poisson };

inline EncodingMode parse_encoding(const std::string& s) {
  if (s == "direct") return EncodingMode::direct;
  if (s == "poisson") return EncodingMode::poisson;
  throw ConfigError("unknown input encoding '" + s + "'");
}

/// T input frames of width `dim`. A constant encoding stores a single frame
/// that is presented at every timestep.
template <typename Real>
struct EncodedInput {
  std::size_t dim = 0;
  std::size_t timesteps = 0;
  bool constant = false;
  std::vector<Real> frames;

  std::span<const Real> frame(std::size_t t) const {
    const std::size_t slot = constant ? 0 : t;
    return std::span<const Real>(frames).subspan(slot * dim, dim);
  }
};

template <typename Real>
EncodedInput<Real> encode_input(std::span<const float> sample, std::size_t timesteps, EncodingMode mode,
                                Rng* rng = nullptr) {
  EncodedInput<Real> enc;
  enc.dim = sample.size();
  enc.timesteps = timesteps;
  if (mode == EncodingMode::direct) {
    enc.constant = true;
    enc.frames.assign(sample.begin(), sample.end());
    return enc;
  }
  if (rng == nullptr) throw ConfigError("poisson encoding requires a random stream");
  enc.frames.resize(timesteps * enc.dim);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t t = 0; t < timesteps; ++t) {
    for (std::size_t j = 0; j < enc.dim; ++j) {
      // value 1 always fires, value 0 never does
      enc.frames[t * enc.dim + j] = u(*rng) < static_cast<double>(sample[j]) ? Real(1) : Real(0);
    }
  }
  return enc;
}

}  // namespace flsnn
