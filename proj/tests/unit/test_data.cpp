#include <gtest/gtest.h>
#include <zlib.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "flsnn/data.hpp"

using namespace flsnn;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("flsnn_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

void be32(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v >> 24));
  out.push_back(static_cast<unsigned char>(v >> 16));
  out.push_back(static_cast<unsigned char>(v >> 8));
  out.push_back(static_cast<unsigned char>(v));
}

std::vector<unsigned char> idx_images(std::uint32_t n, std::uint32_t rows, std::uint32_t cols,
                                      const std::vector<unsigned char>& pixels) {
  std::vector<unsigned char> b;
  be32(b, 0x00000803);
  be32(b, n);
  be32(b, rows);
  be32(b, cols);
  b.insert(b.end(), pixels.begin(), pixels.end());
  return b;
}

std::vector<unsigned char> idx_labels(const std::vector<unsigned char>& labels, std::uint32_t n) {
  std::vector<unsigned char> b;
  be32(b, 0x00000801);
  be32(b, n);
  b.insert(b.end(), labels.begin(), labels.end());
  return b;
}

void write(const std::filesystem::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream f(p, std::ios::binary);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_gz(const std::filesystem::path& p, const std::vector<unsigned char>& bytes) {
  gzFile f = gzopen(p.string().c_str(), "wb");
  gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
  gzclose(f);
}

IdxError::Kind kind_of(const std::filesystem::path& img, const std::filesystem::path& lab) {
  try {
    load_idx(img, lab);
  } catch (const IdxError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an IdxError";
  return IdxError::Kind::io;
}

}  // namespace

TEST(LoadIdx, TwoByTwoFixture) {
  const auto dir = scratch_dir("fixture");
  write(dir / "img", idx_images(1, 2, 2, {0, 255, 128, 64}));
  write(dir / "lab", idx_labels({7}, 1));
  const auto ds = load_idx(dir / "img", dir / "lab");
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds.dim, 4u);
  EXPECT_EQ(ds.labels[0], 7u);
  EXPECT_FLOAT_EQ(ds.samples[0], 0.0f);
  EXPECT_FLOAT_EQ(ds.samples[1], 1.0f);
  EXPECT_NEAR(ds.samples[2], 0.50196, 1e-5);
  EXPECT_NEAR(ds.samples[3], 0.25098, 1e-5);
}

TEST(LoadIdx, GzipRoundTripsByteExactly) {
  const auto dir = scratch_dir("gz");
  std::vector<unsigned char> pixels(3 * 28 * 28);
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = static_cast<unsigned char>((i * 37) % 256);
  write_gz(dir / "train-images-idx3-ubyte.gz", idx_images(3, 28, 28, pixels));
  write_gz(dir / "train-labels-idx1-ubyte.gz", idx_labels({1, 2, 3}, 3));
  const auto ds = load_idx_dir(dir, true);
  ASSERT_EQ(ds.size(), 3u);
  EXPECT_EQ(ds.dim, 784u);
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    ASSERT_EQ(static_cast<unsigned char>(std::lround(ds.samples[i] * 255.0f)), pixels[i]);
  }
  EXPECT_EQ(ds.labels, (std::vector<std::uint32_t>{1, 2, 3}));
}

TEST(LoadIdx, DistinctErrors) {
  const auto dir = scratch_dir("errors");
  write(dir / "img", idx_images(2, 1, 1, {1, 2}));
  write(dir / "lab1", idx_labels({0}, 1));
  EXPECT_EQ(kind_of(dir / "img", dir / "lab1"), IdxError::Kind::count_mismatch);

  write(dir / "empty", {});
  write(dir / "lab2", idx_labels({0, 1}, 2));
  EXPECT_EQ(kind_of(dir / "empty", dir / "lab2"), IdxError::Kind::truncated);

  write(dir / "short", idx_images(5, 2, 2, {1, 2, 3}));
  write(dir / "lab5", idx_labels({0, 0, 0, 0, 0}, 5));
  EXPECT_EQ(kind_of(dir / "short", dir / "lab5"), IdxError::Kind::truncated);

  auto bad = idx_images(2, 1, 1, {1, 2});
  bad[3] = 0x04;
  write(dir / "bad", bad);
  EXPECT_EQ(kind_of(dir / "bad", dir / "lab2"), IdxError::Kind::bad_magic);

  EXPECT_EQ(kind_of(dir / "missing", dir / "lab2"), IdxError::Kind::io);
}

TEST(SynthBlobs, ZeroSpreadCollapsesToCentres) {
  const auto ds = synth_blobs(3, 5, 4, 0.0, 11);
  ASSERT_EQ(ds.size(), 12u);
  for (std::size_t i = 3; i < ds.size(); ++i) {
    const auto a = ds.sample(i);
    const auto b = ds.sample(i % 3);
    EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin()));
    EXPECT_EQ(ds.labels[i], ds.labels[i % 3]);
  }
}

TEST(SynthBlobs, DeterministicAndInRange) {
  const auto a = synth_blobs(4, 8, 20, 0.2, 5);
  const auto b = synth_blobs(4, 8, 20, 0.2, 5);
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_EQ(a.labels, b.labels);
  for (float v : a.samples) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
  EXPECT_NE(synth_blobs(4, 8, 20, 0.2, 6).samples, a.samples);
}

TEST(SynthBlobs, WellSeparatedPairIsLinearlySeparable) {
  // small spread against centres drawn in [0.15,0.85]: the midpoint hyperplane splits them
  const auto ds = synth_blobs(2, 2, 200, 0.005, 3);
  const auto c0 = ds.sample(0);
  const auto c1 = ds.sample(1);
  std::vector<double> w{c1[0] - c0[0], c1[1] - c0[1]};
  const double b = -(w[0] * (c0[0] + c1[0]) + w[1] * (c0[1] + c1[1])) / 2.0;
  ASSERT_GT(std::hypot(w[0], w[1]), 0.05);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto x = ds.sample(i);
    const double s = w[0] * x[0] + w[1] * x[1] + b;
    EXPECT_EQ(s > 0 ? 1u : 0u, ds.labels[i]);
  }
}

TEST(PartitionIid, EvenSplit) {
  const auto ds = synth_blobs(4, 2, 25, 0.1, 1);
  const auto shards = partition_iid(ds, 20, 9);
  ASSERT_EQ(shards.size(), 20u);
  for (const auto& s : shards) EXPECT_EQ(s.size(), 5u);
}

TEST(PartitionIid, RemainderGoesToFirstShards) {
  auto ds = synth_blobs(1, 2, 101, 0.1, 1);
  const auto shards = partition_iid(ds, 20, 9);
  EXPECT_EQ(shards[0].size(), 6u);
  for (std::size_t c = 1; c < 20; ++c) EXPECT_EQ(shards[c].size(), 5u);
}

TEST(PartitionIid, DisjointCoverAndPure) {
  const auto ds = synth_blobs(3, 2, 33, 0.1, 1);
  const auto a = partition_iid(ds, 7, 4);
  const auto b = partition_iid(ds, 7, 4);
  std::set<std::size_t> seen;
  for (std::size_t c = 0; c < a.size(); ++c) {
    EXPECT_EQ(a[c].indices(), b[c].indices());
    for (auto i : a[c].indices()) EXPECT_TRUE(seen.insert(i).second) << "duplicate " << i;
  }
  EXPECT_EQ(seen.size(), ds.size());
  EXPECT_THROW(partition_iid(ds, ds.size() + 1, 1), ConfigError);
}

TEST(ClientShard, SequentialBatchesWrapIntoNewEpoch) {
  ClientShard shard({10, 11, 12, 13, 14}, 3, 0);
  const auto b1 = shard.next_batch(3);
  const auto b2 = shard.next_batch(3);
  std::set<std::size_t> first_epoch(b1.begin(), b1.end());
  first_epoch.insert(b2[0]);
  first_epoch.insert(b2[1]);
  EXPECT_EQ(first_epoch.size(), 5u);
  EXPECT_EQ(shard.epoch(), 1u);
  ClientShard again({10, 11, 12, 13, 14}, 3, 0);
  EXPECT_EQ(again.next_batch(3), b1);
  EXPECT_THROW(ClientShard().next_batch(1), ShapeError);
}

TEST(EncodeInput, DirectRepeatsSample) {
  const std::vector<float> x{0.2f, 0.4f, 1.0f};
  const auto enc = encode_input<float>(x, 7, EncodingMode::direct);
  EXPECT_EQ(enc.dim, 3u);
  for (std::size_t t = 0; t < 7; ++t) {
    auto f = enc.frame(t);
    EXPECT_TRUE(std::equal(f.begin(), f.end(), x.begin()));
  }
}

TEST(EncodeInput, PoissonExtremesAndRate) {
  Rng rng(2);
  const std::vector<float> x{0.0f, 1.0f, 0.5f};
  const std::size_t T = 10000;
  const auto enc = encode_input<float>(x, T, EncodingMode::poisson, &rng);
  std::size_t ones = 0;
  for (std::size_t t = 0; t < T; ++t) {
    const auto f = enc.frame(t);
    ASSERT_EQ(f.size(), 3u);
    EXPECT_EQ(f[0], 0.0f);
    EXPECT_EQ(f[1], 1.0f);
    ones += f[2] == 1.0f ? 1 : 0;
  }
  EXPECT_NEAR(static_cast<double>(ones) / T, 0.5, 0.02 * 0.5);
  EXPECT_THROW(encode_input<float>(x, 3, EncodingMode::poisson, nullptr), ConfigError);
}
