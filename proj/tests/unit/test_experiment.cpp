#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "flsnn/flsnn.hpp"

using namespace flsnn;
namespace fs = std::filesystem;

namespace {

ExperimentConfig smoke(ModelKind kind) {
  ExperimentConfig c;
  c.model = kind;
  c.hidden = {16};
  c.clients = 5;
  c.rounds = 200;
  c.batch_size = 8;
  c.eval_every = 20;
  // SNN keeps its defaults; the ANN default rate is tuned for thousands of rounds
  if (kind == ModelKind::dense) c.optimizer = OptimizerHyper{0.05, 0.9, 5e-4};
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("flsnn_test_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Config, JsonRoundTrip) {
  ExperimentConfig c = smoke(ModelKind::dense);
  c.attack = {MinMaxAttack{MinMaxPerturbation::negative_std, 1e-4}, 0.3};
  c.compression = CompressionConfig{0.06};
  c.hidden = {32, 16};
  c.encoding = EncodingMode::poisson;
  c.data.kind = "idx";
  c.data.train_limit = 100;
  const auto back = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(back), config_to_json(c));
  EXPECT_EQ(back.attack.name(), "minmax");
  EXPECT_EQ(back.hidden, (std::vector<std::size_t>{32, 16}));
  ASSERT_TRUE(back.compression);
  EXPECT_DOUBLE_EQ(back.compression->kappa, 0.06);
}

TEST(Config, MergePatchDelta) {
  ExperimentConfig c = smoke(ModelKind::spiking);
  const auto d = apply_delta(c, json::parse(R"({"attack":{"kind":"noise","sigma":0.05,"malicious_fraction":0.25},"compression":{"kappa":0.1}})"));
  EXPECT_EQ(d.attack.name(), "noise");
  EXPECT_DOUBLE_EQ(d.attack.intensity(), 0.05);
  EXPECT_EQ(d.attack.byzantine_count(5), 2u);
  EXPECT_EQ(d.clients, 5u);
  const auto off = apply_delta(d, json::parse(R"({"compression":null})"));
  EXPECT_FALSE(off.compression);
}

TEST(Config, RejectsBadValues) {
  EXPECT_THROW(config_from_json(json::parse(R"({"model":"cnn"})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"attack":{"kind":"sybil"}})")), ConfigError);
  ExperimentConfig c;
  c.compression = CompressionConfig{0.0};
  EXPECT_THROW(c.validate(), ConfigError);
  c.compression = CompressionConfig{1.5};
  EXPECT_THROW(c.validate(), ConfigError);
  c = ExperimentConfig{};
  c.attack = {IpmAttack{1.0}, 1.0};
  EXPECT_THROW(c.validate(), ConfigError);
  c = ExperimentConfig{};
  c.clients = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/flsnn.json"), ConfigError);
}

TEST(Config, DefaultOptimizerFollowsModel) {
  ExperimentConfig c;
  c.model = ModelKind::dense;
  EXPECT_DOUBLE_EQ(c.effective_optimizer().learning_rate, 1e-4);
  EXPECT_DOUBLE_EQ(c.effective_optimizer().weight_decay, 5e-4);
  c.model = ModelKind::spiking;
  EXPECT_DOUBLE_EQ(c.effective_optimizer().learning_rate, 0.1);
  EXPECT_DOUBLE_EQ(c.effective_optimizer().momentum, 0.95);
}

TEST(Experiment, ZeroRoundsReportsInitialAccuracy) {
  auto c = smoke(ModelKind::spiking);
  c.rounds = 0;
  const auto res = run_experiment(c, load_data(c.data));
  EXPECT_EQ(res.series.size(), 1u);
  EXPECT_EQ(res.summary.final_accuracy, res.summary.initial_accuracy);
  EXPECT_EQ(res.summary.bandwidth.uplink_bytes, 0u);
}

TEST(Experiment, OutputsAreByteIdenticalAcrossRunsAndThreads) {
  auto c = smoke(ModelKind::spiking);
  c.rounds = 30;
  c.compression = CompressionConfig{0.2};
  c.attack = {NoiseAttack{0.01}, 0.2};
  const auto data = load_data(c.data);
  const auto a = scratch("det_a"), b = scratch("det_b"), t = scratch("det_t");
  run_experiment(c, data, a);
  run_experiment(c, data, b);
  c.threads = 3;
  run_experiment(c, data, t);
  for (const char* f : {"metrics.csv", "checkpoint.bin", "retention.csv"}) {
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
    EXPECT_EQ(slurp(a / f), slurp(t / f)) << f;
  }
  EXPECT_EQ(slurp(a / "metrics.csv").rfind(kMetricsHeader, 0), 0u);
}

TEST(Experiment, SmokeRunsLearnSyntheticTask) {
  for (auto kind : {ModelKind::spiking, ModelKind::dense}) {
    const auto c = smoke(kind);
    const auto res = run_experiment(c, load_data(c.data));
    EXPECT_FALSE(res.summary.diverged);
    EXPECT_GE(res.summary.final_accuracy, 0.95) << to_string(kind);
    EXPECT_LT(res.summary.initial_accuracy, 0.8) << to_string(kind);
  }
}

TEST(Experiment, DivergenceIsFlagged) {
  auto c = smoke(ModelKind::dense);
  c.rounds = 60;
  c.attack = {NoiseAttack{1e30}, 0.2};
  const auto res = run_experiment(c, load_data(c.data));
  EXPECT_TRUE(res.summary.diverged);
  EXPECT_LT(res.summary.rounds_completed, 60u);
  EXPECT_EQ(res.summary.final_accuracy, res.summary.evaluations.back().second);
}

TEST(Bandwidth, RatiosAndDenseTotal) {
  auto c = smoke(ModelKind::dense);
  c.rounds = 10;
  const auto data = load_data(c.data);
  const auto dense = run_experiment(c, data).summary;
  const std::uint64_t d = dense.num_params;
  EXPECT_EQ(dense.bandwidth.uplink_bytes, 10 * 5 * (4 * d + 8));
  EXPECT_EQ(dense.bandwidth.downlink_bytes, 10 * 5 * (4 * d + 8));
  EXPECT_DOUBLE_EQ(dense.bandwidth.uplink_ratio, 1.0);

  c.compression = CompressionConfig{1.0};
  const auto full = run_experiment(c, data).summary;
  EXPECT_DOUBLE_EQ(full.bandwidth.uplink_ratio, (8.0 * d + 8) / (4.0 * d + 8));
  EXPECT_GT(full.bandwidth.uplink_ratio, 1.9);

  c.compression = CompressionConfig{0.1};
  const auto tenth = run_experiment(c, data).summary;
  const double k = static_cast<double>(topk_count(0.1, d));
  EXPECT_DOUBLE_EQ(tenth.bandwidth.uplink_ratio, (8 * k + 8) / (4.0 * d + 8));
  EXPECT_NEAR(tenth.bandwidth.uplink_ratio, 0.2, 0.03);
}

TEST(Heatmap, FullRetentionIsAllOnes) {
  auto c = smoke(ModelKind::spiking);
  c.rounds = 5;
  c.compression = CompressionConfig{1.0};
  const auto res = run_experiment(c, load_data(c.data));
  ASSERT_TRUE(res.summary.retention);
  EXPECT_EQ(res.summary.retention->min, 1.0);
  EXPECT_EQ(res.summary.retention->max, 1.0);
}

TEST(Heatmap, MeanEqualsRetainedFraction) {
  for (double kappa : {0.06, 0.1, 0.2}) {
    auto c = smoke(ModelKind::dense);
    c.rounds = 7;
    c.compression = CompressionConfig{kappa};
    const auto out = scratch("heat");
    const auto res = run_experiment(c, load_data(c.data), out);
    const std::size_t d = res.summary.num_params;
    const std::size_t k = topk_count(kappa, d);
    EXPECT_NEAR(res.summary.retention->mean, static_cast<double>(k) / static_cast<double>(d), 1e-12);
    EXPECT_EQ(res.summary.retention_total, std::uint64_t{k} * 7 * 5);
    // one CSV line per block row, plus the header
    std::size_t rows = 0;
    for (const auto& e : res.layout.entries) rows += e.rows;
    const auto text = slurp(out / "retention.csv");
    EXPECT_EQ(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')), rows + 1);
  }
}

TEST(Checkpoint, RoundTrip) {
  MlpTopology topo{{5, 4, 3}, ModelKind::dense};
  Rng rng = make_rng(3, {tag(Stream::init)});
  const auto p = init_params<float>(topo, rng);
  const auto path = scratch("ckpt");
  fs::create_directories(path);
  write_checkpoint(path / "c.bin", p);
  const auto q = read_checkpoint(path / "c.bin");
  EXPECT_EQ(q.values, p.values);
  ASSERT_EQ(q.layout.entries.size(), p.layout.entries.size());
  for (std::size_t i = 0; i < q.layout.entries.size(); ++i) {
    EXPECT_EQ(q.layout.entries[i].offset, p.layout.entries[i].offset);
    EXPECT_EQ(q.layout.entries[i].role, p.layout.entries[i].role);
  }
  auto bytes = encode_checkpoint(p);
  bytes.pop_back();
  EXPECT_THROW(decode_checkpoint(bytes), std::runtime_error);
}

TEST(Sweep, EmptySpecGivesNoRows) {
  EXPECT_TRUE(run_sweep(SweepSpec{}).empty());
}

TEST(Sweep, NoiseGridAcrossModels) {
  SweepSpec s;
  s.base = smoke(ModelKind::spiking);
  s.base.optimizer.reset();
  s.base.rounds = 20;
  s.models = {ModelKind::spiking, ModelKind::dense};
  s.deltas = standard_deltas("noise").get<std::vector<json>>();
  const auto out = scratch("sweep");
  const auto rows = run_sweep(s, out);
  ASSERT_EQ(rows.size(), 8u);
  for (const auto& r : rows) {
    EXPECT_EQ(r.status, "ok");
    EXPECT_EQ(r.attack, "noise");
    EXPECT_DOUBLE_EQ(r.accuracy_loss, r.clean_accuracy - r.attacked_accuracy);
  }
  // one baseline per model, reused across the four sigmas
  EXPECT_EQ(rows[0].clean_accuracy, rows[2].clean_accuracy);
  const auto text = slurp(out / "sweep.csv");
  EXPECT_EQ(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')), 9u);
}

TEST(Sweep, FailingRunIsMarkedNotFatal) {
  SweepSpec s;
  s.base = smoke(ModelKind::dense);
  s.base.rounds = 3;
  s.deltas = {json::parse(R"({"attack":{"kind":"ipm","malicious_fraction":1.0}})"),
              json::parse(R"({"attack":{"kind":"ipm","malicious_fraction":0.2}})")};
  const auto rows = run_sweep(s);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].status.rfind("failed", 0), 0u);
  EXPECT_EQ(rows[1].status, "ok");
}

TEST(Data, IdxSourceHonoursEnvironmentRoot) {
  DataSource src;
  src.kind = "idx";
  src.dir = "definitely_missing_dir";
  EXPECT_THROW(load_data(src), IdxError);
  EXPECT_EQ(resolve_data_dir("/abs/path"), fs::path("/abs/path"));
}
