#pragma once

// Experiment configuration, single runs, sweeps, and the reports built on
// their output (bandwidth totals, retention heatmaps).

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "flsnn/checkpoint.hpp"
#include "flsnn/fl.hpp"

namespace flsnn {

using json = nlohmann::json;

inline constexpr const char* kDataRootEnv = "FLSNN_DATA_ROOT";

struct DataSource {
  std::string kind = "synthetic";  // synthetic | idx
  // idx
  std::string dir = "mnist";
  std::size_t train_limit = 0;  // 0 = all
  std::size_t test_limit = 0;
  // synthetic
  std::size_t classes = 2;
  std::size_t dim = 8;
  std::size_t per_class = 150;
  double spread = 0.05;
  std::size_t test_every = 5;  // every k-th synthetic sample is held out
  std::uint64_t data_seed = 7;
};

struct ExperimentConfig {
  ModelKind model = ModelKind::spiking;
  std::vector<std::size_t> hidden{64};
  LifParams lif;
  EncodingMode encoding = EncodingMode::direct;
  std::optional<OptimizerHyper> optimizer;  // unset = per-model defaults
  DataSource data;
  std::size_t clients = 20;
  std::size_t rounds = 2000;
  std::size_t batch_size = 32;
  AttackSpec attack;
  std::optional<CompressionConfig> compression;
  std::uint64_t seed = 1;
  std::size_t eval_every = 50;
  std::size_t final_window = 5;
  std::size_t threads = 1;
  std::string out;

  /// SNN: lr 0.1, momentum 0.95, decay 1e-4. ANN: lr 1e-4, momentum 0.9, decay 5e-4.
  static OptimizerHyper default_optimizer(ModelKind k) {
    if (k == ModelKind::spiking) return {0.1, 0.95, 1e-4};
    return {1e-4, 0.9, 5e-4};
  }

  OptimizerHyper effective_optimizer() const { return optimizer.value_or(default_optimizer(model)); }

  void validate() const {
    if (clients == 0) throw ConfigError("clients must be >= 1");
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    if (eval_every == 0) throw ConfigError("eval_every must be >= 1");
    if (final_window == 0) throw ConfigError("final_window must be >= 1");
    if (model == ModelKind::spiking) lif.validate();
    for (auto h : hidden) {
      if (h == 0) throw ConfigError("hidden layer sizes must be >= 1");
    }
    const auto o = effective_optimizer();
    if (!(o.learning_rate >= 0.0) || !(o.momentum >= 0.0) || !(o.weight_decay >= 0.0)) {
      throw ConfigError("optimizer hyperparameters must be non-negative");
    }
    attack.validate(clients);
    if (compression) compression->validate();
    if (data.kind != "synthetic" && data.kind != "idx") throw ConfigError("data.source must be synthetic|idx");
  }
};

// ---------------------------------------------------------------------------
// JSON mapping

inline json attack_to_json(const AttackSpec& a) {
  json j;
  j["kind"] = a.name();
  j["malicious_fraction"] = a.malicious_fraction;
  if (auto* n = std::get_if<NoiseAttack>(&a.kind)) j["sigma"] = n->sigma;
  if (auto* i = std::get_if<IpmAttack>(&a.kind)) j["epsilon"] = i->epsilon;
  if (auto* m = std::get_if<MinMaxAttack>(&a.kind)) {
    j["perturbation"] = to_string(m->perturbation);
    j["tau"] = m->tau;
  }
  return j;
}

inline AttackSpec attack_from_json(const json& j) {
  AttackSpec a;
  const std::string kind = j.value("kind", std::string("none"));
  a.malicious_fraction = j.value("malicious_fraction", 0.0);
  if (kind == "none") a.kind = NoAttack{};
  else if (kind == "noise") a.kind = NoiseAttack{j.value("sigma", 0.1)};
  else if (kind == "alie") a.kind = AlieAttack{};
  else if (kind == "minmax")
    a.kind = MinMaxAttack{parse_perturbation(j.value("perturbation", std::string("unit-negative-mean"))),
                          j.value("tau", 1e-5)};
  else if (kind == "ipm") a.kind = IpmAttack{j.value("epsilon", 1.0)};
  else throw ConfigError("unknown attack kind '" + kind + "'");
  return a;
}

inline json config_to_json(const ExperimentConfig& c) {
  json j;
  j["model"] = to_string(c.model);
  j["hidden"] = c.hidden;
  j["lif"] = {{"beta", c.lif.beta},
              {"threshold", c.lif.u_thr},
              {"timesteps", c.lif.timesteps},
              {"surrogate_slope", c.lif.surrogate_slope},
              {"encoding", c.encoding == EncodingMode::direct ? "direct" : "poisson"}};
  if (c.optimizer) {
    j["optimizer"] = {{"learning_rate", c.optimizer->learning_rate},
                      {"momentum", c.optimizer->momentum},
                      {"weight_decay", c.optimizer->weight_decay}};
  } else {
    j["optimizer"] = nullptr;
  }
  j["data"] = {{"source", c.data.kind},          {"dir", c.data.dir},
               {"train_limit", c.data.train_limit}, {"test_limit", c.data.test_limit},
               {"classes", c.data.classes},       {"dim", c.data.dim},
               {"per_class", c.data.per_class},   {"spread", c.data.spread},
               {"test_every", c.data.test_every}, {"seed", c.data.data_seed}};
  j["clients"] = c.clients;
  j["rounds"] = c.rounds;
  j["batch_size"] = c.batch_size;
  j["attack"] = attack_to_json(c.attack);
  j["compression"] = c.compression ? json{{"kappa", c.compression->kappa}} : json(nullptr);
  j["seed"] = c.seed;
  j["eval_every"] = c.eval_every;
  j["final_window"] = c.final_window;
  j["threads"] = c.threads;
  j["out"] = c.out;
  return j;
}

/// Missing keys keep their defaults, so partial files are valid configs.
inline ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  try {
    if (j.contains("model")) c.model = parse_model_kind(j["model"].get<std::string>());
    if (j.contains("hidden")) c.hidden = j["hidden"].get<std::vector<std::size_t>>();
    if (auto it = j.find("lif"); it != j.end() && it->is_object()) {
      c.lif.beta = it->value("beta", c.lif.beta);
      c.lif.u_thr = it->value("threshold", c.lif.u_thr);
      c.lif.timesteps = it->value("timesteps", c.lif.timesteps);
      c.lif.surrogate_slope = it->value("surrogate_slope", c.lif.surrogate_slope);
      c.encoding = parse_encoding(it->value("encoding", std::string("direct")));
    }
    if (auto it = j.find("optimizer"); it != j.end() && it->is_object()) {
      const auto d = ExperimentConfig::default_optimizer(c.model);
      c.optimizer = OptimizerHyper{it->value("learning_rate", d.learning_rate), it->value("momentum", d.momentum),
                                   it->value("weight_decay", d.weight_decay)};
    }
    if (auto it = j.find("data"); it != j.end() && it->is_object()) {
      auto& d = c.data;
      d.kind = it->value("source", d.kind);
      d.dir = it->value("dir", d.dir);
      d.train_limit = it->value("train_limit", d.train_limit);
      d.test_limit = it->value("test_limit", d.test_limit);
      d.classes = it->value("classes", d.classes);
      d.dim = it->value("dim", d.dim);
      d.per_class = it->value("per_class", d.per_class);
      d.spread = it->value("spread", d.spread);
      d.test_every = it->value("test_every", d.test_every);
      d.data_seed = it->value("seed", d.data_seed);
    }
    c.clients = j.value("clients", c.clients);
    c.rounds = j.value("rounds", c.rounds);
    c.batch_size = j.value("batch_size", c.batch_size);
    if (auto it = j.find("attack"); it != j.end() && it->is_object()) c.attack = attack_from_json(*it);
    if (auto it = j.find("compression"); it != j.end() && it->is_object()) {
      c.compression = CompressionConfig{it->value("kappa", 0.1)};
    }
    c.seed = j.value("seed", c.seed);
    c.eval_every = j.value("eval_every", c.eval_every);
    c.final_window = j.value("final_window", c.final_window);
    c.threads = j.value("threads", c.threads);
    c.out = j.value("out", c.out);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config " + path.string());
  try {
    return config_from_json(json::parse(f, nullptr, true, /*ignore_comments=*/true));
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
}

/// Returns `base` with a JSON merge patch applied.
inline ExperimentConfig apply_delta(const ExperimentConfig& base, const json& delta) {
  auto j = config_to_json(base);
  j.merge_patch(delta);
  return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Data

struct LoadedData {
  Dataset train;
  Dataset test;
};

inline std::filesystem::path resolve_data_dir(const std::string& dir) {
  std::filesystem::path p(dir);
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv(kDataRootEnv); root != nullptr && *root != '\0') return std::filesystem::path(root) / p;
  return p;
}

inline Dataset truncate(Dataset ds, std::size_t limit) {
  if (limit == 0 || limit >= ds.size()) return ds;
  ds.labels.resize(limit);
  ds.samples.resize(limit * ds.dim);
  return ds;
}

inline LoadedData load_data(const DataSource& src) {
  LoadedData out;
  if (src.kind == "idx") {
    const auto dir = resolve_data_dir(src.dir);
    out.train = truncate(load_idx_dir(dir, true), src.train_limit);
    out.test = truncate(load_idx_dir(dir, false), src.test_limit);
    out.test.num_classes = out.train.num_classes = std::max(out.train.num_classes, out.test.num_classes);
  } else {
    auto all = synth_blobs(src.classes, src.dim, src.per_class, src.spread, src.data_seed);
    std::tie(out.train, out.test) = holdout_split(all, std::max<std::size_t>(src.test_every, 2));
  }
  out.train.check();
  out.test.check();
  return out;
}

inline ModelSpec model_spec_for(const ExperimentConfig& cfg, const Dataset& train) {
  ModelSpec spec;
  spec.topology.kind = cfg.model;
  spec.topology.layer_sizes.push_back(train.dim);
  for (auto h : cfg.hidden) spec.topology.layer_sizes.push_back(h);
  spec.topology.layer_sizes.push_back(train.num_classes);
  spec.lif = cfg.lif;
  spec.encoding = cfg.encoding;
  spec.validate();
  return spec;
}

// ---------------------------------------------------------------------------
// Reports

struct BandwidthTotals {
  std::uint64_t rounds = 0;
  std::uint64_t uplink_bytes = 0;
  std::uint64_t downlink_bytes = 0;
  std::uint64_t dense_uplink_bytes = 0;  // same run with uncompressed uploads
  double uplink_ratio = 1.0;             // uplink / dense uplink
};

/// Totals over a round series; `dim` and `clients` give the dense-equivalent uplink.
inline BandwidthTotals bandwidth_report(std::span<const RoundReport> series, std::size_t dim, std::size_t clients) {
  BandwidthTotals t;
  for (const auto& r : series) {
    if (r.round == 0) continue;
    ++t.rounds;
    t.uplink_bytes += r.uplink_bytes;
    t.downlink_bytes += r.downlink_bytes;
  }
  t.dense_uplink_bytes = t.rounds * clients * dense_payload_bytes(dim);
  t.uplink_ratio = t.dense_uplink_bytes == 0 ? 1.0
                                             : static_cast<double>(t.uplink_bytes) / static_cast<double>(t.dense_uplink_bytes);
  return t;
}

struct HeatmapStats {
  double mean = 0.0;
  double stddev = 0.0;
  double min = 0.0;
  double max = 0.0;
};

/// Per-parameter retention frequency normalised by `normaliser` (rounds * clients).
inline std::vector<double> retention_frequencies(const RetentionCounters& rc, std::uint64_t normaliser) {
  std::vector<double> f(rc.counts.size(), 0.0);
  if (normaliser == 0) return f;
  for (std::size_t i = 0; i < f.size(); ++i) {
    f[i] = static_cast<double>(rc.counts[i]) / static_cast<double>(normaliser);
  }
  return f;
}

inline HeatmapStats heatmap_stats(std::span<const double> freq) {
  HeatmapStats s;
  if (freq.empty()) return s;
  // exact integer-ratio mean would be nicer; long double keeps the error well under 1e-12
  long double sum = 0.0L;
  for (auto v : freq) sum += v;
  s.mean = static_cast<double>(sum / static_cast<long double>(freq.size()));
  long double var = 0.0L;
  for (auto v : freq) var += (v - s.mean) * (v - s.mean);
  s.stddev = static_cast<double>(std::sqrt(var / static_cast<long double>(freq.size())));
  s.min = *std::min_element(freq.begin(), freq.end());
  s.max = *std::max_element(freq.begin(), freq.end());
  return s;
}

/// Writes one CSV line per parameter-block row: block,layer,role,row,f_0,...,f_{cols-1}.
inline HeatmapStats export_heatmap(const RetentionCounters& rc, const Layout& layout, std::uint64_t normaliser,
                                   const std::filesystem::path& path) {
  require_same_size(rc.counts.size(), layout.total(), "export_heatmap");
  const auto freq = retention_frequencies(rc, normaliser);
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << "block,layer,role,row,frequencies\n";
  char buf[32];
  for (std::size_t b = 0; b < layout.entries.size(); ++b) {
    const auto& e = layout.entries[b];
    for (std::size_t r = 0; r < e.rows; ++r) {
      f << b << ',' << e.layer << ',' << (e.role == BlockRole::weight ? "weight" : "bias") << ',' << r;
      for (std::size_t c = 0; c < e.cols; ++c) {
        std::snprintf(buf, sizeof buf, ",%.17g", freq[e.offset + r * e.cols + c]);
        f << buf;
      }
      f << '\n';
    }
  }
  return heatmap_stats(freq);
}

// ---------------------------------------------------------------------------
// Single run

struct ExperimentSummary {
  double initial_accuracy = 0.0;
  double final_accuracy = 0.0;  // mean of the last final_window evaluations
  std::vector<std::pair<std::size_t, double>> evaluations;
  bool diverged = false;
  std::size_t rounds_completed = 0;
  std::size_t num_params = 0;
  std::size_t retained_per_update = 0;  // k
  BandwidthTotals bandwidth;
  std::optional<HeatmapStats> retention;
  std::uint64_t retention_total = 0;
  double wall_seconds = 0.0;
};

struct ExperimentResult {
  std::vector<RoundReport> series;
  ExperimentSummary summary;
  RetentionCounters retention;
  Layout layout;
  Params final_params;
};

inline constexpr const char* kMetricsHeader =
    "round,train_loss,test_acc,uplink_bytes,downlink_bytes,max_update_norm,mean_update_norm";

inline std::string csv_row(const RoundReport& r) {
  char buf[256];
  std::string loss = r.round == 0 ? std::string() : (std::snprintf(buf, sizeof buf, "%.9g", r.train_loss), std::string(buf));
  std::string acc = r.test_accuracy ? (std::snprintf(buf, sizeof buf, "%.6f", *r.test_accuracy), std::string(buf)) : "";
  std::snprintf(buf, sizeof buf, ",%llu,%llu,%.9g,%.9g", static_cast<unsigned long long>(r.uplink_bytes),
                static_cast<unsigned long long>(r.downlink_bytes), r.max_update_norm, r.mean_update_norm);
  return std::to_string(r.round) + "," + loss + "," + acc + buf;
}

inline json summary_to_json(const ExperimentSummary& s) {
  json j;
  j["initial_accuracy"] = s.initial_accuracy;
  j["final_accuracy"] = s.final_accuracy;
  j["diverged"] = s.diverged;
  j["rounds_completed"] = s.rounds_completed;
  j["num_params"] = s.num_params;
  j["retained_per_update"] = s.retained_per_update;
  j["evaluations"] = json::array();
  for (const auto& [r, a] : s.evaluations) j["evaluations"].push_back({r, a});
  j["bandwidth"] = {{"rounds", s.bandwidth.rounds},
                    {"uplink_bytes", s.bandwidth.uplink_bytes},
                    {"downlink_bytes", s.bandwidth.downlink_bytes},
                    {"dense_uplink_bytes", s.bandwidth.dense_uplink_bytes},
                    {"uplink_ratio", s.bandwidth.uplink_ratio}};
  if (s.retention) {
    j["retention"] = {{"mean", s.retention->mean},
                      {"stddev", s.retention->stddev},
                      {"min", s.retention->min},
                      {"max", s.retention->max},
                      {"total", s.retention_total}};
  }
  j["wall_seconds"] = s.wall_seconds;
  return j;
}

inline double final_window_mean(const std::vector<std::pair<std::size_t, double>>& evals, std::size_t window) {
  if (evals.empty()) return 0.0;
  const std::size_t n = std::min(window, evals.size());
  double s = 0.0;
  for (std::size_t i = evals.size() - n; i < evals.size(); ++i) s += evals[i].second;
  return s / static_cast<double>(n);
}

/// Runs one experiment. When `out_dir` is non-empty, writes metrics.csv
/// (incrementally), summary.json, config.json, checkpoint.bin and, with
/// compression on, retention.csv.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const LoadedData& data,
                                       const std::filesystem::path& out_dir = {}) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const ModelSpec model = model_spec_for(cfg, data.train);

  Rng init_rng = make_rng(cfg.seed, {tag(Stream::init)});
  ServerState server{init_params<float>(model.topology, init_rng), 0};
  const std::size_t d = server.global.size();
  auto clients = make_clients(data.train, cfg.clients, cfg.attack, d, cfg.effective_optimizer(), cfg.seed);

  RoundContext ctx;
  ctx.model = &model;
  ctx.train = &data.train;
  ctx.attack = cfg.attack;
  ctx.compression = cfg.compression;
  ctx.batch_size = cfg.batch_size;
  ctx.seed = cfg.seed;
  ctx.threads = cfg.threads;

  ExperimentResult res;
  res.layout = server.global.layout;
  if (cfg.compression) res.retention = RetentionCounters(d);

  std::ofstream csv;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::ofstream(out_dir / "config.json") << config_to_json(cfg).dump(2) << '\n';
    csv.open(out_dir / "metrics.csv");
    if (!csv) throw std::runtime_error("cannot write " + (out_dir / "metrics.csv").string());
    csv << kMetricsHeader << '\n';
  }

  auto& sum = res.summary;
  sum.num_params = d;
  sum.retained_per_update = cfg.compression ? topk_count(cfg.compression->kappa, d) : d;

  RoundReport initial;
  initial.test_accuracy = evaluate(server.global, model, data.test, cfg.seed);
  sum.initial_accuracy = *initial.test_accuracy;
  sum.evaluations.emplace_back(0, *initial.test_accuracy);
  res.series.push_back(initial);
  if (csv) csv << csv_row(initial) << '\n';

  for (std::size_t r = 1; r <= cfg.rounds; ++r) {
    auto rep = run_round(server, clients, ctx, cfg.compression ? &res.retention : nullptr);
    const bool finite = std::isfinite(rep.train_loss) &&
                        std::all_of(server.global.values.begin(), server.global.values.end(),
                                    [](float v) { return std::isfinite(v); });
    if (!finite) {
      sum.diverged = true;
      res.series.push_back(rep);
      if (csv) csv << csv_row(rep) << '\n';
      break;
    }
    if (r % cfg.eval_every == 0 || r == cfg.rounds) {
      rep.test_accuracy = evaluate(server.global, model, data.test, cfg.seed);
      sum.evaluations.emplace_back(r, *rep.test_accuracy);
    }
    res.series.push_back(rep);
    if (csv) csv << csv_row(rep) << '\n';
    sum.rounds_completed = r;
  }

  // a diverged run reports its last valid evaluation
  sum.final_accuracy = sum.diverged ? sum.evaluations.back().second : final_window_mean(sum.evaluations, cfg.final_window);
  sum.bandwidth = bandwidth_report(res.series, d, cfg.clients);
  const std::uint64_t normaliser = static_cast<std::uint64_t>(res.series.size() - 1) * cfg.clients;
  if (cfg.compression) {
    sum.retention_total = res.retention.total();
    const auto freq = retention_frequencies(res.retention, normaliser);
    sum.retention = heatmap_stats(freq);
  }
  res.final_params = server.global;
  sum.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  if (!out_dir.empty()) {
    csv.flush();
    write_checkpoint(out_dir / "checkpoint.bin", server.global);
    if (cfg.compression) export_heatmap(res.retention, res.layout, normaliser, out_dir / "retention.csv");
    std::ofstream(out_dir / "summary.json") << summary_to_json(sum).dump(2) << '\n';
  }
  return res;
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  return run_experiment(cfg, load_data(cfg.data), cfg.out);
}

// ---------------------------------------------------------------------------
// Sweeps

/// A base config, the models to try, and a list of merge-patch deltas.
/// Each (delta, model, repetition) produces one row; repetition r uses seed base.seed + r.
struct SweepSpec {
  ExperimentConfig base;
  std::vector<ModelKind> models;  // empty = base.model only
  std::vector<json> deltas;
  std::size_t repetitions = 1;
};

inline SweepSpec sweep_from_json(const json& j) {
  SweepSpec s;
  try {
    if (j.contains("base")) s.base = config_from_json(j["base"]);
    if (j.contains("models")) {
      for (const auto& m : j["models"]) s.models.push_back(parse_model_kind(m.get<std::string>()));
    }
    if (j.contains("deltas")) {
      for (const auto& d : j["deltas"]) s.deltas.push_back(d);
    }
    s.repetitions = j.value("repetitions", std::size_t{1});
  } catch (const json::exception& e) {
    throw ConfigError(std::string("sweep: ") + e.what());
  }
  return s;
}

inline SweepSpec load_sweep(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open sweep " + path.string());
  try {
    return sweep_from_json(json::parse(f, nullptr, true, true));
  } catch (const json::parse_error& e) {
    throw ConfigError("sweep " + path.string() + ": " + e.what());
  }
}

/// The standard intensity grids: sigma, epsilon, malicious fraction, kappa.
inline json standard_deltas(const std::string& which) {
  json out = json::array();
  if (which == "noise") {
    for (double s : {0.005, 0.01, 0.05, 0.1})
      out.push_back({{"attack", {{"kind", "noise"}, {"sigma", s}, {"malicious_fraction", 0.25}}}});
  } else if (which == "ipm") {
    for (double e : {0.1, 0.2, 0.5, 1.0})
      out.push_back({{"attack", {{"kind", "ipm"}, {"epsilon", e}, {"malicious_fraction", 0.25}}}});
  } else if (which == "alie" || which == "minmax") {
    for (double f : {0.25, 0.30, 0.35, 0.40}) out.push_back({{"attack", {{"kind", which}, {"malicious_fraction", f}}}});
  } else if (which == "kappa") {
    for (double k : {0.06, 0.1, 0.2}) out.push_back({{"compression", {{"kappa", k}}}});
  } else {
    throw ConfigError("unknown standard grid '" + which + "'");
  }
  return out;
}

struct SweepRow {
  std::string model;
  std::string attack;
  double intensity = 0.0;
  double malicious_fraction = 0.0;
  std::optional<double> kappa;
  std::uint64_t seed = 0;
  double clean_accuracy = 0.0;
  double attacked_accuracy = 0.0;
  double accuracy_loss = 0.0;
  std::uint64_t total_bytes = 0;  // uplink + downlink
  std::string status = "ok";      // ok | diverged | failed: <reason>
};

inline constexpr const char* kSweepHeader =
    "model,attack,intensity,malicious_fraction,kappa,seed,clean_acc,attacked_acc,accuracy_loss,total_bytes,status";

inline std::string sweep_csv_row(const SweepRow& r) {
  char buf[512];
  std::string kappa;
  if (r.kappa) {
    std::snprintf(buf, sizeof buf, "%g", *r.kappa);
    kappa = buf;
  }
  std::snprintf(buf, sizeof buf, "%s,%s,%g,%g,%s,%llu,%.6f,%.6f,%.6f,%llu,", r.model.c_str(), r.attack.c_str(),
                r.intensity, r.malicious_fraction, kappa.c_str(), static_cast<unsigned long long>(r.seed),
                r.clean_accuracy, r.attacked_accuracy, r.accuracy_loss, static_cast<unsigned long long>(r.total_bytes));
  return buf + r.status;
}

/// Runs every (delta, model, repetition). Clean baselines (same config, attack none)
/// are computed once per distinct config and reused. A failing run is marked and skipped.
inline std::vector<SweepRow> run_sweep(const SweepSpec& spec, const std::filesystem::path& out_dir = {},
                                       std::ostream* log = nullptr) {
  std::vector<SweepRow> rows;
  if (spec.deltas.empty()) return rows;
  std::vector<ModelKind> models = spec.models.empty() ? std::vector<ModelKind>{spec.base.model} : spec.models;

  std::map<std::string, LoadedData> data_cache;
  auto data_for = [&](const DataSource& src) -> const LoadedData& {
    ExperimentConfig probe;
    probe.data = src;
    const std::string key = config_to_json(probe)["data"].dump();
    auto it = data_cache.find(key);
    if (it == data_cache.end()) it = data_cache.emplace(key, load_data(src)).first;
    return it->second;
  };

  std::map<std::string, ExperimentSummary> baselines;
  std::ofstream table;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    table.open(out_dir / "sweep.csv");
    table << kSweepHeader << '\n';
  }

  std::size_t run_id = 0;
  for (const auto& delta : spec.deltas) {
    for (auto model : models) {
      for (std::size_t rep = 0; rep < spec.repetitions; ++rep, ++run_id) {
        SweepRow row;
        row.model = to_string(model);
        try {
          ExperimentConfig base = spec.base;
          base.model = model;
          base.seed = spec.base.seed + rep;
          base.out.clear();
          ExperimentConfig cfg = apply_delta(base, delta);
          cfg.out.clear();
          row.attack = cfg.attack.name();
          row.intensity = cfg.attack.intensity();
          row.malicious_fraction = cfg.attack.malicious_fraction;
          if (cfg.compression) row.kappa = cfg.compression->kappa;
          row.seed = cfg.seed;
          const auto& data = data_for(cfg.data);

          ExperimentConfig clean = cfg;
          clean.attack = AttackSpec{};
          const std::string key = config_to_json(clean).dump();
          auto it = baselines.find(key);
          if (it == baselines.end()) {
            if (log) *log << "[sweep] baseline " << row.model << " seed=" << cfg.seed << '\n';
            const auto dir = out_dir.empty() ? std::filesystem::path{} : out_dir / ("baseline_" + std::to_string(baselines.size()));
            it = baselines.emplace(key, run_experiment(clean, data, dir).summary).first;
          }
          row.clean_accuracy = it->second.final_accuracy;

          ExperimentSummary attacked = it->second;
          if (cfg.attack.active()) {
            if (log) *log << "[sweep] run " << run_id << ": " << row.model << ' ' << row.attack << '=' << row.intensity << '\n';
            const auto dir = out_dir.empty() ? std::filesystem::path{} : out_dir / ("run_" + std::to_string(run_id));
            attacked = run_experiment(cfg, data, dir).summary;
          }
          row.attacked_accuracy = attacked.final_accuracy;
          row.accuracy_loss = accuracy_loss(row.clean_accuracy, row.attacked_accuracy);
          row.total_bytes = attacked.bandwidth.uplink_bytes + attacked.bandwidth.downlink_bytes;
          if (attacked.diverged) row.status = "diverged";
        } catch (const std::exception& e) {
          row.status = std::string("failed: ") + e.what();
          for (auto& ch : row.status) {
            if (ch == ',' || ch == '\n') ch = ';';
          }
        }
        if (table) table << sweep_csv_row(row) << '\n' << std::flush;
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

}  // namespace flsnn
