// flsnn: command-line front end for federated SNN/ANN experiments.
//
//   flsnn run    [--config cfg.json] [overrides...]
//   flsnn sweep  --config sweep.json [--grid noise|ipm|alie|minmax|kappa] [overrides...]
//   flsnn report --out DIR [--baseline DIR]

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "flsnn/flsnn.hpp"

namespace {

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> model;
  std::optional<std::string> attack;
  std::optional<std::string> kappa;
  std::optional<double> malicious_frac;
  std::optional<double> sigma;
  std::optional<double> epsilon;
  std::optional<std::size_t> rounds;
  std::optional<std::size_t> clients;
  std::optional<std::size_t> threads;
  std::optional<std::string> out;

  void attach(CLI::App* app) {
    app->add_option("--seed", seed, "Master seed");
    app->add_option("--model", model, "Model kind")->check(CLI::IsMember({"snn", "ann"}));
    app->add_option("--attack", attack, "Adversary")->check(CLI::IsMember({"none", "noise", "alie", "minmax", "ipm"}));
    app->add_option("--kappa", kappa, "Top-kappa retention in (0,1], or 'none' for dense uploads");
    app->add_option("--malicious-frac", malicious_frac, "Fraction of Byzantine clients");
    app->add_option("--sigma", sigma, "Noise attack standard deviation");
    app->add_option("--epsilon", epsilon, "IPM scale");
    app->add_option("--rounds", rounds, "Global rounds");
    app->add_option("--clients", clients, "Number of clients");
    app->add_option("--threads", threads, "Worker threads for client steps");
    app->add_option("--out", out, "Output directory");
  }

  void apply(flsnn::ExperimentConfig& c) const {
    using namespace flsnn;
    if (seed) c.seed = *seed;
    if (model) c.model = parse_model_kind(*model);
    if (attack) {
      auto j = attack_to_json(c.attack);
      j["kind"] = *attack;
      c.attack = attack_from_json(j);
    }
    if (malicious_frac) c.attack.malicious_fraction = *malicious_frac;
    if (sigma) {
      if (auto* n = std::get_if<NoiseAttack>(&c.attack.kind)) n->sigma = *sigma;
    }
    if (epsilon) {
      if (auto* i = std::get_if<IpmAttack>(&c.attack.kind)) i->epsilon = *epsilon;
    }
    if (kappa) {
      if (*kappa == "none") {
        c.compression.reset();
      } else {
        try {
          c.compression = CompressionConfig{std::stod(*kappa)};
        } catch (const std::logic_error&) {
          throw ConfigError("--kappa expects a number or 'none'");
        }
      }
    }
    if (rounds) c.rounds = *rounds;
    if (clients) c.clients = *clients;
    if (threads) c.threads = *threads;
    if (out) c.out = *out;
  }
};

void print_summary(const flsnn::ExperimentSummary& s) {
  std::printf("initial accuracy   %.4f\n", s.initial_accuracy);
  std::printf("final accuracy     %.4f%s\n", s.final_accuracy, s.diverged ? "  (diverged)" : "");
  std::printf("rounds completed   %zu\n", s.rounds_completed);
  std::printf("parameters         %zu (k = %zu per update)\n", s.num_params, s.retained_per_update);
  std::printf("uplink bytes       %llu (%.4f of dense)\n", static_cast<unsigned long long>(s.bandwidth.uplink_bytes),
              s.bandwidth.uplink_ratio);
  std::printf("downlink bytes     %llu\n", static_cast<unsigned long long>(s.bandwidth.downlink_bytes));
  if (s.retention) {
    std::printf("retention freq     mean %.6g  std %.6g  min %.6g  max %.6g\n", s.retention->mean, s.retention->stddev,
                s.retention->min, s.retention->max);
  }
  std::printf("wall time          %.1f s\n", s.wall_seconds);
}

int cmd_run(const std::string& config_path, const Overrides& ov) {
  auto cfg = config_path.empty() ? flsnn::ExperimentConfig{} : flsnn::load_config(config_path);
  ov.apply(cfg);
  cfg.validate();
  std::printf("model=%s attack=%s kappa=%s clients=%zu rounds=%zu seed=%llu\n", flsnn::to_string(cfg.model),
              cfg.attack.name().c_str(), cfg.compression ? std::to_string(cfg.compression->kappa).c_str() : "none",
              cfg.clients, cfg.rounds, static_cast<unsigned long long>(cfg.seed));
  const auto res = flsnn::run_experiment(cfg);
  print_summary(res.summary);
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& grid, const Overrides& ov) {
  flsnn::SweepSpec spec;
  if (!config_path.empty()) spec = flsnn::load_sweep(config_path);
  ov.apply(spec.base);
  if (!grid.empty()) spec.deltas = flsnn::standard_deltas(grid).get<std::vector<flsnn::json>>();
  spec.base.validate();
  const std::string out = spec.base.out;
  const auto rows = flsnn::run_sweep(spec, out, &std::cerr);
  std::cout << flsnn::kSweepHeader << '\n';
  for (const auto& r : rows) std::cout << flsnn::sweep_csv_row(r) << '\n';
  return 0;
}

int cmd_report(const std::filesystem::path& dir, const std::string& baseline) {
  using flsnn::json;
  auto read_json = [](const std::filesystem::path& p) {
    std::ifstream f(p);
    if (!f) throw std::runtime_error("cannot read " + p.string());
    return json::parse(f);
  };
  if (std::filesystem::exists(dir / "sweep.csv")) {
    std::ifstream f(dir / "sweep.csv");
    std::cout << f.rdbuf();
    return 0;
  }
  const auto s = read_json(dir / "summary.json");
  const auto cfg = flsnn::config_from_json(read_json(dir / "config.json"));
  std::printf("run                %s\n", dir.string().c_str());
  std::printf("model=%s attack=%s kappa=%s\n", flsnn::to_string(cfg.model), cfg.attack.name().c_str(),
              cfg.compression ? std::to_string(cfg.compression->kappa).c_str() : "none");
  std::printf("final accuracy     %.4f%s\n", s["final_accuracy"].get<double>(),
              s["diverged"].get<bool>() ? "  (diverged)" : "");
  const auto& bw = s["bandwidth"];
  std::printf("uplink bytes       %llu\n", bw["uplink_bytes"].get<unsigned long long>());
  std::printf("downlink bytes     %llu\n", bw["downlink_bytes"].get<unsigned long long>());
  std::printf("dense uplink       %llu\n", bw["dense_uplink_bytes"].get<unsigned long long>());
  std::printf("uplink ratio       %.6f\n", bw["uplink_ratio"].get<double>());
  if (s.contains("retention")) {
    const auto& r = s["retention"];
    std::printf("retention freq     mean %.6g  std %.6g\n", r["mean"].get<double>(), r["stddev"].get<double>());
  }
  if (!baseline.empty()) {
    const auto b = read_json(std::filesystem::path(baseline) / "summary.json");
    const double clean = b["final_accuracy"].get<double>();
    const double attacked = s["final_accuracy"].get<double>();
    std::printf("clean accuracy     %.4f\n", clean);
    std::printf("accuracy loss      %.4f\n", flsnn::accuracy_loss(clean, attacked));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated SNN/ANN training under Byzantine attacks with Top-kappa sparsification"};
  app.require_subcommand(1);

  std::string run_config, sweep_config, grid, report_dir, baseline;
  Overrides run_ov, sweep_ov;

  auto* run = app.add_subcommand("run", "Run one experiment");
  run->add_option("--config", run_config, "Experiment config (JSON)");
  run_ov.attach(run);

  auto* sweep = app.add_subcommand("sweep", "Run a sweep of experiment deltas");
  sweep->add_option("--config", sweep_config, "Sweep spec (JSON: base, models, deltas, repetitions)");
  sweep->add_option("--grid", grid, "Use a standard intensity grid")
      ->check(CLI::IsMember({"noise", "ipm", "alie", "minmax", "kappa"}));
  sweep_ov.attach(sweep);

  auto* report = app.add_subcommand("report", "Summarise a finished run or sweep directory");
  report->add_option("--out", report_dir, "Run or sweep directory")->required();
  report->add_option("--baseline", baseline, "Clean run directory for accuracy loss");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(run_config, run_ov);
    if (*sweep) return cmd_sweep(sweep_config, grid, sweep_ov);
    if (*report) return cmd_report(report_dir, baseline);
  } catch (const flsnn::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const flsnn::IdxError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
