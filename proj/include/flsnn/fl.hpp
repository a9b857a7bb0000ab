#pragma once

// Federated round pipeline:
//   broadcast W^{r-1} -> benign local steps -> Byzantine substitution (dense)
//   -> optional Top-kappa per update -> mean over all |C| clients -> W^r.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include "flsnn/attacks.hpp"
#include "flsnn/compression.hpp"
#include "flsnn/data.hpp"
#include "flsnn/model.hpp"
#include "flsnn/optim.hpp"

namespace flsnn {

using Params = ParameterVector<float>;

struct ServerState {
  Params global;
  std::size_t round = 0;
};

struct ClientRecord {
  std::size_t id = 0;
  bool is_byzantine = false;
  ClientShard shard;
  OptimizerState<float> optimizer;
};

/// Everything a round needs besides the mutable server/client state.
struct RoundContext {
  const ModelSpec* model = nullptr;
  const Dataset* train = nullptr;
  AttackSpec attack;
  std::optional<CompressionConfig> compression;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

struct RoundReport {
  std::size_t round = 0;
  std::optional<double> test_accuracy;
  double train_loss = 0.0;
  std::uint64_t uplink_bytes = 0;
  std::uint64_t downlink_bytes = 0;
  std::vector<double> update_norms;
  double max_update_norm = 0.0;
  double mean_update_norm = 0.0;
  std::size_t retained_coordinates = 0;  // distinct coordinates kept by at least one client
};

/// Byzantine clients are the first ceil(fraction * n) ids.
inline std::vector<ClientRecord> make_clients(const Dataset& train, std::size_t num_clients, const AttackSpec& attack,
                                              std::size_t num_params, const OptimizerHyper& hyper,
                                              std::uint64_t seed) {
  attack.validate(num_clients);
  auto shards = partition_iid(train, num_clients, seed);
  const std::size_t m = attack.byzantine_count(num_clients);
  std::vector<ClientRecord> clients;
  clients.reserve(num_clients);
  for (std::size_t c = 0; c < num_clients; ++c) {
    clients.push_back({c, c < m, std::move(shards[c]), OptimizerState<float>(num_params, hyper)});
  }
  return clients;
}

struct LocalStep {
  std::vector<float> delta;
  double loss = 0.0;
};

/// One SGD step on one batch starting from the global model; returns W_c - W^{r-1}.
inline LocalStep client_local_step(ClientRecord& client, const Params& global, const ModelSpec& model,
                                   const Dataset& train, std::size_t batch_size, std::uint64_t seed,
                                   std::size_t round) {
  if (client.shard.size() == 0) throw ShapeError("client " + std::to_string(client.id) + " has an empty shard");
  const auto batch = client.shard.next_batch(batch_size);
  Rng enc_rng = make_rng(seed, {tag(Stream::encoding), client.id, round});

  Params local = global;
  std::vector<float> grad(local.size());
  LocalStep out;
  out.loss = batch_gradient<float>(model, local, train, batch, grad, &enc_rng);
  sgd_step<float>(local.values, grad, client.optimizer);
  out.delta.resize(local.size());
  for (std::size_t i = 0; i < local.size(); ++i) out.delta[i] = local.values[i] - global.values[i];
  return out;
}

/// Replaces the Byzantine slots of `updates` with crafted vectors; benign slots are untouched.
/// Idle Byzantine slots hold zeros on entry, so Noise submits pure N(0, sigma^2).
inline void inject_attacks(std::vector<std::vector<float>>& updates, std::span<const std::uint8_t> byzantine,
                           const AttackSpec& spec, std::uint64_t seed, std::size_t round) {
  require_same_size(updates.size(), byzantine.size(), "inject_attacks");
  if (!spec.active()) return;
  const std::size_t m = static_cast<std::size_t>(std::count(byzantine.begin(), byzantine.end(), 1));
  if (m == 0) return;

  BenignView view;
  view.num_clients = updates.size();
  view.num_byzantine = m;
  for (std::size_t c = 0; c < updates.size(); ++c) {
    if (!byzantine[c]) view.updates.emplace_back(updates[c]);
  }

  std::vector<float> crafted;
  if (std::holds_alternative<AlieAttack>(spec.kind)) {
    crafted = alie_attack(view);
  } else if (auto* mm = std::get_if<MinMaxAttack>(&spec.kind)) {
    crafted = minmax_attack(view, mm->perturbation, mm->tau).update;
  } else if (auto* ipm = std::get_if<IpmAttack>(&spec.kind)) {
    crafted = ipm_attack(view, ipm->epsilon);
  }

  for (std::size_t c = 0; c < updates.size(); ++c) {
    if (!byzantine[c]) continue;
    if (auto* nz = std::get_if<NoiseAttack>(&spec.kind)) {
      Rng rng = make_rng(seed, {tag(Stream::attack), c, round});
      updates[c] = noise_attack(updates[c], nz->sigma, rng);
    } else {
      updates[c] = crafted;
    }
  }
}

/// (1/num_clients) * sum of updates, accumulated in double in the given order.
inline std::vector<float> aggregate_fedavg(std::span<const std::vector<float>> updates, std::size_t num_clients) {
  if (updates.empty()) throw ShapeError("aggregate_fedavg: no updates");
  if (num_clients == 0) throw ConfigError("aggregate_fedavg: zero clients");
  const std::size_t d = updates.front().size();
  std::vector<double> acc(d, 0.0);
  for (const auto& u : updates) {
    require_same_size(u.size(), d, "aggregate_fedavg");
    for (std::size_t j = 0; j < d; ++j) acc[j] += static_cast<double>(u[j]);
  }
  std::vector<float> out(d);
  const auto n = static_cast<double>(num_clients);
  for (std::size_t j = 0; j < d; ++j) out[j] = static_cast<float>(acc[j] / n);
  return out;
}

/// Sparse variant: unretained coordinates contribute zero; the divisor stays num_clients.
inline std::vector<float> aggregate_fedavg(std::span<const SparseUpdate> updates, std::size_t num_clients) {
  if (updates.empty()) throw ShapeError("aggregate_fedavg: no updates");
  if (num_clients == 0) throw ConfigError("aggregate_fedavg: zero clients");
  const std::size_t d = updates.front().dim;
  std::vector<double> acc(d, 0.0);
  for (const auto& u : updates) {
    require_same_size(u.dim, d, "aggregate_fedavg");
    for (std::size_t i = 0; i < u.nnz(); ++i) {
      if (u.indices[i] >= d) throw ShapeError("aggregate_fedavg: sparse index out of range");
      acc[u.indices[i]] += static_cast<double>(u.values[i]);
    }
  }
  std::vector<float> out(d);
  const auto n = static_cast<double>(num_clients);
  for (std::size_t j = 0; j < d; ++j) out[j] = static_cast<float>(acc[j] / n);
  return out;
}

inline double l2_norm(std::span<const float> v) {
  double s = 0.0;
  for (auto x : v) s += static_cast<double>(x) * static_cast<double>(x);
  return std::sqrt(s);
}

namespace detail {

/// Runs fn(i) for i in [0, n); with threads > 1 the indices are striped over workers.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  threads = std::min(std::max<std::size_t>(threads, 1), n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < n; i += threads) fn(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace detail

/// One full aggregation round. Updates `retention` when compression is on and a counter set is given.
inline RoundReport run_round(ServerState& server, std::vector<ClientRecord>& clients, const RoundContext& ctx,
                             RetentionCounters* retention = nullptr) {
  if (ctx.model == nullptr || ctx.train == nullptr) throw ConfigError("run_round: context incomplete");
  if (clients.empty()) throw ConfigError("run_round: no clients");
  const std::size_t n = clients.size();
  const std::size_t d = server.global.size();
  const std::size_t round = server.round + 1;

  std::vector<std::vector<float>> updates(n);
  std::vector<double> losses(n, 0.0);
  std::vector<std::uint8_t> byz(n, 0);
  for (std::size_t c = 0; c < n; ++c) byz[c] = clients[c].is_byzantine ? 1 : 0;

  detail::parallel_for(n, ctx.threads, [&](std::size_t c) {
    if (byz[c]) {
      updates[c].assign(d, 0.0f);
      return;
    }
    auto step = client_local_step(clients[c], server.global, *ctx.model, *ctx.train, ctx.batch_size, ctx.seed, round);
    updates[c] = std::move(step.delta);
    losses[c] = step.loss;
  });

  inject_attacks(updates, byz, ctx.attack, ctx.seed, round);

  RoundReport rep;
  rep.round = round;
  std::size_t benign = 0;
  for (std::size_t c = 0; c < n; ++c) {
    if (!byz[c]) {
      rep.train_loss += losses[c];
      ++benign;
    }
  }
  rep.train_loss /= static_cast<double>(std::max<std::size_t>(benign, 1));
  rep.update_norms.resize(n);
  for (std::size_t c = 0; c < n; ++c) {
    rep.update_norms[c] = l2_norm(updates[c]);
    rep.max_update_norm = std::max(rep.max_update_norm, rep.update_norms[c]);
    rep.mean_update_norm += rep.update_norms[c];
  }
  rep.mean_update_norm /= static_cast<double>(n);
  rep.downlink_bytes = static_cast<std::uint64_t>(n) * dense_payload_bytes(d);

  std::vector<float> mean;
  if (ctx.compression) {
    std::vector<SparseUpdate> sparse;
    sparse.reserve(n);
    std::vector<std::uint8_t> touched(d, 0);
    for (std::size_t c = 0; c < n; ++c) {
      sparse.push_back(topk_compress(updates[c], *ctx.compression));
      rep.uplink_bytes += sparse_payload_bytes(sparse.back().nnz());
      for (auto i : sparse.back().indices) touched[i] = 1;
      if (retention != nullptr) record_retention(sparse.back(), *retention);
    }
    rep.retained_coordinates = static_cast<std::size_t>(std::count(touched.begin(), touched.end(), 1));
    mean = aggregate_fedavg(std::span<const SparseUpdate>(sparse), n);
  } else {
    for (std::size_t c = 0; c < n; ++c) rep.uplink_bytes += dense_payload_bytes(d);
    rep.retained_coordinates = d;
    mean = aggregate_fedavg(std::span<const std::vector<float>>(updates), n);
  }

  for (std::size_t j = 0; j < d; ++j) server.global.values[j] += mean[j];
  server.round = round;
  return rep;
}

/// Fraction of correctly classified samples.
inline double evaluate(const Params& params, const ModelSpec& model, const Dataset& test, std::uint64_t seed = 0) {
  if (test.size() == 0) throw ShapeError("evaluate: empty test set");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    Rng enc_rng = make_rng(seed, {tag(Stream::encoding), 0xE7A1ULL, i});
    if (predict(model, params, test.sample(i), &enc_rng) == test.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

/// Clean accuracy minus attacked accuracy; negative when the attack helped.
inline constexpr double accuracy_loss(double clean, double attacked) { return clean - attacked; }

}  // namespace flsnn
