#pragma once

// Non-omniscient Byzantine update generators. Every crafted update is a
// function of the benign clients' submitted updates (and, for Noise, of the
// attacker's own random stream); no routine here sees training data.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "flsnn/core.hpp"
#include "flsnn/rng.hpp"

namespace flsnn {

enum class MinMaxPerturbation { unit_negative_mean, negative_sign, negative_std };

inline const char* to_string(MinMaxPerturbation p) {
  switch (p) {
    case MinMaxPerturbation::unit_negative_mean: return "unit-negative-mean";
    case MinMaxPerturbation::negative_sign: return "negative-sign";
    case MinMaxPerturbation::negative_std: return "negative-std";
  }
  return "?";
}

inline MinMaxPerturbation parse_perturbation(const std::string& s) {
  if (s == "unit-negative-mean" || s == "unit_negative_mean") return MinMaxPerturbation::unit_negative_mean;
  if (s == "negative-sign" || s == "negative_sign") return MinMaxPerturbation::negative_sign;
  if (s == "negative-std" || s == "negative_std") return MinMaxPerturbation::negative_std;
  throw ConfigError("unknown minmax perturbation '" + s + "'");
}

struct NoAttack {};
struct NoiseAttack {
  double sigma = 0.1;
};
struct AlieAttack {};
struct MinMaxAttack {
  MinMaxPerturbation perturbation = MinMaxPerturbation::unit_negative_mean;
  double tau = 1e-5;
};
struct IpmAttack {
  double epsilon = 1.0;
};

using AttackKind = std::variant<NoAttack, NoiseAttack, AlieAttack, MinMaxAttack, IpmAttack>;

struct AttackSpec {
  AttackKind kind = NoAttack{};
  double malicious_fraction = 0.0;

  bool active() const { return !std::holds_alternative<NoAttack>(kind); }

  std::string name() const {
    return std::visit(
        [](const auto& k) -> std::string {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, NoAttack>) return "none";
          else if constexpr (std::is_same_v<K, NoiseAttack>) return "noise";
          else if constexpr (std::is_same_v<K, AlieAttack>) return "alie";
          else if constexpr (std::is_same_v<K, MinMaxAttack>) return "minmax";
          else return "ipm";
        },
        kind);
  }

  /// Attack strength as swept in experiments: sigma, epsilon, or the malicious fraction.
  double intensity() const {
    if (auto* n = std::get_if<NoiseAttack>(&kind)) return n->sigma;
    if (auto* i = std::get_if<IpmAttack>(&kind)) return i->epsilon;
    if (active()) return malicious_fraction;
    return 0.0;
  }

  /// Number of Byzantine clients among `num_clients`: ceil(fraction * n), zero when no attack.
  std::size_t byzantine_count(std::size_t num_clients) const {
    if (!active()) return 0;
    return static_cast<std::size_t>(std::ceil(malicious_fraction * static_cast<double>(num_clients) - 1e-9));
  }

  void validate(std::size_t num_clients) const {
    if (!(malicious_fraction >= 0.0 && malicious_fraction < 0.5)) {
      throw ConfigError("malicious fraction must lie in [0, 0.5)");
    }
    if (2 * byzantine_count(num_clients) >= num_clients && active()) {
      throw ConfigError("Byzantine clients must be a strict minority");
    }
    if (auto* n = std::get_if<NoiseAttack>(&kind); n && !(n->sigma > 0.0)) throw ConfigError("noise sigma must be > 0");
    if (auto* i = std::get_if<IpmAttack>(&kind); i && !(i->epsilon >= 0.0)) throw ConfigError("ipm epsilon must be >= 0");
    if (auto* m = std::get_if<MinMaxAttack>(&kind); m && !(m->tau > 0.0)) throw ConfigError("minmax tau must be > 0");
  }
};

/// What a non-omniscient adversary may observe in a round: benign updates and client counts.
struct BenignView {
  std::vector<std::span<const float>> updates;
  std::size_t num_clients = 0;    // n
  std::size_t num_byzantine = 0;  // m

  std::size_t dim() const { return updates.empty() ? 0 : updates.front().size(); }

  void check() const {
    for (const auto& u : updates) require_same_size(u.size(), dim(), "benign view");
  }
};

// ---------------------------------------------------------------------------
// Statistics over the benign set (double accumulation)

inline std::vector<double> benign_mean(const BenignView& view) {
  view.check();
  if (view.updates.empty()) throw ConfigError("no benign updates to observe");
  std::vector<double> mu(view.dim(), 0.0);
  for (const auto& u : view.updates) {
    for (std::size_t j = 0; j < mu.size(); ++j) mu[j] += static_cast<double>(u[j]);
  }
  const auto k = static_cast<double>(view.updates.size());
  for (auto& v : mu) v /= k;
  return mu;
}

/// Sample (n-1) standard deviation per coordinate.
inline std::vector<double> benign_std(const BenignView& view, std::span<const double> mu) {
  const std::size_t k = view.updates.size();
  if (k < 2) throw ConfigError("need at least two benign updates for a standard deviation");
  std::vector<double> var(mu.size(), 0.0);
  for (const auto& u : view.updates) {
    for (std::size_t j = 0; j < mu.size(); ++j) {
      const double d = static_cast<double>(u[j]) - mu[j];
      var[j] += d * d;
    }
  }
  for (auto& v : var) v = std::sqrt(v / static_cast<double>(k - 1));
  return var;
}

inline std::vector<float> round_to_float(std::span<const double> v) {
  std::vector<float> out(v.size());
  std::transform(v.begin(), v.end(), out.begin(), [](double x) { return static_cast<float>(x); });
  return out;
}

/// Standard-normal quantile: rational approximation refined by two Newton steps on erfc.
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("normal_quantile: p must lie in (0,1)");
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  constexpr double inv_sqrt_2pi = 0.39894228040143267794;
  for (int it = 0; it < 2; ++it) {
    const double cdf = 0.5 * std::erfc(-x / std::sqrt(2.0));
    const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x * x);
    x -= (cdf - p) / pdf;
  }
  return x;
}

// ---------------------------------------------------------------------------
// Attacks

/// own_update + N(0, sigma^2) per coordinate, drawn from the attacker's stream.
inline std::vector<float> noise_attack(std::span<const float> own_update, double sigma, Rng& rng) {
  if (!(sigma > 0.0)) throw ConfigError("noise sigma must be > 0");
  std::normal_distribution<double> z(0.0, sigma);
  std::vector<float> out(own_update.size());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = static_cast<float>(static_cast<double>(own_update[j]) + z(rng));
  return out;
}

struct AlieParams {
  std::size_t supporters = 0;  // s
  double z_max = 0.0;
};

/// s = floor(n/2 + 1) - m, z_max = Phi^-1((n - m - s) / (n - m)).
inline AlieParams alie_params(std::size_t n, std::size_t m) {
  if (m >= n || n - m < 2) throw ConfigError("alie: need at least two benign clients");
  const auto s = static_cast<long long>(n / 2 + 1) - static_cast<long long>(m);
  const auto benign = static_cast<long long>(n - m);
  const long long num = benign - s;
  if (num <= 0 || num >= benign) {
    throw ConfigError("alie: z_max undefined for n=" + std::to_string(n) + ", m=" + std::to_string(m));
  }
  return {static_cast<std::size_t>(s), normal_quantile(static_cast<double>(num) / static_cast<double>(benign))};
}

/// mu - z_max * sigma, coordinate-wise over the benign updates.
inline std::vector<float> alie_attack(const BenignView& view) {
  const auto prm = alie_params(view.num_clients, view.num_byzantine);
  const auto mu = benign_mean(view);
  const auto sd = benign_std(view, mu);
  std::vector<double> out(mu.size());
  for (std::size_t j = 0; j < mu.size(); ++j) out[j] = mu[j] - prm.z_max * sd[j];
  return round_to_float(out);
}

struct MinMaxResult {
  std::vector<float> update;
  double gamma = 0.0;
  double max_benign_distance = 0.0;
};

namespace detail {

inline double dist2(std::span<const double> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = a[j] - static_cast<double>(b[j]);
    s += d * d;
  }
  return s;
}

inline double max_pairwise_distance(const BenignView& view) {
  double best = 0.0;
  for (std::size_t i = 0; i < view.updates.size(); ++i) {
    for (std::size_t k = i + 1; k < view.updates.size(); ++k) {
      double s = 0.0;
      for (std::size_t j = 0; j < view.dim(); ++j) {
        const double d = static_cast<double>(view.updates[i][j]) - static_cast<double>(view.updates[k][j]);
        s += d * d;
      }
      best = std::max(best, s);
    }
  }
  return std::sqrt(best);
}

inline std::vector<double> unit_direction(std::vector<double> v) {
  double norm = 0.0;
  for (auto x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm == 0.0) return v;
  for (auto& x : v) x /= norm;
  return v;
}

}  // namespace detail

/// Unit perturbation direction for MinMax. Falls back from the negative mean
/// to the negative sign when the mean vanishes; may return the zero vector.
inline std::vector<double> minmax_direction(const BenignView& view, std::span<const double> mu, MinMaxPerturbation kind) {
  std::vector<double> p(mu.size(), 0.0);
  auto negative_sign = [&] {
    for (std::size_t j = 0; j < mu.size(); ++j) p[j] = mu[j] > 0.0 ? -1.0 : (mu[j] < 0.0 ? 1.0 : 0.0);
  };
  switch (kind) {
    case MinMaxPerturbation::unit_negative_mean: {
      bool any = false;
      for (std::size_t j = 0; j < mu.size(); ++j) {
        p[j] = -mu[j];
        any = any || mu[j] != 0.0;
      }
      if (!any) negative_sign();
      break;
    }
    case MinMaxPerturbation::negative_sign:
      negative_sign();
      break;
    case MinMaxPerturbation::negative_std: {
      const auto sd = benign_std(view, mu);
      for (std::size_t j = 0; j < mu.size(); ++j) p[j] = -sd[j];
      break;
    }
  }
  return detail::unit_direction(std::move(p));
}

/// Largest gamma (by halving search from 10) keeping mu + gamma*p within the
/// benign set's maximum pairwise distance of every benign update.
inline MinMaxResult minmax_attack(const BenignView& view, MinMaxPerturbation perturbation, double tau) {
  if (!(tau > 0.0)) throw ConfigError("minmax tau must be > 0");
  if (view.updates.size() < 2) throw ConfigError("minmax: need at least two benign clients");
  const auto mu = benign_mean(view);
  const auto p = minmax_direction(view, mu, perturbation);
  const double bound = detail::max_pairwise_distance(view);
  const double bound2 = bound * bound;

  std::vector<double> candidate(mu.size());
  auto feasible = [&](double gamma) {
    for (std::size_t j = 0; j < mu.size(); ++j) candidate[j] = mu[j] + gamma * p[j];
    for (const auto& u : view.updates) {
      if (detail::dist2(candidate, u) > bound2) return false;
    }
    return true;
  };

  double gamma = 10.0;
  double step = gamma / 2.0;
  double best = 0.0;
  while (std::abs(best - gamma) > tau) {
    if (feasible(gamma)) {
      best = gamma;
      gamma += step;
    } else {
      gamma -= step;
    }
    step /= 2.0;
  }

  MinMaxResult res;
  res.gamma = best;
  res.max_benign_distance = bound;
  for (std::size_t j = 0; j < mu.size(); ++j) candidate[j] = mu[j] + best * p[j];
  res.update = round_to_float(candidate);
  return res;
}

/// -epsilon * mean(benign): opposes the descent direction.
inline std::vector<float> ipm_attack(const BenignView& view, double epsilon) {
  auto mu = benign_mean(view);
  for (auto& v : mu) v *= -epsilon;
  return round_to_float(mu);
}

}  // namespace flsnn
