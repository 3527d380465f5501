#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "d3ids/errors.hpp"
#include "d3ids/types.hpp"

namespace d3ids {

// One attack cluster: a mean-shifted Gaussian in feature space plus a pool
// of attacker/victim nodes that emit it.
struct SyntheticClass {
  std::string name;
  double fraction = 0.075;      // of all flows
  int attackers = 8;
  int victims = 4;
  std::vector<int> shift_dims;  // class-specific feature dims
  double shift = 0.3;           // mean shift applied on shift_dims
  double feature_std = 0.10;
  double duration_scale = 0.4;  // relative to benign durations
};

struct SyntheticSpec {
  int nodes = 200;
  int hubs = 6;  // first hub gets the conventional router address
  int flows = 20000;
  int feature_dim = 12;
  double benign_fraction = 0.70;
  double benign_std = 0.12;
  double hub_affinity = 0.7;    // share of benign flows that touch a hub
  // Dims shifted (weakly) for every attack class: generic anomaly signal
  // that only becomes strong once accumulated over a node's history.
  std::vector<int> generic_attack_dims{0, 1};
  double generic_shift = 0.10;
  int64_t start_ms = 1'600'000'000'000;
  double mean_gap_ms = 60.0;
  std::vector<SyntheticClass> classes;

  static SyntheticSpec defaults() {
    SyntheticSpec s;
    s.classes = {
        {"DDoS", 0.075, 8, 3, {2, 3}, 0.35, 0.10, 0.2},
        {"DoS", 0.075, 8, 5, {4, 5}, 0.30, 0.10, 0.3},
        {"Scanning", 0.075, 6, 40, {6, 7}, 0.28, 0.10, 0.15},
        {"MITM", 0.075, 6, 8, {8}, 0.12, 0.10, 0.8},
    };
    return s;
  }

  void validate() const {
    if (nodes <= 0 || flows <= 0 || feature_dim <= 0 || hubs <= 0)
      throw ConfigError("synthetic spec: counts must be positive");
    if (hubs >= nodes)
      throw ConfigError("synthetic spec: hubs must be fewer than nodes");
    double total = benign_fraction;
    for (const auto& c : classes) {
      total += c.fraction;
      if (c.attackers <= 0 || c.victims <= 0)
        throw ConfigError("synthetic spec: class '" + c.name +
                          "' needs positive attacker/victim counts");
      for (int d : shifted_dims(c))
        if (d < 0 || d >= feature_dim)
          throw ConfigError("synthetic spec: shift dim out of range in '" +
                            c.name + "'");
    }
    if (std::abs(total - 1.0) > 1e-9)
      throw ConfigError("synthetic spec: class fractions must sum to 1");
  }

 private:
  static std::vector<int> shifted_dims(const SyntheticClass& c) {
    return c.shift_dims;
  }
};

namespace detail {

// Hand-rolled samplers keep the byte stream independent of the standard
// library's distribution internals.
inline double uniform01(std::mt19937_64& rng) {
  return (rng() >> 11) * 0x1.0p-53;
}

inline double normal(std::mt19937_64& rng) {
  double u1 = uniform01(rng);
  double u2 = uniform01(rng);
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

inline double exponential(std::mt19937_64& rng, double mean) {
  double u = uniform01(rng);
  if (u < 1e-300) u = 1e-300;
  return -mean * std::log(u);
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {  // inclusive
  return lo + static_cast<int>(rng() % static_cast<uint64_t>(hi - lo + 1));
}

}  // namespace detail

// Deterministic synthetic flow corpus: benign background traffic between
// terminals and hubs, plus per-class attacker pools emitting mean-shifted
// feature clusters at distinct duration scales.
inline std::vector<FlowRecord> synthesize_corpus(const SyntheticSpec& spec,
                                                 uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);

  // Node identities. Hub 0 carries the conventional router address so the
  // prefix rule in layer assignment is exercised.
  struct Node {
    std::string ip;
    int port;
  };
  std::vector<Node> nodes(spec.nodes);
  for (int h = 0; h < spec.hubs; ++h)
    nodes[h] = {"192.168.0." + std::to_string(h + 1), 80};
  for (int v = spec.hubs; v < spec.nodes; ++v) {
    int t = v - spec.hubs;
    nodes[v] = {"10.0." + std::to_string(t / 250) + "." +
                    std::to_string(t % 250 + 1),
                1024 + (t % 50000)};
  }

  int terminals = spec.nodes - spec.hubs;
  auto random_terminal = [&](std::mt19937_64& r) {
    return spec.hubs + detail::uniform_int(r, 0, terminals - 1);
  };

  // Disjoint attacker pools, then victim pools, carved from the terminals.
  std::vector<std::vector<int>> attacker_pool(spec.classes.size());
  std::vector<std::vector<int>> victim_pool(spec.classes.size());
  int cursor = 0;
  for (size_t k = 0; k < spec.classes.size(); ++k) {
    for (int a = 0; a < spec.classes[k].attackers; ++a)
      attacker_pool[k].push_back(spec.hubs + (cursor++ % terminals));
  }
  for (size_t k = 0; k < spec.classes.size(); ++k) {
    for (int v = 0; v < spec.classes[k].victims; ++v)
      victim_pool[k].push_back(spec.hubs + (cursor++ % terminals));
  }

  // Class mean vectors.
  std::vector<double> benign_mean(spec.feature_dim);
  for (int i = 0; i < spec.feature_dim; ++i)
    benign_mean[i] = 0.35 + 0.3 * detail::uniform01(rng);
  std::vector<std::vector<double>> class_mean(spec.classes.size(),
                                              benign_mean);
  for (size_t k = 0; k < spec.classes.size(); ++k) {
    for (int d : spec.generic_attack_dims)
      class_mean[k][d] += spec.generic_shift;
    int sgn = 1;
    for (int d : spec.classes[k].shift_dims) {
      class_mean[k][d] += sgn * spec.classes[k].shift;
      sgn = -sgn;
    }
  }

  std::vector<FlowRecord> out;
  out.reserve(spec.flows);
  double t = static_cast<double>(spec.start_ms);
  for (int i = 0; i < spec.flows; ++i) {
    t += 1.0 + detail::exponential(rng, spec.mean_gap_ms);

    double u = detail::uniform01(rng);
    int cls = -1;  // -1 = benign
    if (u >= spec.benign_fraction) {
      double acc = spec.benign_fraction;
      for (size_t k = 0; k < spec.classes.size(); ++k) {
        acc += spec.classes[k].fraction;
        if (u < acc) {
          cls = static_cast<int>(k);
          break;
        }
      }
      if (cls < 0) cls = static_cast<int>(spec.classes.size()) - 1;
    }

    FlowRecord rec;
    rec.timestamp_ms = static_cast<int64_t>(t);
    int src, dst;
    if (cls < 0) {
      src = random_terminal(rng);
      if (detail::uniform01(rng) < spec.hub_affinity)
        dst = detail::uniform_int(rng, 0, spec.hubs - 1);
      else
        dst = random_terminal(rng);
      if (dst == src) dst = (src + 1 - spec.hubs) % terminals + spec.hubs;
      rec.binary_label = 0;
      rec.attack_class = "Benign";
      rec.duration_ms =
          static_cast<int64_t>(detail::exponential(rng, 500.0)) + 1;
      rec.features.resize(spec.feature_dim);
      for (int d = 0; d < spec.feature_dim; ++d)
        rec.features[d] =
            benign_mean[d] + spec.benign_std * detail::normal(rng);
    } else {
      const auto& sc = spec.classes[cls];
      src = attacker_pool[cls][detail::uniform_int(
          rng, 0, static_cast<int>(attacker_pool[cls].size()) - 1)];
      dst = victim_pool[cls][detail::uniform_int(
          rng, 0, static_cast<int>(victim_pool[cls].size()) - 1)];
      if (dst == src) dst = victim_pool[cls][0] == src && victim_pool[cls].size() > 1
                                ? victim_pool[cls][1]
                                : victim_pool[cls][0];
      rec.binary_label = 1;
      rec.attack_class = sc.name;
      rec.duration_ms = static_cast<int64_t>(detail::exponential(
                            rng, 500.0 * sc.duration_scale)) +
                        1;
      rec.features.resize(spec.feature_dim);
      for (int d = 0; d < spec.feature_dim; ++d)
        rec.features[d] =
            class_mean[cls][d] + sc.feature_std * detail::normal(rng);
    }
    rec.src_ip = nodes[src].ip;
    rec.src_port = nodes[src].port;
    rec.dst_ip = nodes[dst].ip;
    rec.dst_port = nodes[dst].port;
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace d3ids
