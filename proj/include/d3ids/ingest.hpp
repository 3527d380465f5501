#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "d3ids/address.hpp"
#include "d3ids/errors.hpp"
#include "d3ids/types.hpp"

namespace d3ids {

struct LayerConfig {
  std::vector<std::string> router_prefixes{"192.168.0.1"};
  // 0 means "resolve from degree_percentile over the training split".
  int degree_threshold = 0;
  double degree_percentile = 99.0;
};

// Distinct-neighbor counts per IP, computed over the training split.
class DegreeStats {
 public:
  void add_pair(const std::string& ip_a, const std::string& ip_b) {
    neighbors_[ip_a].insert(ip_b);
    neighbors_[ip_b].insert(ip_a);
  }

  int distinct_neighbors(const std::string& ip) const {
    auto it = neighbors_.find(ip);
    return it == neighbors_.end() ? 0 : static_cast<int>(it->second.size());
  }

  int percentile_threshold(double pct) const {
    if (neighbors_.empty()) return std::numeric_limits<int>::max();
    std::vector<int> counts;
    counts.reserve(neighbors_.size());
    for (const auto& [ip, nb] : neighbors_)
      counts.push_back(static_cast<int>(nb.size()));
    std::sort(counts.begin(), counts.end());
    size_t rank = static_cast<size_t>(
        std::ceil(pct / 100.0 * static_cast<double>(counts.size())));
    if (rank == 0) rank = 1;
    if (rank > counts.size()) rank = counts.size();
    return counts[rank - 1];
  }

 private:
  std::map<std::string, std::set<std::string>> neighbors_;
};

inline bool matches_router_prefix(const std::string& ip,
                                  const std::vector<std::string>& prefixes) {
  for (const auto& p : prefixes) {
    if (p.empty()) continue;
    if (ip == p) return true;
    // Entries ending in '.' act as subnet prefixes ("192.168.").
    if (p.back() == '.' && ip.rfind(p, 0) == 0) return true;
  }
  return false;
}

// Layer 1 = intermediate device (router address or high fan-out), 0 = terminal.
inline int assign_layer(const std::string& ip, const DegreeStats& stats,
                        const LayerConfig& cfg, int resolved_threshold) {
  if (matches_router_prefix(ip, cfg.router_prefixes)) return 1;
  return stats.distinct_neighbors(ip) >= resolved_threshold ? 1 : 0;
}

// Per-feature min/max frozen on the training split.
struct FeatureStats {
  std::vector<double> min;
  std::vector<double> max;

  int dim() const { return static_cast<int>(min.size()); }

  static FeatureStats fit(const std::vector<FlowRecord>& records,
                          size_t count) {
    FeatureStats s;
    for (size_t r = 0; r < count && r < records.size(); ++r) {
      const auto& f = records[r].features;
      if (s.min.empty()) {
        s.min = f;
        s.max = f;
        continue;
      }
      if (f.size() != s.min.size())
        throw DataError("feature stats: inconsistent feature count at row " +
                        std::to_string(r));
      for (size_t i = 0; i < f.size(); ++i) {
        s.min[i] = std::min(s.min[i], f[i]);
        s.max[i] = std::max(s.max[i], f[i]);
      }
    }
    return s;
  }
};

// (x - min) / (max - min), constant features map to 0, output clamped to
// [0,1] so events from other splits keep the range invariant.
inline std::vector<double> normalize_features(const std::vector<double>& raw,
                                              const FeatureStats& stats) {
  if (static_cast<int>(raw.size()) != stats.dim())
    throw DataError("normalize: expected " + std::to_string(stats.dim()) +
                    " features, got " + std::to_string(raw.size()));
  std::vector<double> out(raw.size());
  for (size_t i = 0; i < raw.size(); ++i) {
    if (!std::isfinite(raw[i]))
      throw DataError("normalize: non-finite value at feature index " +
                      std::to_string(i));
    double range = stats.max[i] - stats.min[i];
    double v = range > 0.0 ? (raw[i] - stats.min[i]) / range : 0.0;
    out[i] = std::clamp(v, 0.0, 1.0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV schema: src_ip,src_port,dst_ip,dst_port,timestamp_ms,duration_ms,
//             binary_label,attack_class,f0..f{N-1}
// ---------------------------------------------------------------------------

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

inline std::vector<FlowRecord> read_flow_csv(const std::string& path,
                                             std::ostream& warn = std::cerr) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset: " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty dataset: " + path);

  auto header = split_csv_line(line);
  std::unordered_map<std::string, int> col;
  std::vector<int> feature_cols;
  std::vector<std::string> required = {
      "src_ip",       "src_port",    "dst_ip",       "dst_port",
      "timestamp_ms", "duration_ms", "binary_label", "attack_class"};
  for (int i = 0; i < static_cast<int>(header.size()); ++i) {
    const std::string& name = header[i];
    if (name.size() > 1 && name[0] == 'f' &&
        name.find_first_not_of("0123456789", 1) == std::string::npos) {
      feature_cols.push_back(i);
    } else if (std::find(required.begin(), required.end(), name) !=
               required.end()) {
      col[name] = i;
    } else {
      warn << "warning: ignoring unknown column '" << name << "'\n";
    }
  }
  for (const auto& name : required)
    if (!col.count(name))
      throw DataError("dataset missing required column '" + name + "'");

  std::vector<FlowRecord> records;
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto parts = split_csv_line(line);
    if (parts.size() < header.size())
      throw DataError("dataset row " + std::to_string(lineno) +
                      " has too few columns");
    FlowRecord rec;
    try {
      rec.src_ip = parts[col["src_ip"]];
      rec.src_port = std::stoi(parts[col["src_port"]]);
      rec.dst_ip = parts[col["dst_ip"]];
      rec.dst_port = std::stoi(parts[col["dst_port"]]);
      rec.timestamp_ms = std::stoll(parts[col["timestamp_ms"]]);
      rec.duration_ms = std::stoll(parts[col["duration_ms"]]);
      rec.binary_label = std::stoi(parts[col["binary_label"]]);
      rec.attack_class = parts[col["attack_class"]];
      rec.features.reserve(feature_cols.size());
      for (int fc : feature_cols) rec.features.push_back(std::stod(parts[fc]));
    } catch (const std::invalid_argument&) {
      throw DataError("dataset row " + std::to_string(lineno) +
                      ": unparsable numeric field");
    }
    if (rec.duration_ms < 0)
      throw DataError("dataset row " + std::to_string(lineno) +
                      ": negative duration");
    if ((rec.attack_class == "Benign") != (rec.binary_label == 0))
      throw DataError("dataset row " + std::to_string(lineno) +
                      ": attack_class inconsistent with binary_label");
    records.push_back(std::move(rec));
  }
  return records;
}

inline void write_flow_csv(const std::string& path,
                           const std::vector<FlowRecord>& records) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write dataset: " + path);
  size_t n_features = records.empty() ? 0 : records[0].features.size();
  out << "src_ip,src_port,dst_ip,dst_port,timestamp_ms,duration_ms,"
         "binary_label,attack_class";
  for (size_t i = 0; i < n_features; ++i) out << ",f" << i;
  out << "\n";
  out.precision(std::numeric_limits<double>::max_digits10);
  for (const auto& r : records) {
    out << r.src_ip << ',' << r.src_port << ',' << r.dst_ip << ','
        << r.dst_port << ',' << r.timestamp_ms << ',' << r.duration_ms << ','
        << r.binary_label << ',' << r.attack_class;
    for (double f : r.features) out << ',' << f;
    out << "\n";
  }
}

// ---------------------------------------------------------------------------
// Event stream construction
// ---------------------------------------------------------------------------

struct SplitFractions {
  double train = 0.70;
  double val = 0.15;  // remainder is test
};

// Everything downstream consumes: timestamp-ordered events plus the frozen
// registry / layer map / normalization statistics they were built with.
struct EventStream {
  std::vector<EdgeEvent> events;
  std::vector<Split> split;  // parallel to events
  NodeRegistry registry;
  std::vector<int> node_layer;  // per NodeId
  FeatureStats stats;
  std::vector<std::string> attack_classes;  // sorted, excludes Benign
  size_t train_end = 0;                     // events[0, train_end) = train
  size_t val_end = 0;

  int class_index(const std::string& name) const {
    auto it =
        std::lower_bound(attack_classes.begin(), attack_classes.end(), name);
    if (it == attack_classes.end() || *it != name)
      throw DataError("unknown attack class '" + name + "'");
    return static_cast<int>(it - attack_classes.begin());
  }
};

inline EventStream build_event_stream(std::vector<FlowRecord> records,
                                      const LayerConfig& layer_cfg,
                                      const SplitFractions& frac = {}) {
  if (records.empty()) throw DataError("no flow records to ingest");

  // Chronological order, ties broken by input order.
  std::stable_sort(records.begin(), records.end(),
                   [](const FlowRecord& a, const FlowRecord& b) {
                     return a.timestamp_ms < b.timestamp_ms;
                   });

  EventStream es;
  size_t n = records.size();
  es.train_end = static_cast<size_t>(frac.train * static_cast<double>(n));
  es.val_end = es.train_end +
               static_cast<size_t>(frac.val * static_cast<double>(n));
  if (es.train_end == 0 || es.val_end >= n)
    throw ConfigError("split fractions leave an empty train/val/test split");

  // Registry over the whole corpus; degree stats and normalization over the
  // training split only.
  std::vector<Address> addrs;
  addrs.reserve(2 * n);
  DegreeStats degrees;
  std::set<std::string> class_set;
  for (size_t i = 0; i < n; ++i) {
    const auto& r = records[i];
    addrs.push_back(node_id_from_address(r.src_ip, r.src_port));
    addrs.push_back(node_id_from_address(r.dst_ip, r.dst_port));
    if (i < es.train_end) degrees.add_pair(r.src_ip, r.dst_ip);
    if (r.binary_label != 0) class_set.insert(r.attack_class);
  }
  es.registry = NodeRegistry::build(addrs.begin(), addrs.end());
  es.stats = FeatureStats::fit(records, es.train_end);
  es.attack_classes.assign(class_set.begin(), class_set.end());

  int threshold = layer_cfg.degree_threshold > 0
                      ? layer_cfg.degree_threshold
                      : degrees.percentile_threshold(layer_cfg.degree_percentile);
  es.node_layer.resize(es.registry.size());
  for (NodeId v = 0; v < es.registry.size(); ++v) {
    std::string ip = ip_of_address(es.registry.address_of(v));
    es.node_layer[v] = assign_layer(ip, degrees, layer_cfg, threshold);
  }

  es.events.reserve(n);
  es.split.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    const auto& r = records[i];
    EdgeEvent e;
    e.src = es.registry.id_of(node_id_from_address(r.src_ip, r.src_port));
    e.dst = es.registry.id_of(node_id_from_address(r.dst_ip, r.dst_port));
    e.src_layer = es.node_layer[e.src];
    e.dst_layer = es.node_layer[e.dst];
    e.t = r.timestamp_ms;
    e.dt = r.duration_ms;
    e.features_norm = normalize_features(r.features, es.stats);
    e.binary_label = r.binary_label;
    e.attack_class = r.attack_class;
    es.events.push_back(std::move(e));
    es.split.push_back(i < es.train_end ? Split::Train
                       : i < es.val_end ? Split::Val
                                        : Split::Test);
  }
  return es;
}

}  // namespace d3ids
