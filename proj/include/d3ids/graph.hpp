#pragma once

#include <Eigen/Sparse>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "d3ids/errors.hpp"
#include "d3ids/types.hpp"

namespace d3ids {

using SpMat = Eigen::SparseMatrix<double>;

struct ActiveEdge {
  NodeId src = -1;  // orientation as first observed
  NodeId dst = -1;
  double weight = 1.0;
  int src_layer = 0;
  int dst_layer = 0;
  int64_t last_t = 0;
};

// Evolving multi-layer graph: one undirected edge per node pair, refreshed
// on recurrence and dropped once it falls outside the event-time horizon.
// Layer identity lives on the endpoints (it feeds the per-edge coefficient,
// not separate per-block weights).
class MultiLayerGraphState {
 public:
  // Adds or refreshes the edge for this event. Self-loops are skipped: the
  // incidence discretization of D - A leaves them undefined.
  void observe(const EdgeEvent& e, double weight = 1.0) {
    if (e.src == e.dst) return;
    auto key = canonical(e.src, e.dst);
    auto it = edges_.find(key);
    if (it == edges_.end()) {
      ActiveEdge edge;
      edge.src = e.src;
      edge.dst = e.dst;
      edge.weight = weight;
      edge.src_layer = e.src_layer;
      edge.dst_layer = e.dst_layer;
      edge.last_t = e.t;
      edges_.emplace(key, edge);
    } else {
      it->second.last_t = e.t;
    }
  }

  void prune(int64_t now_ms, double horizon_s) {
    int64_t horizon_ms = static_cast<int64_t>(horizon_s * 1000.0);
    for (auto it = edges_.begin(); it != edges_.end();) {
      if (now_ms - it->second.last_t > horizon_ms)
        it = edges_.erase(it);
      else
        ++it;
    }
  }

  std::vector<ActiveEdge> active_edges() const {
    std::vector<ActiveEdge> out;
    out.reserve(edges_.size());
    for (const auto& [key, e] : edges_) out.push_back(e);
    return out;
  }

  size_t edge_count() const { return edges_.size(); }
  void clear() { edges_.clear(); }

 private:
  static std::pair<NodeId, NodeId> canonical(NodeId a, NodeId b) {
    return a < b ? std::make_pair(a, b) : std::make_pair(b, a);
  }

  std::map<std::pair<NodeId, NodeId>, ActiveEdge> edges_;
};

// Signed edge-node incidence: row e has +sqrt(w) at the source column and
// -sqrt(w) at the destination, so M^T M = D - A exactly.
inline SpMat build_incidence(const std::vector<ActiveEdge>& edges,
                             int n_nodes) {
  SpMat M(static_cast<int>(edges.size()), n_nodes);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(2 * edges.size());
  for (size_t e = 0; e < edges.size(); ++e) {
    const ActiveEdge& edge = edges[e];
    if (edge.src == edge.dst)
      throw DataError("incidence: self-loop on node " +
                      std::to_string(edge.src));
    if (edge.src < 0 || edge.dst < 0 || edge.src >= n_nodes ||
        edge.dst >= n_nodes)
      throw DataError("incidence: edge endpoint out of range");
    if (edge.weight <= 0.0)
      throw DataError("incidence: non-positive edge weight");
    double rw = std::sqrt(edge.weight);
    trip.emplace_back(static_cast<int>(e), edge.src, rw);
    trip.emplace_back(static_cast<int>(e), edge.dst, -rw);
  }
  M.setFromTriplets(trip.begin(), trip.end());
  return M;
}

}  // namespace d3ids
