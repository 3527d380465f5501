#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "d3ids/errors.hpp"
#include "d3ids/nn.hpp"
#include "d3ids/types.hpp"

namespace d3ids {

struct MemoryConfig {
  int memory_dim = 150;
  int message_dim = 100;
  int embedding_dim = 100;
  int time_encoding_dim = 8;
  int feature_dim = 0;  // set from the dataset
};

// Per-node streaming state. Memory and representation start at zero;
// prev_repr holds the representation before the current batch's updates.
struct NodeState {
  Vec memory;
  Vec repr;
  Vec prev_repr;
  int64_t last_update_t = 0;
  bool touched_ever = false;
};

// Message generator + memory updater + representation projection.
//
// The message input concatenates, in order: self memory, peer memory, time
// features of the elapsed time since the node's last update, the flow
// duration in seconds, both layer marks, and the disentangled edge features.
class MemoryModule {
 public:
  explicit MemoryModule(const MemoryConfig& cfg)
      : cfg_(cfg),
        msg_("msg",
             2 * cfg.memory_dim + cfg.time_encoding_dim + 3 + cfg.feature_dim,
             cfg.message_dim),
        mem_("mem", cfg.message_dim, cfg.memory_dim),
        proj_("proj", cfg.memory_dim, cfg.embedding_dim) {
    if (cfg.feature_dim <= 0)
      throw ConfigError("memory module: feature_dim must be set");
  }

  void init(std::mt19937_64& rng) {
    msg_.init(rng);
    mem_.init(rng);
    proj_.init(rng);
    // The representation is a running sum of projected memories, so the
    // projection's initial scale multiplies straight into the early-stream
    // representation magnitude. Start it small; training sets the scale.
    proj_.W.values *= 0.1;
  }

  int message_input_dim() const { return msg_.lin.in_dim(); }

  Vec message_input(const Vec& self_memory, const Vec& peer_memory,
                    int64_t t, int64_t self_last_t, int64_t dt,
                    int src_layer, int dst_layer, const Vec& h) const {
    if (static_cast<int>(h.size()) != cfg_.feature_dim)
      throw StateError("message: edge feature dim " +
                       std::to_string(h.size()) + " != configured " +
                       std::to_string(cfg_.feature_dim));
    Vec z(message_input_dim());
    int off = 0;
    z.segment(off, cfg_.memory_dim) = self_memory;
    off += cfg_.memory_dim;
    z.segment(off, cfg_.memory_dim) = peer_memory;
    off += cfg_.memory_dim;
    double elapsed_s = static_cast<double>(t - self_last_t) / 1000.0;
    z.segment(off, cfg_.time_encoding_dim) =
        time_encoding(elapsed_s, cfg_.time_encoding_dim);
    off += cfg_.time_encoding_dim;
    z(off++) = static_cast<double>(dt) / 1000.0;
    z(off++) = static_cast<double>(src_layer);
    z(off++) = static_cast<double>(dst_layer);
    z.segment(off, cfg_.feature_dim) = h;
    return z;
  }

  Vec compute_message(const Vec& z) const { return msg_.forward(z); }

  Vec message_backward(const Vec& z, const Vec& c, const Vec& dc) {
    return msg_.backward(z, c, dc);
  }

  Vec update_memory(NodeState& st, const Vec& c, int64_t t,
                    GruCache* cache = nullptr) const {
    if (t < st.last_update_t)
      throw StateError("memory update: event time " + std::to_string(t) +
                       " precedes node's last update " +
                       std::to_string(st.last_update_t));
    Vec m = mem_.forward(c, st.memory, cache);
    st.memory = m;
    st.last_update_t = t;
    st.touched_ever = true;
    return m;
  }

  Vec memory_backward(const GruCache& cache, const Vec& dm, Vec* dc) {
    return mem_.backward(cache, dm, dc);
  }

  // x(t) = x(t-) + P m(t)
  void update_representation(NodeState& st) const {
    st.repr += proj_.W.values * st.memory;
  }

  const Mat& projection() const { return proj_.W.values; }
  Linear& proj() { return proj_; }
  GruCell& mem_cell() { return mem_; }
  RnnCell& msg_cell() { return msg_; }
  const MemoryConfig& config() const { return cfg_; }

  void collect(std::vector<ParamTensor*>& out) {
    msg_.collect(out);
    mem_.collect(out);
    proj_.collect(out);
  }

 private:
  MemoryConfig cfg_;
  RnnCell msg_;
  GruCell mem_;
  Linear proj_;
};

// ---------------------------------------------------------------------------
// Representational-disentanglement loss: 0.5 || X X_prev^T - I ||_F^2
// over the batch's touched nodes (rows).
// ---------------------------------------------------------------------------

inline double repr_disentangle_loss(const Mat& X, const Mat& X_prev) {
  if (X.rows() == 0) return 0.0;
  Mat G = X * X_prev.transpose();
  G.diagonal().array() -= 1.0;
  return 0.5 * G.squaredNorm();
}

// dL/dX with X_prev treated as the detached pre-batch snapshot.
inline Mat repr_disentangle_grad(const Mat& X, const Mat& X_prev) {
  if (X.rows() == 0) return Mat::Zero(0, X.cols());
  Mat G = X * X_prev.transpose();
  G.diagonal().array() -= 1.0;
  return G * X_prev;
}

}  // namespace d3ids
