#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "d3ids/diffusion.hpp"
#include "d3ids/errors.hpp"
#include "d3ids/graph.hpp"
#include "d3ids/heads.hpp"
#include "d3ids/memory.hpp"
#include "d3ids/nn.hpp"
#include "d3ids/types.hpp"

namespace d3ids {

struct ModelConfig {
  MemoryConfig memory;
  DiffusionConfig diffusion;
  int head_hidden = 256;
  int num_attack_classes = 0;
  std::vector<double> class_weights;  // empty = uniform
  double alpha = 0.3;  // smooth-loss weight
  double beta = 0.7;   // representational-disentanglement weight
  bool cascade_heads = false;
  bool use_diffusion = true;        // off = identity transport
  bool diffusion_writeback = true;  // diffused reprs become node state
};

struct EventPrediction {
  double p_att = 0.0;
  Vec p_multi;
};

struct BatchStats {
  double total = 0.0;
  double l_int = 0.0;
  double l_smooth = 0.0;
  double l_dis = 0.0;
  size_t events = 0;
};

// The full engine over one ordered event stream: per-event message/memory/
// representation updates, per-batch representational-disentanglement loss,
// graph diffusion of the representations, prediction heads, and the exact
// reverse pass for all of it (gradients truncate at batch boundaries: state
// entering the batch is treated as data).
class Model {
 public:
  Model(const ModelConfig& cfg, int n_nodes, uint64_t seed)
      : cfg_(cfg),
        n_nodes_(n_nodes),
        memory_(cfg.memory),
        diffusion_(cfg.memory.embedding_dim, cfg.diffusion),
        heads_(HeadsConfig{2 * cfg.memory.embedding_dim +
                               cfg.memory.feature_dim,
                           cfg.head_hidden, cfg.num_attack_classes,
                           cfg.cascade_heads}) {
    if (cfg.num_attack_classes <= 0)
      throw ConfigError("model: num_attack_classes must be positive");
    class_weights_ = cfg.class_weights.empty()
                         ? std::vector<double>(cfg.num_attack_classes, 1.0)
                         : cfg.class_weights;
    if (static_cast<int>(class_weights_.size()) != cfg.num_attack_classes)
      throw ConfigError("model: class_weights size mismatch");
    std::mt19937_64 rng(seed);
    memory_.init(rng);
    diffusion_.init(rng);
    heads_.init(rng);
    reset_state();
  }

  void reset_state() {
    states_.assign(n_nodes_, NodeState{});
    for (auto& st : states_) {
      st.memory = Vec::Zero(cfg_.memory.memory_dim);
      st.repr = Vec::Zero(cfg_.memory.embedding_dim);
      st.prev_repr = Vec::Zero(cfg_.memory.embedding_dim);
    }
    graph_.clear();
    prev_batch_end_t_ = -1;
  }

  // Streaming state capture, so a batch can be re-run from a fixed boundary
  // (gradient verification holds the entry state constant).
  struct StateSnapshot {
    std::vector<NodeState> states;
    MultiLayerGraphState graph;
    int64_t prev_batch_end_t = -1;
  };

  StateSnapshot snapshot_state() const {
    return {states_, graph_, prev_batch_end_t_};
  }

  void restore_state(const StateSnapshot& s) {
    states_ = s.states;
    graph_ = s.graph;
    prev_batch_end_t_ = s.prev_batch_end_t;
  }

  std::vector<ParamTensor*> params() {
    std::vector<ParamTensor*> out;
    memory_.collect(out);
    diffusion_.collect(out);
    heads_.collect(out);
    return out;
  }

  // `edge_repr[begin+k]` is the edge representation fed to messages and
  // heads for events[begin+k] (disentangled products, or raw features under
  // the no-SD ablation). With `train` set, parameter gradients are
  // accumulated.
  BatchStats process_batch(const std::vector<EdgeEvent>& events, size_t begin,
                           size_t end, const std::vector<Vec>& edge_repr,
                           bool train,
                           std::vector<EventPrediction>* preds_out = nullptr,
                           const std::vector<int>* class_idx = nullptr) {
    BatchStats stats;
    if (begin >= end) return stats;
    const size_t count = end - begin;
    if (edge_repr.size() < end || (class_idx && class_idx->size() < end))
      throw StateError("batch: event/feature count mismatch");

    const int d_emb = cfg_.memory.embedding_dim;

    // ---- per-node batch aggregation ----
    // Messages are generated per event from the batch-entry memories; each
    // touched node keeps its latest message and receives one memory and one
    // representation update at that message's time. Gradients truncate at
    // the batch boundary (entry state is data).
    struct NodeUpd {
      Vec z;        // latest message input
      int64_t t = 0;
      Vec c, m_new;
      GruCache gru;
    };
    std::vector<NodeId> touched;
    std::vector<NodeUpd> upd;
    std::unordered_map<NodeId, int> touched_rank;
    auto touch = [&](NodeId v) {
      auto ins = touched_rank.emplace(v, static_cast<int>(touched.size()));
      if (ins.second) {
        states_[v].prev_repr = states_[v].repr;
        touched.push_back(v);
        upd.emplace_back();
      }
      return ins.first->second;
    };

    for (size_t k = 0; k < count; ++k) {
      const EdgeEvent& e = events[begin + k];
      if (e.src < 0 || e.src >= n_nodes_ || e.dst < 0 || e.dst >= n_nodes_)
        throw StateError("batch: node id out of range");
      int ri = touch(e.src);
      const Vec& h = edge_repr[begin + k];
      upd[ri].z = memory_.message_input(
          states_[e.src].memory, states_[e.dst].memory, e.t,
          states_[e.src].last_update_t, e.dt, e.src_layer, e.dst_layer, h);
      upd[ri].t = e.t;
      if (e.dst != e.src) {
        int rj = touch(e.dst);
        upd[rj].z = memory_.message_input(
            states_[e.dst].memory, states_[e.src].memory, e.t,
            states_[e.dst].last_update_t, e.dt, e.src_layer, e.dst_layer, h);
        upd[rj].t = e.t;
      }
      graph_.observe(e, cfg_.diffusion.edge_weight);
    }

    for (size_t r = 0; r < touched.size(); ++r) {
      NodeUpd& u = upd[r];
      u.c = memory_.compute_message(u.z);
      u.m_new = memory_.update_memory(states_[touched[r]], u.c, u.t,
                                      train ? &u.gru : nullptr);
      memory_.update_representation(states_[touched[r]]);
    }

    const int64_t t_end = events[end - 1].t;
    const int64_t t_begin =
        prev_batch_end_t_ >= 0 ? prev_batch_end_t_ : events[begin].t;
    prev_batch_end_t_ = t_end;
    graph_.prune(t_end, cfg_.diffusion.edge_horizon_s);

    // ---- representational-disentanglement loss (pre-diffusion snapshot) --
    const int n_touch = static_cast<int>(touched.size());
    Mat X_mid(n_touch, d_emb), X_prev(n_touch, d_emb);
    for (int r = 0; r < n_touch; ++r) {
      X_mid.row(r) = states_[touched[r]].repr;
      X_prev.row(r) = states_[touched[r]].prev_repr;
    }
    stats.l_dis = repr_disentangle_loss(X_mid, X_prev);

    // ---- diffusion over the active graph ----
    // Only nodes in the active-edge support or the touched set can move;
    // isolated nodes are exact fixed points, so the compact system is exact.
    std::vector<ActiveEdge> edges;
    std::vector<NodeId> active_nodes;
    std::unordered_map<NodeId, int> active_rank;
    auto admit = [&](NodeId v) {
      if (active_rank.emplace(v, static_cast<int>(active_nodes.size())).second)
        active_nodes.push_back(v);
    };
    const bool diffuse = cfg_.use_diffusion && t_end > t_begin &&
                         graph_.edge_count() > 0;
    SpMat M;
    CoeffCache coeff;
    DiffusionTrace trace;
    Mat X_active, X_post;
    const ButcherTableau& tab =
        cfg_.diffusion.integrator == DiffusionConfig::Integrator::Rk4
            ? rk4_tableau()
            : dormand_prince_tableau();
    if (diffuse) {
      edges = graph_.active_edges();
      for (const auto& ed : edges) {
        admit(ed.src);
        admit(ed.dst);
      }
      for (NodeId v : touched) admit(v);
      std::vector<ActiveEdge> remapped = edges;
      for (auto& ed : remapped) {
        ed.src = active_rank.at(ed.src);
        ed.dst = active_rank.at(ed.dst);
      }
      M = build_incidence(remapped, static_cast<int>(active_nodes.size()));
      coeff = diffusion_.coefficients(edges, t_end);
      X_active.resize(active_nodes.size(), d_emb);
      for (size_t r = 0; r < active_nodes.size(); ++r)
        X_active.row(r) = states_[active_nodes[r]].repr;

      auto rhs = [&](const Mat& X) {
        return diffusion_rhs(M, coeff.s, X, diffusion_.K_values());
      };
      if (cfg_.diffusion.integrator == DiffusionConfig::Integrator::Rk4) {
        X_post = rk_fixed(tab, rhs, X_active, 1.0, cfg_.diffusion.rk4_steps,
                          train ? &trace : nullptr);
      } else {
        X_post = rk_adaptive(tab, rhs, X_active, 1.0, cfg_.diffusion.rk45_atol,
                             cfg_.diffusion.rk45_rtol,
                             train ? &trace : nullptr);
      }
      if (!X_post.allFinite())
        throw SolverError("diffusion produced non-finite representations");
      if (cfg_.diffusion_writeback) {
        for (size_t r = 0; r < active_nodes.size(); ++r)
          states_[active_nodes[r]].repr = X_post.row(r);
      }
    } else {
      for (NodeId v : touched) admit(v);
      X_post.resize(active_nodes.size(), d_emb);
      for (size_t r = 0; r < active_nodes.size(); ++r)
        X_post.row(r) = states_[active_nodes[r]].repr;
    }

    auto node_repr = [&](NodeId v) -> Vec {
      auto it = active_rank.find(v);
      if (it != active_rank.end()) return X_post.row(it->second);
      return states_[v].repr;
    };

    // ---- heads + intrusion loss ----
    std::vector<HeadsCache> head_cache(train ? count : 1);
    if (preds_out) preds_out->reserve(preds_out->size() + count);
    for (size_t k = 0; k < count; ++k) {
      const EdgeEvent& e = events[begin + k];
      Vec in(2 * d_emb + cfg_.memory.feature_dim);
      in.head(d_emb) = node_repr(e.src);
      in.segment(d_emb, d_emb) = node_repr(e.dst);
      in.tail(cfg_.memory.feature_dim) = edge_repr[begin + k];
      HeadsCache* hc = train ? &head_cache[k] : &head_cache[0];
      heads_.forward(in, hc);
      int cls = class_idx ? (*class_idx)[begin + k] : -1;
      double cw = cls >= 0 ? class_weights_[cls] : 0.0;
      stats.l_int +=
          PredictionHeads::loss_term(hc->p_bin, e.binary_label, hc->p_multi,
                                     cls, cw);
      if (preds_out)
        preds_out->push_back(EventPrediction{hc->p_bin(1), hc->p_multi});
    }

    // ---- smooth loss over touched nodes ----
    for (NodeId v : touched)
      stats.l_smooth += smooth_norm(node_repr(v) - states_[v].prev_repr);

    stats.total =
        stats.l_int + cfg_.alpha * stats.l_smooth + cfg_.beta * stats.l_dis;
    stats.events = count;
    if (!train) return stats;

    // ======================= reverse pass =======================
    Mat dX_post = Mat::Zero(X_post.rows(), d_emb);
    for (size_t k = 0; k < count; ++k) {
      const EdgeEvent& e = events[begin + k];
      Vec d_in = Vec::Zero(2 * d_emb + cfg_.memory.feature_dim);
      int cls = class_idx ? (*class_idx)[begin + k] : -1;
      double cw = cls >= 0 ? class_weights_[cls] : 0.0;
      heads_.backward(head_cache[k], e.binary_label, cls, cw, &d_in);
      dX_post.row(active_rank.at(e.src)) += d_in.head(d_emb);
      dX_post.row(active_rank.at(e.dst)) += d_in.segment(d_emb, d_emb);
    }
    for (NodeId v : touched) {
      int r = active_rank.at(v);
      dX_post.row(r) += cfg_.alpha * smooth_norm_grad(X_post.row(r).transpose() -
                                                      states_[v].prev_repr);
    }

    Mat dX_mid;
    if (diffuse) {
      Mat dK = Mat::Zero(d_emb, d_emb);
      Vec ds = Vec::Zero(coeff.s.size());
      dX_mid = diffusion_integrate_backward(tab, trace, M, coeff.s,
                                            diffusion_.K_values(), dX_post,
                                            dK, ds);
      diffusion_.K().grads += dK;
      diffusion_.coefficients_backward(coeff, ds);
    } else {
      dX_mid = dX_post;
    }

    if (cfg_.beta != 0.0 && n_touch > 0) {
      Mat dDis = repr_disentangle_grad(X_mid, X_prev);
      for (int r = 0; r < n_touch; ++r)
        dX_mid.row(active_rank.at(touched[r])) += cfg_.beta * dDis.row(r);
    }

    // Per-node reverse: one projection/memory/message step each; gradients
    // into batch-entry memories are dropped (truncation at the boundary).
    Mat& P = memory_.proj().W.values;
    Mat& dP = memory_.proj().W.grads;
    for (size_t r = 0; r < touched.size(); ++r) {
      NodeUpd& u = upd[r];
      Vec dx = dX_mid.row(active_rank.at(touched[r])).transpose();
      Vec dm = P.transpose() * dx;
      dP += dx * u.m_new.transpose();
      Vec dc = Vec::Zero(u.c.size());
      memory_.memory_backward(u.gru, dm, &dc);
      memory_.message_backward(u.z, u.c, dc);
    }
    return stats;
  }

  MemoryModule& memory() { return memory_; }
  DiffusionModule& diffusion() { return diffusion_; }
  PredictionHeads& heads() { return heads_; }
  MultiLayerGraphState& graph() { return graph_; }
  const std::vector<NodeState>& states() const { return states_; }
  const ModelConfig& config() const { return cfg_; }
  int node_count() const { return n_nodes_; }

 private:
  ModelConfig cfg_;
  int n_nodes_;
  std::vector<NodeState> states_;
  MultiLayerGraphState graph_;
  MemoryModule memory_;
  DiffusionModule diffusion_;
  PredictionHeads heads_;
  std::vector<double> class_weights_;
  int64_t prev_batch_end_t_ = -1;
};

}  // namespace d3ids
