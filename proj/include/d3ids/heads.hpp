#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "d3ids/errors.hpp"
#include "d3ids/nn.hpp"

namespace d3ids {

struct HeadsConfig {
  int input_dim = 0;   // [x_src || x_dst || h_edge]
  int hidden = 256;
  int num_classes = 0; // attack classes; benign is handled by the binary head
  bool cascade = false;  // multi head additionally sees the attack probability
};

struct HeadsCache {
  Vec in;
  Vec bh_pre, bh;
  Vec multi_in;
  Vec mh_pre, mh;
  Vec p_bin;    // [p_nor, p_att]
  Vec p_multi;  // K
};

// Two-step classifier: a benign/attack gate plus an attack-type head, both
// two-layer MLPs over the same edge representation.
class PredictionHeads {
 public:
  explicit PredictionHeads(const HeadsConfig& cfg)
      : cfg_(cfg),
        bin1_("head.bin1", cfg.input_dim, cfg.hidden),
        bin2_("head.bin2", cfg.hidden, 2),
        multi1_("head.multi1", cfg.input_dim + (cfg.cascade ? 1 : 0),
                cfg.hidden),
        multi2_("head.multi2", cfg.hidden, std::max(1, cfg.num_classes)) {
    if (cfg.input_dim <= 0) throw ConfigError("heads: input_dim must be set");
  }

  void init(std::mt19937_64& rng) {
    bin1_.init(rng);
    bin2_.init(rng);
    multi1_.init(rng);
    multi2_.init(rng);
  }

  void forward(const Vec& in, HeadsCache* c) const {
    c->in = in;
    c->bh_pre = bin1_.forward(in);
    c->bh = relu(c->bh_pre);
    c->p_bin = softmax(bin2_.forward(c->bh));
    if (cfg_.cascade) {
      c->multi_in.resize(in.size() + 1);
      c->multi_in.head(in.size()) = in;
      // Cascade feeds the gate's verdict forward as a detached feature.
      c->multi_in(in.size()) = c->p_bin(1);
    } else {
      c->multi_in = in;
    }
    c->mh_pre = multi1_.forward(c->multi_in);
    c->mh = relu(c->mh_pre);
    c->p_multi = softmax(multi2_.forward(c->mh));
  }

  // Cross-entropy on both heads; the type head only fires on attack rows
  // (class_idx >= 0) and is scaled by that class's weight.
  static double loss_term(const Vec& p_bin, int y_bin, const Vec& p_multi,
                          int class_idx, double class_weight) {
    auto clipped_log = [](double p) {
      return std::log(std::max(p, 1e-12));
    };
    double loss = -clipped_log(p_bin(y_bin));
    if (class_idx >= 0) loss -= class_weight * clipped_log(p_multi(class_idx));
    return loss;
  }

  // Accumulates parameter grads and adds dL/d(in) into *d_in.
  void backward(const HeadsCache& c, int y_bin, int class_idx,
                double class_weight, Vec* d_in) {
    Vec dlog_bin = c.p_bin;
    dlog_bin(y_bin) -= 1.0;
    Vec dbh = bin2_.backward(c.bh, dlog_bin);
    Vec dbh_pre = (c.bh_pre.array() > 0.0).select(dbh, 0.0);
    *d_in += bin1_.backward(c.in, dbh_pre);

    if (class_idx >= 0) {
      Vec dlog_multi = class_weight * c.p_multi;
      dlog_multi(class_idx) -= class_weight;
      Vec dmh = multi2_.backward(c.mh, dlog_multi);
      Vec dmh_pre = (c.mh_pre.array() > 0.0).select(dmh, 0.0);
      Vec dmulti_in = multi1_.backward(c.multi_in, dmh_pre);
      d_in->noalias() += dmulti_in.head(d_in->size());
      // cascade feature is detached: its slot of dmulti_in is dropped
    }
  }

  const HeadsConfig& config() const { return cfg_; }

  void collect(std::vector<ParamTensor*>& out) {
    bin1_.collect(out);
    bin2_.collect(out);
    multi1_.collect(out);
    multi2_.collect(out);
  }

  Dense bin1_, bin2_, multi1_, multi2_;

 private:
  HeadsConfig cfg_;
};

// Smooth-loss term over one node's movement across a batch; safe at zero.
inline double smooth_norm(const Vec& delta) { return delta.norm(); }

inline Vec smooth_norm_grad(const Vec& delta) {
  double n = delta.norm();
  if (n < 1e-12) return Vec::Zero(delta.size());
  return delta / n;
}

}  // namespace d3ids
