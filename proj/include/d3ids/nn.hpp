#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "d3ids/errors.hpp"

namespace d3ids {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct ParamTensor {
  Mat values;
  Mat grads;
  std::string name;

  ParamTensor() = default;
  ParamTensor(std::string n, int rows, int cols)
      : values(Mat::Zero(rows, cols)),
        grads(Mat::Zero(rows, cols)),
        name(std::move(n)) {}

  void zero_grad() { grads.setZero(); }
  bool grads_finite() const { return grads.allFinite(); }
};

inline double uniform01(std::mt19937_64& rng) {
  return (rng() >> 11) * 0x1.0p-53;
}

// Kernels: uniform +-1/sqrt(fan_in). Biases stay zero.
inline void init_uniform(ParamTensor& p, int fan_in, std::mt19937_64& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(std::max(1, fan_in)));
  double* d = p.values.data();
  for (Eigen::Index i = 0; i < p.values.size(); ++i)
    d[i] = (2.0 * uniform01(rng) - 1.0) * bound;
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

inline Vec relu(const Vec& x) { return x.cwiseMax(0.0); }
inline Mat relu(const Mat& x) { return x.cwiseMax(0.0); }

inline Vec softmax(const Vec& logits) {
  Vec e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

// dL/dlogits for y = softmax(logits) given dL/dy.
inline Vec softmax_backward(const Vec& y, const Vec& dy) {
  double dot = y.dot(dy);
  return y.array() * (dy.array() - dot);
}

// ---------------------------------------------------------------------------
// Dense layer y = W x + b
// ---------------------------------------------------------------------------

class Dense {
 public:
  Dense(const std::string& name, int in, int out)
      : W(name + ".W", out, in), b(name + ".b", out, 1) {}

  void init(std::mt19937_64& rng) {
    init_uniform(W, static_cast<int>(W.values.cols()), rng);
  }

  Vec forward(const Vec& x) const { return W.values * x + b.values.col(0); }

  // Column-wise batch: every column of X is one instance.
  Mat forward(const Mat& X) const {
    return (W.values * X).colwise() + b.values.col(0);
  }

  Vec backward(const Vec& x, const Vec& dy) {
    W.grads += dy * x.transpose();
    b.grads.col(0) += dy;
    return W.values.transpose() * dy;
  }

  Mat backward(const Mat& X, const Mat& dY) {
    W.grads += dY * X.transpose();
    b.grads.col(0) += dY.rowwise().sum();
    return W.values.transpose() * dY;
  }

  void collect(std::vector<ParamTensor*>& out) {
    out.push_back(&W);
    out.push_back(&b);
  }

  int in_dim() const { return static_cast<int>(W.values.cols()); }
  int out_dim() const { return static_cast<int>(W.values.rows()); }

  ParamTensor W, b;
};

// Bias-free linear map y = W x. Used where the map must fix the origin.
class Linear {
 public:
  Linear(const std::string& name, int in, int out) : W(name + ".W", out, in) {}

  void init(std::mt19937_64& rng) {
    init_uniform(W, static_cast<int>(W.values.cols()), rng);
  }

  Vec forward(const Vec& x) const { return W.values * x; }

  Vec backward(const Vec& x, const Vec& dy) {
    W.grads += dy * x.transpose();
    return W.values.transpose() * dy;
  }

  void collect(std::vector<ParamTensor*>& out) { out.push_back(&W); }

  ParamTensor W;
};

// ---------------------------------------------------------------------------
// Vanilla recurrent cell: c = tanh(W z + b) over the concatenated input z.
// ---------------------------------------------------------------------------

class RnnCell {
 public:
  RnnCell(const std::string& name, int in, int out) : lin(name, in, out) {}

  void init(std::mt19937_64& rng) { lin.init(rng); }

  Vec forward(const Vec& z) const { return lin.forward(z).array().tanh(); }

  // `c` is the cached forward output for the same `z`.
  Vec backward(const Vec& z, const Vec& c, const Vec& dc) {
    Vec da = dc.array() * (1.0 - c.array().square());
    return lin.backward(z, da);
  }

  void collect(std::vector<ParamTensor*>& out) { lin.collect(out); }

  Dense lin;
};

// ---------------------------------------------------------------------------
// GRU cell. Convention: h' = z (.) n + (1 - z) (.) h, so a zero update gate
// carries the old state through unchanged.
// ---------------------------------------------------------------------------

struct GruCache {
  Vec x, h, r, z, n;
};

class GruCell {
 public:
  GruCell(const std::string& name, int in, int hidden)
      : Wr(name + ".Wr", hidden, in), Ur(name + ".Ur", hidden, hidden),
        br(name + ".br", hidden, 1), Wz(name + ".Wz", hidden, in),
        Uz(name + ".Uz", hidden, hidden), bz(name + ".bz", hidden, 1),
        Wn(name + ".Wn", hidden, in), Un(name + ".Un", hidden, hidden),
        bn(name + ".bn", hidden, 1) {}

  void init(std::mt19937_64& rng) {
    int in = static_cast<int>(Wr.values.cols());
    int hid = static_cast<int>(Ur.values.cols());
    init_uniform(Wr, in, rng);
    init_uniform(Ur, hid, rng);
    init_uniform(Wz, in, rng);
    init_uniform(Uz, hid, rng);
    init_uniform(Wn, in, rng);
    init_uniform(Un, hid, rng);
  }

  Vec forward(const Vec& x, const Vec& h, GruCache* cache = nullptr) const {
    Vec r = (Wr.values * x + Ur.values * h + br.values.col(0))
                .unaryExpr([](double v) { return sigmoid(v); });
    Vec z = (Wz.values * x + Uz.values * h + bz.values.col(0))
                .unaryExpr([](double v) { return sigmoid(v); });
    Vec n = (Wn.values * x + Un.values * (r.cwiseProduct(h)).eval() +
             bn.values.col(0))
                .array()
                .tanh();
    if (cache) {
      cache->x = x;
      cache->h = h;
      cache->r = r;
      cache->z = z;
      cache->n = n;
    }
    return z.cwiseProduct(n) + (Vec::Ones(h.size()) - z).cwiseProduct(h);
  }

  // Returns dL/dh_prev; accumulates parameter grads; adds dL/dx into *dx
  // when provided.
  Vec backward(const GruCache& c, const Vec& dh_new, Vec* dx = nullptr) {
    Vec dz = dh_new.cwiseProduct(c.n - c.h);
    Vec dn = dh_new.cwiseProduct(c.z);
    Vec dh = dh_new.cwiseProduct(Vec::Ones(c.h.size()) - c.z);

    Vec dan = dn.array() * (1.0 - c.n.array().square());
    Wn.grads += dan * c.x.transpose();
    Un.grads += dan * (c.r.cwiseProduct(c.h)).transpose();
    bn.grads.col(0) += dan;
    Vec drh = Un.values.transpose() * dan;
    Vec dr = drh.cwiseProduct(c.h);
    dh += drh.cwiseProduct(c.r);

    Vec dar = dr.array() * c.r.array() * (1.0 - c.r.array());
    Wr.grads += dar * c.x.transpose();
    Ur.grads += dar * c.h.transpose();
    br.grads.col(0) += dar;
    dh += Ur.values.transpose() * dar;

    Vec daz = dz.array() * c.z.array() * (1.0 - c.z.array());
    Wz.grads += daz * c.x.transpose();
    Uz.grads += daz * c.h.transpose();
    bz.grads.col(0) += daz;
    dh += Uz.values.transpose() * daz;

    if (dx) {
      *dx += Wn.values.transpose() * dan + Wr.values.transpose() * dar +
             Wz.values.transpose() * daz;
    }
    return dh;
  }

  void collect(std::vector<ParamTensor*>& out) {
    for (ParamTensor* p : {&Wr, &Ur, &br, &Wz, &Uz, &bz, &Wn, &Un, &bn})
      out.push_back(p);
  }

  ParamTensor Wr, Ur, br, Wz, Uz, bz, Wn, Un, bn;
};

// ---------------------------------------------------------------------------
// Sinusoidal time features: sin(tau * 10^-k), k = 0..dim-1, tau in seconds.
// ---------------------------------------------------------------------------

inline Vec time_encoding(double seconds, int dim = 8) {
  Vec out(dim);
  double w = 1.0;
  for (int k = 0; k < dim; ++k) {
    out(k) = std::sin(seconds * w);
    w *= 0.1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Adam with decoupled weight decay
// ---------------------------------------------------------------------------

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;
  double max_grad_norm = 5.0;  // global-norm clip; 0 disables
};

class Adam {
 public:
  Adam(std::vector<ParamTensor*> params, AdamConfig cfg = {})
      : params_(std::move(params)), cfg_(cfg) {
    for (ParamTensor* p : params_) {
      m_.emplace_back(Mat::Zero(p->values.rows(), p->values.cols()));
      v_.emplace_back(Mat::Zero(p->values.rows(), p->values.cols()));
    }
  }

  void step() {
    ++t_;
    for (ParamTensor* p : params_)
      if (!p->grads_finite())
        throw SolverError("adam: non-finite gradient in " + p->name);
    if (cfg_.max_grad_norm > 0.0) {
      double norm2 = 0.0;
      for (ParamTensor* p : params_) norm2 += p->grads.squaredNorm();
      double norm = std::sqrt(norm2);
      if (norm > cfg_.max_grad_norm) {
        double scale = cfg_.max_grad_norm / norm;
        for (ParamTensor* p : params_) p->grads *= scale;
      }
    }
    double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (size_t i = 0; i < params_.size(); ++i) {
      ParamTensor& p = *params_[i];
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * p.grads;
      v_[i] = cfg_.beta2 * v_[i] +
              (1.0 - cfg_.beta2) * p.grads.cwiseProduct(p.grads);
      Mat mhat = m_[i] / bc1;
      Mat vhat = v_[i] / bc2;
      p.values -= cfg_.lr *
                  (mhat.array() / (vhat.array().sqrt() + cfg_.eps)).matrix();
      if (cfg_.weight_decay > 0.0)
        p.values -= cfg_.lr * cfg_.weight_decay * p.values;
      p.zero_grad();
    }
  }

  void scale_lr(double factor) { cfg_.lr *= factor; }
  double lr() const { return cfg_.lr; }
  int64_t step_count() const { return t_; }

  const std::vector<Mat>& first_moments() const { return m_; }
  const std::vector<Mat>& second_moments() const { return v_; }
  std::vector<Mat>& first_moments() { return m_; }
  std::vector<Mat>& second_moments() { return v_; }
  void set_step_count(int64_t t) { t_ = t; }

 private:
  std::vector<ParamTensor*> params_;
  AdamConfig cfg_;
  std::vector<Mat> m_;
  std::vector<Mat> v_;
  int64_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Central-difference gradient verification
// ---------------------------------------------------------------------------

// `compute_grads` must populate fresh grads for the current parameter
// values (zeroing first); `compute_loss` must be a pure re-evaluation.
// Returns the max relative error over up to `max_coords` coordinates per
// tensor, spread evenly across each tensor.
inline double grad_check(const std::function<double()>& compute_loss,
                         const std::function<void()>& compute_grads,
                         const std::vector<ParamTensor*>& params,
                         double eps = 1e-5, int max_coords = 24) {
  for (ParamTensor* p : params) p->zero_grad();
  compute_grads();
  std::vector<Mat> analytic;
  analytic.reserve(params.size());
  for (ParamTensor* p : params) analytic.push_back(p->grads);

  double max_rel = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    ParamTensor& p = *params[pi];
    Eigen::Index total = p.values.size();
    Eigen::Index stride =
        std::max<Eigen::Index>(1, total / std::max(1, max_coords));
    for (Eigen::Index k = 0; k < total; k += stride) {
      double* v = p.values.data() + k;
      double orig = *v;
      *v = orig + eps;
      double up = compute_loss();
      *v = orig - eps;
      double down = compute_loss();
      *v = orig;
      double numeric = (up - down) / (2.0 * eps);
      double a = analytic[pi].data()[k];
      double rel =
          std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace d3ids
