#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "d3ids/errors.hpp"
#include "d3ids/graph.hpp"
#include "d3ids/nn.hpp"

namespace d3ids {

// ---------------------------------------------------------------------------
// PM nonlinearity g(u) = u * exp(-|u|); flux magnitude peaks at |u| = 1
// with value 1/e, so large edge-space gradients propagate less.
// ---------------------------------------------------------------------------

inline double pm_flux(double u) { return u * std::exp(-std::abs(u)); }

inline double pm_flux_deriv(double u) {
  double a = std::abs(u);
  return std::exp(-a) * (1.0 - a);
}

// Antiderivative of pm_flux for u >= 0, extended evenly: the Lyapunov
// potential of the diffusion flow when K = I, S = I.
inline double pm_potential(double u) {
  double a = std::abs(u);
  return 1.0 - std::exp(-a) * (1.0 + a);
}

inline double pm_energy(const SpMat& M, const Mat& X) {
  Mat U = M * X;
  return U.unaryExpr([](double u) { return pm_potential(u); }).sum();
}

inline double softplus(double x) {
  return x > 30.0 ? x : std::log1p(std::exp(x));
}

// ---------------------------------------------------------------------------
// Diffusion right-hand side
//
//   R(X) = -M^T [ S (g(U) ) ] K,   U = M X K^T,
//
// with S a per-edge (row) scale. Rows of isolated nodes stay exactly zero.
// ---------------------------------------------------------------------------

inline Mat diffusion_rhs(const SpMat& M, const Vec& s, const Mat& X,
                         const Mat& K) {
  Mat XKt = X * K.transpose();
  Mat U = M * XKt;
  if (!U.allFinite()) {
    for (Eigen::Index e = 0; e < U.rows(); ++e)
      if (!U.row(e).allFinite())
        throw SolverError("diffusion rhs: non-finite value at edge " +
                          std::to_string(e));
  }
  Mat G = U.unaryExpr([](double u) { return pm_flux(u); });
  G.array().colwise() *= s.array();
  return -((M.transpose() * G) * K);
}

// Reverse-mode pass: recomputes intermediates from the cached stage input
// (cheaper than storing every E x d intermediate), accumulates dK and ds,
// and returns dL/dX.
inline Mat diffusion_rhs_backward(const SpMat& M, const Vec& s, const Mat& X,
                                  const Mat& K, const Mat& dR, Mat& dK,
                                  Vec& ds) {
  Mat XKt = X * K.transpose();
  Mat U = M * XKt;
  Mat G = U.unaryExpr([](double u) { return pm_flux(u); });
  Mat Y = G;
  Y.array().colwise() *= s.array();

  // R = -(M^T Y) K
  Mat MtY = M.transpose() * Y;                 // V x d
  dK.noalias() -= MtY.transpose() * dR;        // transformation site 2
  Mat dY = -(M * (dR * K.transpose()));        // E x d
  ds += (G.array() * dY.array()).rowwise().sum().matrix();
  Mat dU = U.unaryExpr([](double u) { return pm_flux_deriv(u); })
               .cwiseProduct(dY);
  dU.array().colwise() *= s.array();
  Mat MtdU = M.transpose() * dU;               // V x d
  dK.noalias() += MtdU.transpose() * X;        // transformation site 1
  return MtdU * K;
}

// ---------------------------------------------------------------------------
// Runge-Kutta machinery (autonomous systems)
// ---------------------------------------------------------------------------

struct ButcherTableau {
  std::vector<std::vector<double>> a;
  std::vector<double> b;
  std::vector<double> b_err;  // b - b_hat; empty for fixed-step tableaus
  int order = 4;

  int stages() const { return static_cast<int>(b.size()); }
};

inline const ButcherTableau& rk4_tableau() {
  static const ButcherTableau tab{
      {{}, {0.5}, {0.0, 0.5}, {0.0, 0.0, 1.0}},
      {1.0 / 6, 1.0 / 3, 1.0 / 3, 1.0 / 6},
      {},
      4};
  return tab;
}

inline const ButcherTableau& dormand_prince_tableau() {
  static const ButcherTableau tab = [] {
    ButcherTableau t;
    t.a = {{},
           {1.0 / 5},
           {3.0 / 40, 9.0 / 40},
           {44.0 / 45, -56.0 / 15, 32.0 / 9},
           {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
           {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176,
            -5103.0 / 18656},
           {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784,
            11.0 / 84}};
    t.b = {35.0 / 384, 0.0,           500.0 / 1113, 125.0 / 192,
           -2187.0 / 6784, 11.0 / 84, 0.0};
    std::vector<double> b4 = {5179.0 / 57600,    0.0,          7571.0 / 16695,
                              393.0 / 640,       -92097.0 / 339200,
                              187.0 / 2100,      1.0 / 40};
    t.b_err.resize(t.b.size());
    for (size_t i = 0; i < t.b.size(); ++i) t.b_err[i] = t.b[i] - b4[i];
    t.order = 5;
    return t;
  }();
  return tab;
}

// Stage inputs of every accepted step, for discretize-then-differentiate.
struct DiffusionTrace {
  struct Step {
    double h = 0.0;
    std::vector<Mat> stage_inputs;
  };
  std::vector<Step> steps;
};

template <typename RhsFn>
Mat rk_step(const ButcherTableau& tab, RhsFn&& rhs, const Mat& X, double h,
            Mat* err_out = nullptr, DiffusionTrace::Step* step = nullptr) {
  const int s = tab.stages();
  std::vector<Mat> k(s);
  if (step) {
    step->h = h;
    step->stage_inputs.resize(s);
  }
  for (int i = 0; i < s; ++i) {
    Mat Xi = X;
    for (int j = 0; j < i; ++j)
      if (tab.a[i][j] != 0.0) Xi += (h * tab.a[i][j]) * k[j];
    if (step) step->stage_inputs[i] = Xi;
    k[i] = rhs(Xi);
  }
  Mat out = X;
  for (int i = 0; i < s; ++i)
    if (tab.b[i] != 0.0) out += (h * tab.b[i]) * k[i];
  if (err_out) {
    err_out->setZero(X.rows(), X.cols());
    for (int i = 0; i < s; ++i)
      if (tab.b_err[i] != 0.0) *err_out += (h * tab.b_err[i]) * k[i];
  }
  return out;
}

template <typename RhsFn>
Mat rk_fixed(const ButcherTableau& tab, RhsFn&& rhs, Mat X, double horizon,
             int n_steps, DiffusionTrace* trace = nullptr) {
  if (n_steps <= 0) throw ConfigError("integrator: step count must be > 0");
  double h = horizon / n_steps;
  for (int sstep = 0; sstep < n_steps; ++sstep) {
    DiffusionTrace::Step rec;
    X = rk_step(tab, rhs, X, h, nullptr, trace ? &rec : nullptr);
    if (trace) trace->steps.push_back(std::move(rec));
  }
  return X;
}

template <typename RhsFn>
Mat rk_adaptive(const ButcherTableau& tab, RhsFn&& rhs, Mat X, double horizon,
                double atol, double rtol, DiffusionTrace* trace = nullptr) {
  if (tab.b_err.empty())
    throw ConfigError("integrator: tableau has no embedded error estimate");
  double t = 0.0;
  double h = horizon / 10.0;
  Mat err;
  while (t < horizon) {
    if (h < 1e-14 * horizon)
      throw SolverError("integrator: adaptive step underflow, rejected h = " +
                        std::to_string(h));
    h = std::min(h, horizon - t);
    DiffusionTrace::Step rec;
    Mat X1 = rk_step(tab, rhs, X, h, &err, trace ? &rec : nullptr);
    double scale2 = 0.0;
    for (Eigen::Index i = 0; i < err.size(); ++i) {
      double tol = atol + rtol * std::max(std::abs(X.data()[i]),
                                          std::abs(X1.data()[i]));
      double r = err.data()[i] / tol;
      scale2 += r * r;
    }
    double enorm =
        std::sqrt(scale2 / static_cast<double>(std::max<Eigen::Index>(
                               1, err.size())));
    if (!std::isfinite(enorm)) enorm = 1e10;  // reject and shrink
    if (enorm <= 1.0) {
      t += h;
      X = std::move(X1);
      if (trace) trace->steps.push_back(std::move(rec));
    }
    double factor = enorm > 0.0
                        ? 0.9 * std::pow(enorm, -1.0 / tab.order)
                        : 5.0;
    h *= std::clamp(factor, 0.2, 5.0);
  }
  return X;
}

// Reverse sweep over the recorded stage inputs. Adds into dK / ds, returns
// dL/dX0.
inline Mat diffusion_integrate_backward(const ButcherTableau& tab,
                                        const DiffusionTrace& trace,
                                        const SpMat& M, const Vec& s,
                                        const Mat& K, const Mat& dX_final,
                                        Mat& dK, Vec& ds) {
  Mat a = dX_final;
  const int n_stages = tab.stages();
  for (auto it = trace.steps.rbegin(); it != trace.steps.rend(); ++it) {
    const auto& step = *it;
    std::vector<Mat> dXin(n_stages);
    for (int i = n_stages - 1; i >= 0; --i) {
      Mat g = (step.h * tab.b[i]) * a;
      for (int m = i + 1; m < n_stages; ++m)
        if (tab.a[m][i] != 0.0) g += (step.h * tab.a[m][i]) * dXin[m];
      dXin[i] = diffusion_rhs_backward(M, s, step.stage_inputs[i], K, g, dK,
                                       ds);
    }
    for (int i = 0; i < n_stages; ++i) a += dXin[i];
  }
  return a;
}

// ---------------------------------------------------------------------------
// Layer-temporal coefficient s_ij = softplus(W2 relu(W1 [l_i, l_j, phi(dt)]))
// ---------------------------------------------------------------------------

struct DiffusionConfig {
  enum class Integrator { Rk4, Rk45 };
  Integrator integrator = Integrator::Rk4;
  int rk4_steps = 4;
  double rk45_atol = 1e-6;
  double rk45_rtol = 1e-4;
  double edge_horizon_s = 1e4;
  int hidden_units = 64;
  int time_encoding_dim = 8;
  double edge_weight = 1.0;
};

struct CoeffCache {
  Mat inputs;  // (2 + time_dim) x E
  Mat A1;      // hidden x E, pre-activation
  Eigen::RowVectorXd P2;  // 1 x E, pre-softplus
  Vec s;       // E
};

class DiffusionModule {
 public:
  DiffusionModule(int embedding_dim, const DiffusionConfig& cfg)
      : cfg_(cfg),
        K_("diffusion.K", embedding_dim, embedding_dim),
        coeff1_("coeff.l1", 2 + cfg.time_encoding_dim, cfg.hidden_units),
        coeff2_("coeff.l2", cfg.hidden_units, 1) {}

  void init(std::mt19937_64& rng) {
    init_uniform(K_, static_cast<int>(K_.values.cols()), rng);
    coeff1_.init(rng);
    coeff2_.init(rng);
  }

  double layer_temporal_coeff(const ActiveEdge& e, int64_t t_now) const {
    if (t_now < e.last_t)
      throw StateError("coefficient: t_now precedes edge timestamp");
    Vec x = coeff_input(e, t_now);
    Vec h1 = relu(coeff1_.forward(x));
    return softplus(coeff2_.forward(h1)(0));
  }

  CoeffCache coefficients(const std::vector<ActiveEdge>& edges,
                          int64_t t_now) const {
    CoeffCache c;
    const int E = static_cast<int>(edges.size());
    c.inputs.resize(2 + cfg_.time_encoding_dim, E);
    for (int e = 0; e < E; ++e) c.inputs.col(e) = coeff_input(edges[e], t_now);
    c.A1 = coeff1_.forward(c.inputs);
    Mat H1 = relu(c.A1);
    c.P2 = coeff2_.forward(H1).row(0);
    c.s.resize(E);
    for (int e = 0; e < E; ++e) c.s(e) = softplus(c.P2(e));
    return c;
  }

  void coefficients_backward(const CoeffCache& c, const Vec& ds) {
    Mat dP2(1, c.P2.size());
    for (Eigen::Index e = 0; e < c.P2.size(); ++e)
      dP2(0, e) = ds(e) * sigmoid(c.P2(e));
    Mat H1 = relu(c.A1);
    Mat dH1 = coeff2_.backward(H1, dP2);
    Mat dA1 = (c.A1.array() > 0.0).select(dH1, 0.0);
    coeff1_.backward(c.inputs, dA1);
  }

  const DiffusionConfig& config() const { return cfg_; }
  ParamTensor& K() { return K_; }
  const Mat& K_values() const { return K_.values; }

  void collect(std::vector<ParamTensor*>& out) {
    out.push_back(&K_);
    coeff1_.collect(out);
    coeff2_.collect(out);
  }

 private:
  DiffusionConfig cfg_;
  ParamTensor K_;
  Dense coeff1_, coeff2_;

  Vec coeff_input(const ActiveEdge& e, int64_t t_now) const {
    Vec x(2 + cfg_.time_encoding_dim);
    x(0) = static_cast<double>(e.src_layer);
    x(1) = static_cast<double>(e.dst_layer);
    double elapsed_s = static_cast<double>(t_now - e.last_t) / 1000.0;
    x.segment(2, cfg_.time_encoding_dim) =
        time_encoding(elapsed_s, cfg_.time_encoding_dim);
    return x;
  }
};

}  // namespace d3ids
