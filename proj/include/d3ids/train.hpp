#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "d3ids/disentangle.hpp"
#include "d3ids/ingest.hpp"
#include "d3ids/metrics.hpp"
#include "d3ids/model.hpp"
#include "d3ids/nn.hpp"

namespace d3ids {

struct TrainConfig {
  AdamConfig adam;  // lr 0.01, weight decay 1e-5
  double lr_decay = 0.9;
  int lr_patience = 3;          // evaluations without F1 gain before decay
  int early_stop_patience = 5;  // epochs without F1 gain before stopping
  int epochs = 500;
  int batch_size = 200;
  double min_f1_improvement = 1e-4;
  uint64_t seed = 7;

  // ablation switches
  bool no_sd = false;
  bool no_rd = false;
  bool no_mlgrand = false;

  // unknown-attack protocol: instances of this class are discarded from the
  // train/val stream and detected in the test split
  std::string holdout_class;

  // statistical disentanglement
  double w_min = 0.0;
  double w_max = 1.0;
  double budget = 1.0;
  double lp_tolerance = 1e-9;
  double memo_quantum = 1e-4;
  ObjectiveVariant objective_variant = ObjectiveVariant::Eq5;
};

// The event stream after split filtering, with per-event edge
// representations (disentangled products, or raw features under no-SD)
// solved up front; they depend only on the features, never on parameters.
struct PreparedStream {
  std::vector<EdgeEvent> events;
  std::vector<Split> split;
  std::vector<Vec> edge_repr;
  std::vector<int> class_idx;  // -1 benign
  size_t n_train = 0, n_val = 0, n_test = 0;
  std::vector<std::string> attack_classes;
  int holdout_idx = -1;
  size_t budget_relaxations = 0;
};

inline PreparedStream prepare_stream(const EventStream& es,
                                     const TrainConfig& tc) {
  PreparedStream ps;
  ps.attack_classes = es.attack_classes;
  if (!tc.holdout_class.empty())
    ps.holdout_idx = es.class_index(tc.holdout_class);  // throws if unknown

  MemoizedDisentangler solver(tc.objective_variant, tc.lp_tolerance,
                              tc.memo_quantum, tc.w_min, tc.w_max, tc.budget);
  for (size_t i = 0; i < es.events.size(); ++i) {
    const EdgeEvent& e = es.events[i];
    int cls = e.binary_label ? es.class_index(e.attack_class) : -1;
    bool holdout = ps.holdout_idx >= 0 && cls == ps.holdout_idx;
    if (holdout && es.split[i] != Split::Test) continue;  // discarded

    Vec h;
    if (tc.no_sd) {
      h = Eigen::Map<const Vec>(e.features_norm.data(),
                                static_cast<Eigen::Index>(
                                    e.features_norm.size()));
    } else {
      DisentangleSolution sol = solver.solve(e.features_norm);
      if (sol.budget_relaxed) ++ps.budget_relaxations;
      h = Eigen::Map<const Vec>(sol.products.data(),
                                static_cast<Eigen::Index>(
                                    sol.products.size()));
    }
    ps.events.push_back(e);
    ps.split.push_back(es.split[i]);
    ps.edge_repr.push_back(std::move(h));
    ps.class_idx.push_back(cls);
    switch (es.split[i]) {
      case Split::Train: ++ps.n_train; break;
      case Split::Val: ++ps.n_val; break;
      case Split::Test: ++ps.n_test; break;
    }
  }
  if (ps.n_train == 0 || ps.n_val == 0 || ps.n_test == 0)
    throw ConfigError("prepared stream leaves an empty split");
  return ps;
}

// Inverse-frequency class weights over the training split, normalized to
// mean 1 so uniform frequencies give uniform weights.
inline std::vector<double> class_weights_from(const PreparedStream& ps) {
  const int k = static_cast<int>(ps.attack_classes.size());
  std::vector<long> counts(k, 0);
  for (size_t i = 0; i < ps.n_train; ++i)
    if (ps.class_idx[i] >= 0) counts[ps.class_idx[i]]++;
  std::vector<double> w(k, 1.0);
  double sum = 0.0;
  int present = 0;
  for (int c = 0; c < k; ++c) {
    if (counts[c] > 0) {
      w[c] = 1.0 / static_cast<double>(counts[c]);
      sum += w[c];
      ++present;
    } else {
      w[c] = 0.0;  // held-out or absent class never enters the type loss
    }
  }
  if (present > 0) {
    double mean = sum / present;
    for (double& v : w)
      if (v > 0.0) v /= mean;
  }
  return w;
}

struct EpochRecord {
  int epoch = 0;
  double train_total = 0.0, train_int = 0.0, train_smooth = 0.0,
         train_dis = 0.0;
  double val_f1 = 0.0, val_auc = 0.0;
  double lr = 0.0;
};

struct EvalResult {
  BinaryMetrics binary;
  MultiMetrics multi;       // combined space: Benign + attack classes
  double throughput_fpm = 0.0;
  // unknown protocol extras (holdout vs benign within the test split)
  double holdout_recall = -1.0;
  double holdout_f1 = -1.0;
  size_t holdout_events = 0;
};

struct TrainOutcome {
  std::vector<EpochRecord> history;
  int best_epoch = -1;
  double best_val_f1 = 0.0;
  double best_val_auc = 0.0;
  EvalResult test;
};

inline ModelConfig make_model_config(const EventStream& es,
                                     const PreparedStream& ps,
                                     const TrainConfig& tc, double alpha,
                                     double beta, const ModelConfig& base) {
  ModelConfig mc = base;
  mc.memory.feature_dim = es.stats.dim();
  mc.num_attack_classes = static_cast<int>(es.attack_classes.size());
  mc.class_weights = class_weights_from(ps);
  mc.alpha = alpha;
  mc.beta = tc.no_rd ? 0.0 : beta;
  mc.use_diffusion = !tc.no_mlgrand;
  return mc;
}

class Trainer {
 public:
  Trainer(const EventStream& es, const PreparedStream& ps, Model& model,
          const TrainConfig& tc)
      : es_(es), ps_(ps), model_(model), tc_(tc) {}

  TrainOutcome run() {
    TrainOutcome out;
    Adam adam(model_.params(), tc_.adam);
    std::vector<Mat> best;
    int stop_wait = 0, lr_wait = 0;

    for (int epoch = 0; epoch < tc_.epochs; ++epoch) {
      EpochRecord rec;
      rec.epoch = epoch;
      model_.reset_state();

      size_t pos = 0;
      while (pos < ps_.n_train) {
        size_t b_end = std::min(pos + tc_.batch_size, ps_.n_train);
        for (size_t i = pos; i < b_end; ++i)
          if (ps_.split[i] != Split::Train)
            throw StateError("temporal hygiene: non-train event in a "
                             "training batch");
        BatchStats st = model_.process_batch(ps_.events, pos, b_end,
                                             ps_.edge_repr, true, nullptr,
                                             &ps_.class_idx);
        adam.step();
        rec.train_total += st.total;
        rec.train_int += st.l_int;
        rec.train_smooth += st.l_smooth;
        rec.train_dis += st.l_dis;
        pos = b_end;
      }

      // Validation replays the train+val stream from scratch with the
      // epoch's frozen parameters: the selection metric then measures the
      // same dynamics a later evaluation replay will see. Test events are
      // never streamed here.
      BinaryMetrics vm = replay_validation();
      rec.val_f1 = vm.f1;
      rec.val_auc = vm.auc;
      rec.lr = adam.lr();
      out.history.push_back(rec);

      // F1 drives selection; AUC breaks exact-F1 ties so the run is not cut
      // off while the head is still calibrating around the 0.5 threshold.
      bool improved =
          vm.f1 > out.best_val_f1 + tc_.min_f1_improvement ||
          (vm.f1 >= out.best_val_f1 - tc_.min_f1_improvement &&
           vm.auc > out.best_val_auc + tc_.min_f1_improvement);
      if (improved || out.best_epoch < 0) {
        if (vm.f1 > out.best_val_f1) out.best_val_f1 = vm.f1;
        if (vm.auc > out.best_val_auc) out.best_val_auc = vm.auc;
        out.best_epoch = epoch;
        best.clear();
        for (ParamTensor* p : model_.params()) best.push_back(p->values);
        stop_wait = 0;
        lr_wait = 0;
      } else {
        ++stop_wait;
        ++lr_wait;
        if (lr_wait >= tc_.lr_patience) {
          adam.scale_lr(tc_.lr_decay);
          lr_wait = 0;
        }
        if (stop_wait >= tc_.early_stop_patience) break;
      }
    }

    if (!best.empty()) {
      auto params = model_.params();
      for (size_t i = 0; i < params.size(); ++i) params[i]->values = best[i];
    }
    out.test = evaluate(Split::Test);
    return out;
  }

  // Replays the stream from scratch on the current parameters and scores
  // the requested split. Memory updates are serial; no parameters change.
  EvalResult evaluate(Split which) {
    model_.reset_state();
    auto t0 = std::chrono::steady_clock::now();
    std::vector<EventPrediction> preds;
    preds.reserve(ps_.events.size());
    size_t pos = 0;
    while (pos < ps_.events.size()) {
      size_t b_end = std::min(pos + tc_.batch_size, ps_.events.size());
      b_end = clamp_to_split_boundary(pos, b_end);
      model_.process_batch(ps_.events, pos, b_end, ps_.edge_repr, false,
                           &preds, &ps_.class_idx);
      pos = b_end;
    }
    auto t1 = std::chrono::steady_clock::now();
    double minutes =
        std::chrono::duration<double>(t1 - t0).count() / 60.0;

    EvalResult res;
    res.throughput_fpm =
        minutes > 0 ? static_cast<double>(ps_.events.size()) / minutes : 0.0;

    std::vector<int> truth, true_cls, pred_cls;
    std::vector<double> score;
    std::vector<int> ho_truth;
    std::vector<double> ho_score;
    const int k_classes = static_cast<int>(ps_.attack_classes.size());
    for (size_t i = 0; i < ps_.events.size(); ++i) {
      if (ps_.split[i] != which) continue;
      const auto& p = preds[i];
      truth.push_back(ps_.events[i].binary_label);
      score.push_back(p.p_att);
      // Combined label space: 0 = Benign, 1+c = attack class c.
      int tc_idx = ps_.class_idx[i] < 0 ? 0 : 1 + ps_.class_idx[i];
      int pc_idx = 0;
      if (p.p_att >= 0.5) {
        Eigen::Index arg;
        p.p_multi.maxCoeff(&arg);
        pc_idx = 1 + static_cast<int>(arg);
      }
      true_cls.push_back(tc_idx);
      pred_cls.push_back(pc_idx);
      if (ps_.holdout_idx >= 0) {
        if (ps_.class_idx[i] == ps_.holdout_idx) {
          ho_truth.push_back(1);
          ho_score.push_back(p.p_att);
        } else if (ps_.class_idx[i] < 0) {
          ho_truth.push_back(0);
          ho_score.push_back(p.p_att);
        }
      }
    }
    res.binary = binary_metrics(truth, score);
    std::vector<std::string> names{"Benign"};
    for (const auto& c : ps_.attack_classes) names.push_back(c);
    res.multi = multi_metrics(true_cls, pred_cls, names);
    if (ps_.holdout_idx >= 0) {
      BinaryMetrics hm = binary_metrics(ho_truth, ho_score);
      res.holdout_recall = hm.recall;
      res.holdout_f1 = hm.f1;
      res.holdout_events =
          static_cast<size_t>(std::count(ho_truth.begin(), ho_truth.end(), 1));
    }
    (void)k_classes;
    return res;
  }

 private:
  const EventStream& es_;
  const PreparedStream& ps_;
  Model& model_;
  TrainConfig tc_;

  BinaryMetrics replay_validation() {
    model_.reset_state();
    const size_t val_end = ps_.n_train + ps_.n_val;
    std::vector<EventPrediction> preds;
    size_t pos = 0;
    while (pos < val_end) {
      size_t b_end = std::min(pos + tc_.batch_size, val_end);
      b_end = clamp_to_split_boundary(pos, b_end);
      model_.process_batch(ps_.events, pos, b_end, ps_.edge_repr, false,
                           pos >= ps_.n_train ? &preds : nullptr,
                           &ps_.class_idx);
      pos = b_end;
    }
    std::vector<int> truth;
    std::vector<double> score;
    truth.reserve(ps_.n_val);
    for (size_t i = ps_.n_train; i < val_end; ++i) {
      truth.push_back(ps_.events[i].binary_label);
      score.push_back(preds[i - ps_.n_train].p_att);
    }
    return binary_metrics(truth, score);
  }

  size_t clamp_to_split_boundary(size_t pos, size_t b_end) const {
    size_t t_end = ps_.n_train;
    size_t v_end = ps_.n_train + ps_.n_val;
    if (pos < t_end) return std::min(b_end, t_end);
    if (pos < v_end) return std::min(b_end, v_end);
    return b_end;
  }
};

// ---------------------------------------------------------------------------
// Logistic-regression reference on raw normalized features (binary). Used
// by the unknown-attack comparison.
// ---------------------------------------------------------------------------

class LogisticBaseline {
 public:
  void train(const std::vector<Vec>& x, const std::vector<int>& y,
             int epochs = 300, double lr = 0.5) {
    if (x.empty()) throw DataError("logistic baseline: empty training set");
    const Eigen::Index d = x[0].size();
    w_ = Vec::Zero(d);
    b_ = 0.0;
    const double n = static_cast<double>(x.size());
    for (int it = 0; it < epochs; ++it) {
      Vec gw = Vec::Zero(d);
      double gb = 0.0;
      for (size_t i = 0; i < x.size(); ++i) {
        double p = sigmoid(w_.dot(x[i]) + b_);
        double err = p - static_cast<double>(y[i]);
        gw += err * x[i];
        gb += err;
      }
      w_ -= (lr / n) * gw;
      b_ -= (lr / n) * gb;
    }
  }

  double score(const Vec& x) const { return sigmoid(w_.dot(x) + b_); }

 private:
  Vec w_;
  double b_ = 0.0;
};

}  // namespace d3ids
