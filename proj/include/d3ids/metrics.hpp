#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "d3ids/errors.hpp"

namespace d3ids {

struct BinaryMetrics {
  double f1 = 0.0;
  double auc = 0.5;
  double precision = 0.0;
  double recall = 0.0;
  double accuracy = 0.0;
  long tp = 0, fp = 0, tn = 0, fn = 0;
  size_t n = 0;
};

struct MultiMetrics {
  std::vector<std::string> class_names;  // row/col order of the confusion
  std::vector<std::vector<long>> confusion;  // [true][pred]
  std::vector<double> per_class_f1;
  double macro_f1 = 0.0;  // over classes with support
  double accuracy = 0.0;
  size_t n = 0;
};

// Rank-statistic ROC-AUC with average ranks for tied scores.
inline double roc_auc(const std::vector<int>& truth,
                      const std::vector<double>& score) {
  if (truth.size() != score.size())
    throw DataError("auc: truth/score size mismatch");
  const size_t n = truth.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return score[a] < score[b]; });

  double rank_sum_pos = 0.0;
  long pos = 0, neg = 0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j < n && score[order[j]] == score[order[i]]) ++j;
    double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based
    for (size_t k = i; k < j; ++k)
      if (truth[order[k]] == 1) rank_sum_pos += avg_rank;
    i = j;
  }
  for (size_t k = 0; k < n; ++k) (truth[k] == 1 ? pos : neg)++;
  if (pos == 0 || neg == 0) return 0.5;
  return (rank_sum_pos - 0.5 * pos * (pos + 1.0)) /
         (static_cast<double>(pos) * static_cast<double>(neg));
}

inline BinaryMetrics binary_metrics(const std::vector<int>& truth,
                                    const std::vector<double>& attack_score,
                                    double threshold = 0.5) {
  if (truth.size() != attack_score.size())
    throw DataError("metrics: truth/score size mismatch");
  BinaryMetrics m;
  m.n = truth.size();
  for (size_t i = 0; i < truth.size(); ++i) {
    bool pred = attack_score[i] >= threshold;
    if (pred && truth[i] == 1) ++m.tp;
    else if (pred) ++m.fp;
    else if (truth[i] == 0) ++m.tn;
    else ++m.fn;
  }
  m.precision = (m.tp + m.fp) > 0
                    ? static_cast<double>(m.tp) / (m.tp + m.fp)
                    : 0.0;
  m.recall = (m.tp + m.fn) > 0
                 ? static_cast<double>(m.tp) / (m.tp + m.fn)
                 : 0.0;
  m.f1 = (m.precision + m.recall) > 0
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  m.accuracy = m.n > 0 ? static_cast<double>(m.tp + m.tn) / m.n : 0.0;
  m.auc = roc_auc(truth, attack_score);
  return m;
}

inline MultiMetrics multi_metrics(const std::vector<int>& true_idx,
                                  const std::vector<int>& pred_idx,
                                  const std::vector<std::string>& names) {
  if (true_idx.size() != pred_idx.size())
    throw DataError("metrics: truth/pred size mismatch");
  const int k = static_cast<int>(names.size());
  MultiMetrics m;
  m.class_names = names;
  m.confusion.assign(k, std::vector<long>(k, 0));
  m.n = true_idx.size();
  long correct = 0;
  for (size_t i = 0; i < true_idx.size(); ++i) {
    if (true_idx[i] < 0 || true_idx[i] >= k || pred_idx[i] < 0 ||
        pred_idx[i] >= k)
      throw DataError("metrics: class index out of range");
    m.confusion[true_idx[i]][pred_idx[i]]++;
    if (true_idx[i] == pred_idx[i]) ++correct;
  }
  m.per_class_f1.assign(k, 0.0);
  double f1_sum = 0.0;
  int supported = 0;
  for (int c = 0; c < k; ++c) {
    long support = 0, predicted = 0;
    for (int j = 0; j < k; ++j) {
      support += m.confusion[c][j];
      predicted += m.confusion[j][c];
    }
    long tp = m.confusion[c][c];
    double prec = predicted > 0 ? static_cast<double>(tp) / predicted : 0.0;
    double rec = support > 0 ? static_cast<double>(tp) / support : 0.0;
    m.per_class_f1[c] =
        (prec + rec) > 0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
    if (support > 0) {
      f1_sum += m.per_class_f1[c];
      ++supported;
    }
  }
  m.macro_f1 = supported > 0 ? f1_sum / supported : 0.0;
  m.accuracy = m.n > 0 ? static_cast<double>(correct) / m.n : 0.0;
  return m;
}

}  // namespace d3ids
