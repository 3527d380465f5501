#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "d3ids/errors.hpp"
#include "d3ids/simplex.hpp"

namespace d3ids {

enum class ObjectiveVariant { Eq5, Eq5Star };

struct DisentangleProblem {
  std::vector<double> features;  // normalized, componentwise in [0,1]
  double w_min = 0.0;
  double w_max = 1.0;
  double budget = 1.0;
};

struct DisentangleSolution {
  std::vector<double> weights;   // original feature order
  std::vector<double> products;  // w_i * F_i, original order
  double objective = 0.0;
  // permutation[k] = original index of the k-th feature in solved
  // (ascending) order.
  std::vector<int> permutation;
  bool budget_relaxed = false;
  double effective_budget = 0.0;
  int lp_iterations = 0;
};

// Objective of the solved program evaluated on products in ascending order:
//   p_N - p_1 + sum_{i=2}^{N-1} (2 p_i - p_{i-1} - p_{i+1})
inline double spread_objective(const std::vector<double>& p_sorted) {
  const int n = static_cast<int>(p_sorted.size());
  if (n < 2) return 0.0;
  double obj = p_sorted[n - 1] - p_sorted[0];
  for (int i = 1; i + 1 < n; ++i)
    obj += 2.0 * p_sorted[i] - p_sorted[i - 1] - p_sorted[i + 1];
  return obj;
}

inline double range_minus_gaps_objective(const std::vector<double>& p_sorted) {
  const int n = static_cast<int>(p_sorted.size());
  if (n < 2) return 0.0;
  double obj = p_sorted[n - 1] - p_sorted[0];
  for (int i = 0; i + 1 < n; ++i) obj -= std::abs(p_sorted[i + 1] - p_sorted[i]);
  return obj;
}

namespace detail {

inline std::vector<int> ascending_permutation(const std::vector<double>& f) {
  std::vector<int> perm(f.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::stable_sort(perm.begin(), perm.end(),
                   [&](int a, int b) { return f[a] < f[b]; });
  return perm;
}

}  // namespace detail

class DisentangleSolver {
 public:
  explicit DisentangleSolver(ObjectiveVariant variant = ObjectiveVariant::Eq5,
                             double tol = 1e-9)
      : variant_(variant), tol_(tol), simplex_(tol) {}

  DisentangleSolution solve(const DisentangleProblem& prob) const {
    const int n = static_cast<int>(prob.features.size());
    if (n < 1) throw DataError("disentangle: empty feature vector");
    if (prob.w_min > prob.w_max)
      throw ConfigError("disentangle: w_min > w_max");
    if (prob.budget <= 0.0) throw ConfigError("disentangle: budget <= 0");
    for (double f : prob.features)
      if (!std::isfinite(f))
        throw DataError("disentangle: non-finite feature value");

    DisentangleSolution sol;
    sol.permutation = detail::ascending_permutation(prob.features);
    std::vector<double> f(n);
    for (int k = 0; k < n; ++k) f[k] = prob.features[sol.permutation[k]];

    sol.effective_budget = prob.budget;
    LpResult lp = solve_sorted(f, prob, sol.effective_budget);
    if (lp.status == LpStatus::Infeasible) {
      // The budget can be unsatisfiable at the lower weight bounds; lift it
      // just enough and flag the relaxation.
      double min_spend = 0.0;
      for (double fi : f) min_spend += prob.w_min * fi;
      if (min_spend > prob.budget) {
        sol.effective_budget = min_spend;
        sol.budget_relaxed = true;
        lp = solve_sorted(f, prob, sol.effective_budget);
      }
    }
    if (lp.status == LpStatus::Infeasible)
      throw SolverError("disentangle: constraint set infeasible after " +
                        std::to_string(lp.iterations) + " iterations");
    if (lp.status == LpStatus::Unbounded)
      throw SolverError("disentangle: unexpected unbounded program");

    sol.lp_iterations = lp.iterations;
    sol.weights.resize(n);
    sol.products.resize(n);
    std::vector<double> p_sorted(n);
    for (int k = 0; k < n; ++k) {
      double w = prob.w_min + lp.x(k);
      w = std::clamp(w, prob.w_min, prob.w_max);
      sol.weights[sol.permutation[k]] = w;
      double p = w * f[k];
      sol.products[sol.permutation[k]] = p;
      p_sorted[k] = p;
    }
    sol.objective = variant_ == ObjectiveVariant::Eq5
                        ? spread_objective(p_sorted)
                        : range_minus_gaps_objective(p_sorted);
    return sol;
  }

 private:
  ObjectiveVariant variant_;
  double tol_;
  SimplexSolver simplex_;

  // Builds the program over shifted weights x = w - w_min (and, for the
  // gap-epigraph variant, auxiliary gap bounds e) and hands it to the
  // simplex solver.
  LpResult solve_sorted(const std::vector<double>& f,
                        const DisentangleProblem& prob, double budget) const {
    const int n = static_cast<int>(f.size());
    const bool star = variant_ == ObjectiveVariant::Eq5Star && n >= 2;
    const int n_e = star ? n - 1 : 0;
    const int n_vars = n + n_e;
    const int n_rows = n + 1 + (n - 1) + std::max(0, n - 2) + 2 * n_e;

    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n_rows, n_vars);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n_rows);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(n_vars);

    int row = 0;
    for (int i = 0; i < n; ++i) {  // upper bounds
      A(row, i) = 1.0;
      b(row) = prob.w_max - prob.w_min;
      ++row;
    }
    {  // budget
      double rhs = budget;
      for (int i = 0; i < n; ++i) {
        A(row, i) = f[i];
        rhs -= prob.w_min * f[i];
      }
      b(row) = rhs;
      ++row;
    }
    for (int i = 0; i + 1 < n; ++i) {  // order preservation
      A(row, i) = f[i];
      A(row, i + 1) = -f[i + 1];
      b(row) = prob.w_min * (f[i + 1] - f[i]);
      ++row;
    }
    for (int i = 1; i + 1 < n; ++i) {  // non-decreasing gaps
      A(row, i) = 2.0 * f[i];
      A(row, i - 1) = -f[i - 1];
      A(row, i + 1) = -f[i + 1];
      b(row) = prob.w_min * (f[i - 1] + f[i + 1] - 2.0 * f[i]);
      ++row;
    }
    if (star) {
      for (int i = 0; i + 1 < n; ++i) {  // e_i >= |p_{i+1} - p_i|
        int e = n + i;
        A(row, i + 1) = f[i + 1];
        A(row, i) = -f[i];
        A(row, e) = -1.0;
        b(row) = -prob.w_min * (f[i + 1] - f[i]);
        ++row;
        A(row, i) = f[i];
        A(row, i + 1) = -f[i + 1];
        A(row, e) = -1.0;
        b(row) = prob.w_min * (f[i + 1] - f[i]);
        ++row;
      }
    }

    if (variant_ == ObjectiveVariant::Eq5) {
      if (n >= 2) {
        c(n - 1) += f[n - 1];
        c(0) -= f[0];
        for (int i = 1; i + 1 < n; ++i) {
          c(i) += 2.0 * f[i];
          c(i - 1) -= f[i - 1];
          c(i + 1) -= f[i + 1];
        }
      }
    } else if (star) {
      c(n - 1) += f[n - 1];
      c(0) -= f[0];
      for (int i = 0; i < n_e; ++i) c(n + i) = -1.0;
    }
    // Degenerate directions (zero features, N=1) resolve toward w_max. The
    // nudge must clear the simplex pivot tolerance but stays far below the
    // 1e-3 oracle comparison band.
    for (int i = 0; i < n; ++i) c(i) += 1e-7;

    return simplex_.solve(A, b, c);
  }
};

struct ConstraintReport {
  bool feasible = true;
  double max_violation = 0.0;
  std::string detail;
};

// Independent re-check of every constraint family on a returned solution.
// Deliberately written against the problem statement, not the LP encoding.
inline ConstraintReport verify_solution(const DisentangleProblem& prob,
                                        const DisentangleSolution& sol,
                                        double tol = 1e-7) {
  ConstraintReport rep;
  const int n = static_cast<int>(prob.features.size());
  auto flag = [&](double violation, const std::string& what) {
    if (violation > rep.max_violation) {
      rep.max_violation = violation;
      rep.detail = what;
    }
    if (violation > tol) rep.feasible = false;
  };

  std::vector<double> p(n);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    double w = sol.weights[i];
    flag(prob.w_min - w, "w below w_min at " + std::to_string(i));
    flag(w - prob.w_max, "w above w_max at " + std::to_string(i));
    p[i] = w * prob.features[i];
    flag(std::abs(p[i] - sol.products[i]),
         "stored product mismatch at " + std::to_string(i));
    total += p[i];
  }
  double budget = sol.budget_relaxed ? sol.effective_budget : prob.budget;
  flag(total - budget, "budget exceeded");

  auto perm = detail::ascending_permutation(prob.features);
  for (int k = 0; k + 1 < n; ++k) {
    double lhs = p[perm[k]] - p[perm[k + 1]];
    flag(lhs, "order violated between ranks " + std::to_string(k) + "," +
                  std::to_string(k + 1));
  }
  for (int k = 1; k + 1 < n; ++k) {
    double lhs = 2.0 * p[perm[k]] - p[perm[k - 1]] - p[perm[k + 1]];
    flag(lhs, "gap convexity violated at rank " + std::to_string(k));
  }
  return rep;
}

inline std::vector<double> disentangled_edge(const DisentangleProblem& prob,
                                             const DisentangleSolution& sol) {
  std::vector<double> h(prob.features.size());
  for (size_t i = 0; i < h.size(); ++i) h[i] = sol.weights[i] * prob.features[i];
  return h;
}

// Feature-keyed memo cache. Re-solving identical flows is common; keys are
// the feature vector quantized to `quantum`.
class MemoizedDisentangler {
 public:
  MemoizedDisentangler(ObjectiveVariant variant = ObjectiveVariant::Eq5,
                       double tol = 1e-9, double quantum = 1e-4,
                       double w_min = 0.0, double w_max = 1.0,
                       double budget = 1.0)
      : solver_(variant, tol),
        quantum_(quantum),
        w_min_(w_min),
        w_max_(w_max),
        budget_(budget) {}

  DisentangleSolution solve(const std::vector<double>& features) const {
    std::string key = quantize_key(features);
    {
      std::lock_guard<std::mutex> lock(mu_);
      auto it = cache_.find(key);
      if (it != cache_.end()) {
        ++hits_;
        return it->second;
      }
    }
    DisentangleProblem prob{features, w_min_, w_max_, budget_};
    DisentangleSolution sol = solver_.solve(prob);
    {
      std::lock_guard<std::mutex> lock(mu_);
      cache_.emplace(std::move(key), sol);
    }
    return sol;
  }

  size_t cache_size() const {
    std::lock_guard<std::mutex> lock(mu_);
    return cache_.size();
  }
  size_t hits() const {
    std::lock_guard<std::mutex> lock(mu_);
    return hits_;
  }

 private:
  DisentangleSolver solver_;
  double quantum_;
  double w_min_, w_max_, budget_;
  mutable std::mutex mu_;
  mutable std::unordered_map<std::string, DisentangleSolution> cache_;
  mutable size_t hits_ = 0;

  std::string quantize_key(const std::vector<double>& f) const {
    std::string key;
    key.reserve(f.size() * sizeof(int64_t));
    for (double v : f) {
      int64_t q = llround(v / quantum_);
      key.append(reinterpret_cast<const char*>(&q), sizeof(q));
    }
    return key;
  }
};

// ---------------------------------------------------------------------------
// Distribution-overlap diagnostic
// ---------------------------------------------------------------------------

// Average pairwise overlap of per-feature distribution ranges. A feature's
// range is its mu +- 3 sigma interval trimmed to the normalized domain
// [0, 1]; each pair contributes |intersection| / min(|range_i|, |range_j|).
// Identical distributions contribute 1, separated ones approach 0.
inline double overlap_ratio(const std::vector<double>& means,
                            const std::vector<double>& stds) {
  const int n = static_cast<int>(means.size());
  if (n == 0 || stds.size() != means.size())
    throw DataError("overlap_ratio: inconsistent stats");
  std::vector<double> lo(n), hi(n);
  for (int i = 0; i < n; ++i) {
    if (stds[i] < 0.0) throw DataError("overlap_ratio: negative std");
    lo[i] = std::max(0.0, means[i] - 3.0 * stds[i]);
    hi[i] = std::min(1.0, means[i] + 3.0 * stds[i]);
    if (hi[i] < lo[i]) {  // distribution centered outside the domain
      lo[i] = std::clamp(means[i], 0.0, 1.0);
      hi[i] = lo[i];
    }
  }
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double inter = std::min(hi[i], hi[j]) - std::max(lo[i], lo[j]);
      double shortest = std::min(hi[i] - lo[i], hi[j] - lo[j]);
      if (shortest <= 0.0) {
        // Point-mass ranges: full overlap iff they coincide.
        sum += (inter >= 0.0) ? 1.0 : 0.0;
      } else {
        sum += std::max(0.0, inter) / shortest;
      }
    }
  }
  return sum / (static_cast<double>(n) * static_cast<double>(n));
}

struct FeatureMoments {
  std::vector<double> mean;
  std::vector<double> stddev;
};

template <typename Rows>
FeatureMoments feature_moments(const Rows& rows) {
  FeatureMoments m;
  size_t count = 0;
  for (const auto& r : rows) {
    if (m.mean.empty()) {
      m.mean.assign(r.size(), 0.0);
      m.stddev.assign(r.size(), 0.0);
    }
    for (size_t i = 0; i < r.size(); ++i) m.mean[i] += r[i];
    ++count;
  }
  if (count == 0) throw DataError("feature_moments: no rows");
  for (auto& v : m.mean) v /= static_cast<double>(count);
  for (const auto& r : rows)
    for (size_t i = 0; i < r.size(); ++i) {
      double d = r[i] - m.mean[i];
      m.stddev[i] += d * d;
    }
  for (auto& v : m.stddev) v = std::sqrt(v / static_cast<double>(count));
  return m;
}

}  // namespace d3ids
