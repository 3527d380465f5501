#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "d3ids/errors.hpp"

namespace d3ids {

enum class LpStatus { Optimal, Infeasible, Unbounded };

struct LpResult {
  LpStatus status = LpStatus::Optimal;
  Eigen::VectorXd x;
  double objective = 0.0;
  int iterations = 0;
};

// Dense two-phase tableau simplex for small problems:
//
//   maximize c'x   subject to   A x <= b,   x >= 0.
//
// b may have negative entries (phase 1 with artificials). Dantzig pricing
// with a switch to Bland's rule after a pivot budget, so the method always
// terminates. Problem sizes here are tiny (tens of rows), so no effort is
// spent on revised/sparse formulations.
class SimplexSolver {
 public:
  explicit SimplexSolver(double eps = 1e-9) : eps_(eps) {}

  LpResult solve(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                 const Eigen::VectorXd& c, int max_iter = 0) const {
    const int m = static_cast<int>(A.rows());
    const int n = static_cast<int>(A.cols());
    if (b.size() != m || c.size() != n)
      throw SolverError("simplex: inconsistent problem dimensions");
    if (max_iter <= 0) max_iter = 200 * (m + n + 10);

    // Columns: [structural n | slack m | artificial (as needed) | rhs].
    int n_art = 0;
    for (int i = 0; i < m; ++i)
      if (b(i) < 0.0) ++n_art;

    const int cols = n + m + n_art;
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, cols + 1);
    std::vector<int> basis(m);

    int art = n + m;
    for (int i = 0; i < m; ++i) {
      double sign = (b(i) < 0.0) ? -1.0 : 1.0;
      T.row(i).head(n) = sign * A.row(i);
      T(i, n + i) = sign;  // slack
      T(i, cols) = sign * b(i);
      if (b(i) < 0.0) {
        T(i, art) = 1.0;
        basis[i] = art++;
      } else {
        basis[i] = n + i;
      }
    }

    int iters = 0;
    if (n_art > 0) {
      // Phase 1: maximize -sum(artificials).
      Eigen::VectorXd c1 = Eigen::VectorXd::Zero(cols);
      for (int j = n + m; j < cols; ++j) c1(j) = -1.0;
      Eigen::VectorXd z = reduced_costs(T, basis, c1, cols);
      double obj1 = basic_objective(T, basis, c1, cols);
      LpStatus st = pivot_loop(T, basis, z, obj1, cols, n + m, max_iter, iters);
      if (st == LpStatus::Unbounded)
        throw SolverError("simplex: phase 1 unbounded after " +
                          std::to_string(iters) + " iterations");
      if (obj1 < -1e-7) {
        LpResult r;
        r.status = LpStatus::Infeasible;
        r.iterations = iters;
        return r;
      }
      // Drive leftover artificials out of the basis; all at value ~0.
      for (int i = 0; i < m; ++i) {
        if (basis[i] < n + m) continue;
        int enter = -1;
        for (int j = 0; j < n + m; ++j)
          if (std::abs(T(i, j)) > eps_) { enter = j; break; }
        if (enter >= 0) {
          pivot(T, basis, i, enter, cols);
          ++iters;
        }
        // else: redundant row, artificial stays basic at zero; harmless
        // because artificial columns are barred from entering in phase 2.
      }
    }

    // Phase 2 over the real objective; artificial columns frozen.
    Eigen::VectorXd c2 = Eigen::VectorXd::Zero(cols);
    c2.head(n) = c;
    Eigen::VectorXd z = reduced_costs(T, basis, c2, cols);
    double obj = basic_objective(T, basis, c2, cols);
    LpStatus st = pivot_loop(T, basis, z, obj, cols, n + m, max_iter, iters);

    LpResult r;
    r.status = st;
    r.iterations = iters;
    if (st == LpStatus::Optimal) {
      r.x = Eigen::VectorXd::Zero(n);
      for (int i = 0; i < m; ++i)
        if (basis[i] < n) r.x(basis[i]) = T(i, cols);
      r.objective = c.dot(r.x);
    }
    return r;
  }

 private:
  double eps_;

  static Eigen::VectorXd reduced_costs(const Eigen::MatrixXd& T,
                                       const std::vector<int>& basis,
                                       const Eigen::VectorXd& c, int cols) {
    Eigen::VectorXd z = c;
    for (int i = 0; i < static_cast<int>(basis.size()); ++i) {
      double cb = c(basis[i]);
      if (cb != 0.0) z -= cb * T.row(i).head(cols).transpose();
    }
    return z;
  }

  static double basic_objective(const Eigen::MatrixXd& T,
                                const std::vector<int>& basis,
                                const Eigen::VectorXd& c, int cols) {
    double v = 0.0;
    for (int i = 0; i < static_cast<int>(basis.size()); ++i)
      v += c(basis[i]) * T(i, cols);
    return v;
  }

  void pivot(Eigen::MatrixXd& T, std::vector<int>& basis, int row, int col,
             int cols) const {
    T.row(row) /= T(row, col);
    for (int i = 0; i < static_cast<int>(basis.size()); ++i) {
      if (i == row) continue;
      double f = T(i, col);
      if (std::abs(f) > 0.0) T.row(i) -= f * T.row(row);
    }
    basis[row] = col;
  }

  // Runs pivots until optimal/unbounded. `enter_limit` bars artificial
  // columns (indices >= enter_limit) from entering.
  LpStatus pivot_loop(Eigen::MatrixXd& T, std::vector<int>& basis,
                      Eigen::VectorXd& z, double& obj, int cols,
                      int enter_limit, int max_iter, int& iters) const {
    const int m = static_cast<int>(basis.size());
    const int bland_after = max_iter / 2;
    while (true) {
      if (iters >= max_iter)
        throw SolverError("simplex: iteration limit reached after " +
                          std::to_string(iters) + " iterations");
      bool bland = iters >= bland_after;
      int enter = -1;
      double best = eps_;
      for (int j = 0; j < enter_limit; ++j) {
        if (z(j) > best) {
          enter = j;
          if (bland) break;
          best = z(j);
        }
      }
      if (enter < 0) return LpStatus::Optimal;

      int leave = -1;
      double best_ratio = 0.0;
      for (int i = 0; i < m; ++i) {
        double a = T(i, enter);
        if (a > eps_) {
          double ratio = T(i, cols) / a;
          if (leave < 0 || ratio < best_ratio - eps_ ||
              (std::abs(ratio - best_ratio) <= eps_ &&
               basis[i] < basis[leave])) {
            leave = i;
            best_ratio = ratio;
          }
        }
      }
      if (leave < 0) return LpStatus::Unbounded;

      double zj = z(enter);
      pivot(T, basis, leave, enter, cols);
      obj += zj * T(leave, cols);
      z -= zj * T.row(leave).head(cols).transpose();
      z(enter) = 0.0;
      ++iters;
    }
  }
};

}  // namespace d3ids
