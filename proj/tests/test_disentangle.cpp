#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "d3ids/disentangle.hpp"
#include "oracles.hpp"

using namespace d3ids;

TEST_CASE("single feature: degenerate objective pushes weight to w_max") {
  DisentangleSolver solver;
  auto sol = solver.solve({{0.5}, 0.0, 1.0, 1.0});
  CHECK(sol.weights[0] == Catch::Approx(1.0));
  CHECK(sol.objective == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("all-zero features: every product constraint is tight, w = w_max") {
  DisentangleSolver solver;
  auto sol = solver.solve({{0.0, 0.0, 0.0, 0.0}, 0.0, 1.0, 1.0});
  for (double w : sol.weights) CHECK(w == Catch::Approx(1.0));
  for (double p : sol.products) CHECK(p == 0.0);
  CHECK(verify_solution({{0.0, 0.0, 0.0, 0.0}, 0.0, 1.0, 1.0}, sol).feasible);
}

TEST_CASE("worked N=3 instance matches the analytic optimum") {
  // F = (0.2, 0.5, 0.9), defaults: optimum p = (0, 1/3, 2/3), objective 2/3.
  // The best 0.01-grid point reaches only 0.66 (frozen from the oracle run).
  DisentangleProblem prob{{0.2, 0.5, 0.9}, 0.0, 1.0, 1.0};
  auto sol = DisentangleSolver().solve(prob);
  CHECK(sol.objective == Catch::Approx(2.0 / 3.0).epsilon(1e-9));
  CHECK(sol.products[0] == Catch::Approx(0.0).margin(1e-9));
  CHECK(sol.products[1] == Catch::Approx(1.0 / 3.0).epsilon(1e-9));
  CHECK(sol.products[2] == Catch::Approx(2.0 / 3.0).epsilon(1e-9));
  CHECK(verify_solution(prob, sol).feasible);

  auto grid = oracles::grid_search({0.2, 0.5, 0.9});
  CHECK(grid.objective == Catch::Approx(0.66).epsilon(1e-9));
  CHECK(sol.objective >= grid.objective - 1e-3);  // oracle dominance
}

TEST_CASE("solved products are sorted and gap-convex in solved order") {
  std::mt19937_64 rng(7);
  auto u = [&] { return (rng() >> 11) * 0x1.0p-53; };
  DisentangleSolver solver;
  for (int trial = 0; trial < 40; ++trial) {
    int n = 2 + static_cast<int>(rng() % 7);
    std::vector<double> f(n);
    for (auto& v : f) v = u();
    DisentangleProblem prob{f, 0.0, 1.0, 1.0};
    auto sol = solver.solve(prob);
    auto rep = verify_solution(prob, sol);
    INFO(rep.detail);
    CHECK(rep.feasible);
    // order + convexity via the permutation
    std::vector<double> p(n);
    for (int k = 0; k < n; ++k) p[k] = sol.products[sol.permutation[k]];
    for (int k = 0; k + 1 < n; ++k) CHECK(p[k] <= p[k + 1] + 1e-7);
    for (int k = 1; k + 1 < n; ++k)
      CHECK(2 * p[k] <= p[k - 1] + p[k + 1] + 1e-7);
  }
}

TEST_CASE("permutation round-trip is the identity") {
  DisentangleSolver solver;
  std::vector<double> f{0.9, 0.1, 0.5, 0.3};
  auto sol = solver.solve({f, 0.0, 1.0, 1.0});
  std::vector<int> inverse(f.size());
  for (size_t k = 0; k < f.size(); ++k) inverse[sol.permutation[k]] = k;
  for (size_t i = 0; i < f.size(); ++i)
    CHECK(sol.permutation[inverse[i]] == static_cast<int>(i));
  // sorted order really is ascending
  for (size_t k = 0; k + 1 < f.size(); ++k)
    CHECK(f[sol.permutation[k]] <= f[sol.permutation[k + 1]]);
}

TEST_CASE("disentangled_edge returns products in original order") {
  DisentangleProblem prob{{0.9, 0.1, 0.5}, 0.0, 1.0, 1.0};
  auto sol = DisentangleSolver().solve(prob);
  auto h = disentangled_edge(prob, sol);
  for (size_t i = 0; i < h.size(); ++i) {
    CHECK(h[i] == Catch::Approx(sol.weights[i] * prob.features[i]));
    CHECK(h[i] == Catch::Approx(sol.products[i]));
  }
}

TEST_CASE("identity weights give back the features") {
  DisentangleProblem prob{{0.3, 0.6}, 0.0, 1.0, 1.0};
  DisentangleSolution sol;
  sol.weights = {1.0, 1.0};
  sol.products = {0.3, 0.6};
  auto h = disentangled_edge(prob, sol);
  CHECK(h[0] == Catch::Approx(0.3));
  CHECK(h[1] == Catch::Approx(0.6));
}

TEST_CASE("budget relaxation fires when the lower bounds overspend") {
  // w_min = 0.9 forces sum w*F >= 0.9 * 2.4 > B = 1
  DisentangleProblem prob{{0.7, 0.8, 0.9}, 0.9, 1.0, 1.0};
  auto sol = DisentangleSolver().solve(prob);
  CHECK(sol.budget_relaxed);
  CHECK(sol.effective_budget > 1.0);
  CHECK(verify_solution(prob, sol).feasible);
}

TEST_CASE("eq5* variant stays feasible and reports its own objective") {
  DisentangleSolver star(ObjectiveVariant::Eq5Star);
  DisentangleProblem prob{{0.2, 0.5, 0.9}, 0.0, 1.0, 1.0};
  auto sol = star.solve(prob);
  CHECK(verify_solution(prob, sol).feasible);
  // order preservation forces sum |gaps| = range, so the objective is 0
  CHECK(sol.objective == Catch::Approx(0.0).margin(1e-9));
}

TEST_CASE("memoized solver caches by quantized features") {
  MemoizedDisentangler memo;
  std::vector<double> f{0.2, 0.5, 0.9};
  auto a = memo.solve(f);
  CHECK(memo.cache_size() == 1);
  CHECK(memo.hits() == 0);
  auto b = memo.solve(f);
  CHECK(memo.hits() == 1);
  CHECK(a.objective == b.objective);
  // within one quantum -> same key
  std::vector<double> f2{0.2 + 1e-6, 0.5, 0.9};
  memo.solve(f2);
  CHECK(memo.cache_size() == 1);
  // a full quantum away -> new entry
  std::vector<double> f3{0.2 + 2e-4, 0.5, 0.9};
  memo.solve(f3);
  CHECK(memo.cache_size() == 2);
}

TEST_CASE("overlap ratio: identical, disjoint, and diagonal") {
  CHECK(overlap_ratio({0.5, 0.5}, {0.1, 0.1}) == Catch::Approx(1.0));
  // disjoint trimmed ranges
  double r = overlap_ratio({0.1, 0.9}, {0.01, 0.01});
  CHECK(r == Catch::Approx(0.5));  // only the two diagonal terms survive
  // diagonal contributes exactly 1 each
  double solo = overlap_ratio({0.3}, {0.05});
  CHECK(solo == Catch::Approx(1.0));
  // symmetry
  double a = overlap_ratio({0.2, 0.6, 0.4}, {0.05, 0.1, 0.2});
  double b = overlap_ratio({0.4, 0.6, 0.2}, {0.2, 0.1, 0.05});
  CHECK(a == Catch::Approx(b));
}

TEST_CASE("overlap ratio handles point-mass features") {
  CHECK(overlap_ratio({0.5, 0.5}, {0.0, 0.0}) == Catch::Approx(1.0));
  CHECK(overlap_ratio({0.2, 0.8}, {0.0, 0.0}) == Catch::Approx(0.5));
}

TEST_CASE("solver rejects bad inputs") {
  DisentangleSolver solver;
  CHECK_THROWS_AS(solver.solve({{}, 0, 1, 1}), DataError);
  CHECK_THROWS_AS(solver.solve({{0.5}, 1.0, 0.0, 1.0}), ConfigError);
  CHECK_THROWS_AS(solver.solve({{0.5}, 0.0, 1.0, 0.0}), ConfigError);
  double nan = std::nan("");
  CHECK_THROWS_AS(solver.solve({{nan}, 0.0, 1.0, 1.0}), DataError);
}
