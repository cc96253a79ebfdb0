#pragma once

// Shared helpers for the test binaries: seeded random instances and small
// brute-force oracles.

#include "otkit/core.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <tuple>

namespace otkit::testing {

inline Vector random_histogram(std::mt19937_64& rng, Index n, double floor = 0.05) {
  std::uniform_real_distribution<double> u(floor, 1.0);
  Vector a(n);
  for (Index i = 0; i < n; ++i) a[i] = u(rng);
  return a / a.sum();
}

inline Matrix random_matrix(std::mt19937_64& rng, Index n, Index m, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix M(n, m);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < m; ++j) M(i, j) = u(rng);
  return M;
}

inline Matrix random_integer_costs(std::mt19937_64& rng, Index n, Index m, int max_cost = 100) {
  std::uniform_int_distribution<int> u(0, max_cost);
  Matrix C(n, m);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < m; ++j) C(i, j) = u(rng);
  return C;
}

/// |x_i - y_j|^p between rows, computed pairwise.
inline Matrix pairwise_power(const Matrix& x, const Matrix& y, double p) {
  Matrix C(x.rows(), y.rows());
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = 0; j < y.rows(); ++j) C(i, j) = std::pow((x.row(i) - y.row(j)).norm(), p);
  return C;
}

/// Minimum of sum_i C(i, sigma(i)) over all permutations.
inline double permutation_minimum(const Matrix& C, std::vector<Index>* best = nullptr) {
  std::vector<Index> perm(static_cast<std::size_t>(C.rows()));
  std::iota(perm.begin(), perm.end(), Index{0});
  double min_cost = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (Index i = 0; i < C.rows(); ++i) s += C(i, perm[static_cast<std::size_t>(i)]);
    if (s < min_cost) {
      min_cost = s;
      if (best) *best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return min_cost;
}

/// All-pairs shortest paths on an undirected edge list.
inline Matrix floyd_warshall(Index n, const std::vector<std::tuple<Index, Index, double>>& edges) {
  const double inf = std::numeric_limits<double>::infinity();
  Matrix D = Matrix::Constant(n, n, inf);
  for (Index i = 0; i < n; ++i) D(i, i) = 0.0;
  for (const auto& [i, j, w] : edges) {
    D(i, j) = std::min(D(i, j), w);
    D(j, i) = std::min(D(j, i), w);
  }
  for (Index k = 0; k < n; ++k)
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) D(i, j) = std::min(D(i, j), D(i, k) + D(k, j));
  return D;
}

/// Cell masses of N(mean, sd^2) on n equal cells of [0, 1], renormalized.
inline Vector gaussian_cells(Index n, double mean, double sd) {
  auto cdf = [&](double x) { return 0.5 * std::erfc(-(x - mean) / (sd * std::sqrt(2.0))); };
  Vector w(n);
  for (Index i = 0; i < n; ++i)
    w[i] = cdf(static_cast<double>(i + 1) / static_cast<double>(n)) - cdf(static_cast<double>(i) / static_cast<double>(n));
  return w / w.sum();
}

/// Centres of n equal cells of [0, 1].
inline Vector cell_centres(Index n) {
  Vector x(n);
  for (Index i = 0; i < n; ++i) x[i] = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
  return x;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

/// Runs a shell command and returns its exit status (-1 if it did not exit normally).
inline int run_command(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  if (status == -1) return -1;
  if (WIFEXITED(status)) return WEXITSTATUS(status);
  return -1;
}

}  // namespace otkit::testing
