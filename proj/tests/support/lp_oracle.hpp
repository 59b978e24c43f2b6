#pragma once

// Brute-force optimal transport oracle: solves the coupling-polytope linear
// program with a dense two-phase tableau simplex (Bland's rule). Entirely
// independent of the production network-simplex path; intended for small
// instances only (atoms per side <= ~12).

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "liperm/measure.hpp"

namespace liperm::testing {

// Minimizes c.x subject to A x = b, x >= 0 (b >= 0 assumed).
inline double dense_simplex(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                            const Eigen::VectorXd& c) {
  using Eigen::MatrixXd;
  using Eigen::VectorXd;
  const long m = a.rows();
  const long n = a.cols();

  // Phase 1: artificial basis.
  MatrixXd t(m + 1, n + m + 1);
  t.setZero();
  t.block(0, 0, m, n) = a;
  t.block(0, n, m, m) = MatrixXd::Identity(m, m);
  t.col(n + m).head(m) = b;
  for (long i = 0; i < m; ++i) t.row(m) -= t.row(i);  // minimize sum of artificials

  std::vector<long> basis(static_cast<size_t>(m));
  for (long i = 0; i < m; ++i) basis[static_cast<size_t>(i)] = n + i;

  const auto pivot = [&](long row, long col) {
    t.row(row) /= t(row, col);
    for (long i = 0; i <= m; ++i) {
      if (i != row && t(i, col) != 0.0) t.row(i) -= t(i, col) * t.row(row);
    }
    basis[static_cast<size_t>(row)] = col;
  };

  const auto run_simplex = [&](long n_cols) {
    while (true) {
      long col = -1;  // Bland: smallest eligible index
      for (long j = 0; j < n_cols; ++j) {
        if (t(m, j) < -1e-11) {
          col = j;
          break;
        }
      }
      if (col < 0) break;
      long row = -1;
      double best = 0.0;
      for (long i = 0; i < m; ++i) {
        if (t(i, col) > 1e-11) {
          const double ratio = t(i, n + m) / t(i, col);
          if (row < 0 || ratio < best - 1e-13 ||
              (std::abs(ratio - best) <= 1e-13 &&
               basis[static_cast<size_t>(i)] < basis[static_cast<size_t>(row)])) {
            best = ratio;
            row = i;
          }
        }
      }
      if (row < 0) throw std::runtime_error("lp oracle: unbounded");
      pivot(row, col);
    }
  };

  run_simplex(n + m);
  if (t(m, n + m) < -1e-8) {
    throw std::runtime_error("lp oracle: infeasible");
  }

  // Drive any artificial variables out of the basis.
  for (long i = 0; i < m; ++i) {
    if (basis[static_cast<size_t>(i)] >= n) {
      long col = -1;
      for (long j = 0; j < n; ++j) {
        if (std::abs(t(i, j)) > 1e-9) {
          col = j;
          break;
        }
      }
      if (col >= 0) pivot(i, col);
    }
  }

  // Phase 2 objective.
  t.row(m).setZero();
  t.row(m).head(n) = c.transpose();
  for (long i = 0; i < m; ++i) {
    const long j = basis[static_cast<size_t>(i)];
    if (j < n && t(m, j) != 0.0) t.row(m) -= t(m, j) * t.row(i);
  }
  run_simplex(n);

  double cost = 0.0;
  for (long i = 0; i < m; ++i) {
    const long j = basis[static_cast<size_t>(i)];
    if (j < n) cost += c[j] * t(i, n + m);
  }
  return cost;
}

// Exact W1 by solving the full coupling LP.
inline double lp_w1(const ot::DiscreteMeasure& mu,
                    const ot::DiscreteMeasure& nu) {
  using Eigen::MatrixXd;
  using Eigen::VectorXd;
  const long m = mu.size();
  const long n = nu.size();
  const long vars = m * n;

  VectorXd c(vars);
  for (long i = 0; i < m; ++i) {
    for (long j = 0; j < n; ++j) {
      c[i * n + j] = (mu.points().col(i) - nu.points().col(j)).norm();
    }
  }

  // Row-sum constraints for mu, column sums for nu (drop one redundant row).
  const long rows = m + n - 1;
  MatrixXd a = MatrixXd::Zero(rows, vars);
  VectorXd b(rows);
  for (long i = 0; i < m; ++i) {
    for (long j = 0; j < n; ++j) a(i, i * n + j) = 1.0;
    b[i] = mu.weights()[i];
  }
  for (long j = 0; j + 1 < n; ++j) {
    for (long i = 0; i < m; ++i) a(m + j, i * n + j) = 1.0;
    b[m + j] = nu.weights()[j];
  }
  return dense_simplex(a, b, c);
}

}  // namespace liperm::testing
