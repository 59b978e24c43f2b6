#pragma once

#include <cstdint>
#include <vector>

#include "liperm/ot.hpp"

namespace liperm::ot {

struct RateStudyRow {
  int n = 0;
  double mean_w1 = 0.0;
  double std_w1 = 0.0;
};

struct RateStudyResult {
  std::vector<RateStudyRow> rows;
  double slope = 0.0;  // least-squares slope of log(mean) vs log(n)
  int d = 0;
  int grid_m = 0;
  int trials = 0;
  bool low_dim_flagged = false;  // d < 3: the clean n^{-1/d} regime needs d >= 3
};

struct RateStudyOptions {
  ExactW1Options w1;
  long grid_atom_cap = kDefaultGridAtomCap;
};

// Mean exact W1 between n-point empirical uniform samples and a fine
// uniform grid, per n, plus the fitted log-log slope. The grid must satisfy
// sqrt(d)/(2m) <= sqrt(d) n_max^{-1/d} / 2, i.e. m >= n_max^{1/d}.
RateStudyResult empirical_rate_study(int d, const std::vector<int>& n_grid,
                                     int trials, int grid_m,
                                     std::uint64_t seed,
                                     const RateStudyOptions& opts = {});

// Empirical constant for the n^{-1/d} rate: max over the grid of
// mean_w1 * n^{1/d} / sqrt(d).
double fit_c_hat(const RateStudyResult& study);

}  // namespace liperm::ot
