#include "liperm/rate_study.hpp"

#include <algorithm>
#include <cmath>

#include "liperm/rng.hpp"

namespace liperm::ot {

RateStudyResult empirical_rate_study(int d, const std::vector<int>& n_grid,
                                     int trials, int grid_m,
                                     std::uint64_t seed,
                                     const RateStudyOptions& opts) {
  if (d < 1) throw ConfigError("rate study: need d >= 1");
  if (n_grid.empty()) throw ConfigError("rate study: empty n grid");
  if (trials < 1) throw ConfigError("rate study: need trials >= 1");

  const int n_max = *std::max_element(n_grid.begin(), n_grid.end());
  // grid error sqrt(d)/(2m) must stay below half the expected W1 at the
  // largest n, taken as sqrt(d) n^{-1/d}
  if (grid_m < std::pow(double(n_max), 1.0 / d)) {
    throw ConfigError(
        "rate study: grid too coarse for n_max; need m >= n_max^{1/d}");
  }

  const auto grid = grid_uniform(d, grid_m, opts.grid_atom_cap);

  RateStudyResult result;
  result.d = d;
  result.grid_m = grid_m;
  result.trials = trials;
  result.low_dim_flagged = d < 3;

  for (const int n : n_grid) {
    if (n < 1) throw ConfigError("rate study: n must be >= 1");
    double sum = 0.0;
    double sum_sq = 0.0;
    for (int t = 0; t < trials; ++t) {
      const auto sample = sample_uniform(
          d, n, derive_seed(seed, (static_cast<std::uint64_t>(n) << 20) + t));
      const double w1 = exact_w1(sample, grid, opts.w1).cost;
      sum += w1;
      sum_sq += w1 * w1;
    }
    RateStudyRow row;
    row.n = n;
    row.mean_w1 = sum / trials;
    row.std_w1 = trials > 1 ? std::sqrt(std::max(
                                  0.0, (sum_sq - sum * sum / trials) /
                                           (trials - 1)))
                            : 0.0;
    result.rows.push_back(row);
  }

  // least-squares slope of log(mean) on log(n)
  const long k = static_cast<long>(result.rows.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (const auto& row : result.rows) {
    const double x = std::log(double(row.n));
    const double y = std::log(row.mean_w1);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double denom = k * sxx - sx * sx;
  result.slope = denom != 0.0 ? (k * sxy - sx * sy) / denom : 0.0;
  return result;
}

double fit_c_hat(const RateStudyResult& study) {
  double c = 0.0;
  for (const auto& row : study.rows) {
    c = std::max(c, row.mean_w1 * std::pow(double(row.n), 1.0 / study.d) /
                        std::sqrt(double(study.d)));
  }
  return c;
}

}  // namespace liperm::ot
