// Quick solver benchmark; not part of the test suite.
#include <chrono>
#include <cstdio>

#include "liperm/ot.hpp"
#include "liperm/rate_study.hpp"

using namespace liperm;

int main() {
  using clock = std::chrono::steady_clock;

  {
    const auto grid = ot::grid_uniform(2, 141);  // 19881 atoms
    const auto emp = ot::sample_uniform(2, 256, 1);
    const auto t0 = clock::now();
    const auto res = ot::exact_w1(grid, emp);
    const double sec = std::chrono::duration<double>(clock::now() - t0).count();
    std::printf("grid 141^2 vs 256: cost=%.6f  %.2fs\n", res.cost, sec);
  }
  {
    const auto grid = ot::grid_uniform(3, 27);  // 19683 atoms
    const auto emp = ot::sample_uniform(3, 256, 2);
    const auto t0 = clock::now();
    const auto res = ot::exact_w1(grid, emp);
    const double sec = std::chrono::duration<double>(clock::now() - t0).count();
    std::printf("grid 27^3 vs 256: cost=%.6f  %.2fs\n", res.cost, sec);
  }
  {
    const auto a = ot::sample_uniform(2, 2048, 3);
    const auto b = ot::sample_uniform(2, 2048, 4);
    const auto t0 = clock::now();
    const auto res = ot::exact_w1(a, b);
    const double sec = std::chrono::duration<double>(clock::now() - t0).count();
    std::printf("2048 vs 2048: cost=%.6f  %.2fs\n", res.cost, sec);
  }
  {
    const auto grid = ot::grid_uniform(3, 22);  // 10648 atoms, rate study size
    const auto emp = ot::sample_uniform(3, 256, 5);
    const auto t0 = clock::now();
    const auto res = ot::exact_w1(grid, emp);
    const double sec = std::chrono::duration<double>(clock::now() - t0).count();
    std::printf("grid 22^3 vs 256: cost=%.6f  %.2fs\n", res.cost, sec);
  }
  return 0;
}
