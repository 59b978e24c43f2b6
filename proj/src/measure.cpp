#include "liperm/measure.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "liperm/io_util.hpp"

namespace liperm::ot {

namespace {
constexpr double kWeightSumTol = 1e-12;
}

DiscreteMeasure::DiscreteMeasure(MatrixXd points, VectorXd weights)
    : points_(std::move(points)), weights_(std::move(weights)) {
  if (points_.cols() != weights_.size()) {
    throw ConfigError("DiscreteMeasure: atom/weight count mismatch");
  }
  if (points_.cols() == 0) {
    throw ConfigError("DiscreteMeasure: empty measure");
  }
  if ((weights_.array() < 0.0).any()) {
    throw ConfigError("DiscreteMeasure: negative weight");
  }
  const double total = weights_.sum();
  if (std::abs(total - 1.0) > kWeightSumTol) {
    throw ConfigError("DiscreteMeasure: weights sum to " +
                      std::to_string(total) + ", expected 1");
  }
  if ((points_.array() < 0.0).any() || (points_.array() > 1.0).any()) {
    throw ConfigError(
        "DiscreteMeasure: coordinate outside [0,1]; clamp explicitly if "
        "intended");
  }
}

DiscreteMeasure DiscreteMeasure::dirac(const VectorXd& point) {
  MatrixXd pts(point.size(), 1);
  pts.col(0) = point;
  return {std::move(pts), VectorXd::Ones(1)};
}

DiscreteMeasure DiscreteMeasure::uniform_atoms(MatrixXd points) {
  const long n = points.cols();
  if (n == 0) throw ConfigError("DiscreteMeasure: empty measure");
  return {std::move(points), VectorXd::Constant(n, 1.0 / double(n))};
}

DiscreteMeasure DiscreteMeasure::deduplicated(double tol) const {
  const int n = size();
  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    for (int k = 0; k < dim(); ++k) {
      if (points_(k, a) != points_(k, b)) return points_(k, a) < points_(k, b);
    }
    return false;
  });

  std::vector<int> rep;  // representative original index per merged atom
  std::vector<double> w;
  for (int idx : order) {
    if (!rep.empty()) {
      const int r = rep.back();
      if ((points_.col(idx) - points_.col(r)).norm() <= tol) {
        w.back() += weights_[idx];
        continue;
      }
    }
    rep.push_back(idx);
    w.push_back(weights_[idx]);
  }

  MatrixXd pts(dim(), static_cast<long>(rep.size()));
  VectorXd ws(static_cast<long>(rep.size()));
  for (size_t i = 0; i < rep.size(); ++i) {
    pts.col(static_cast<long>(i)) = points_.col(rep[i]);
    ws[static_cast<long>(i)] = w[i];
  }
  // Renormalize away accumulated rounding so the invariant holds exactly.
  ws /= ws.sum();
  return {std::move(pts), std::move(ws)};
}

DiscreteMeasure DiscreteMeasure::subsample(int k, Rng& rng) const {
  if (k <= 0) throw ConfigError("subsample: k must be positive");
  VectorXd cdf(size());
  double acc = 0.0;
  for (int i = 0; i < size(); ++i) {
    acc += weights_[i];
    cdf[i] = acc;
  }
  MatrixXd pts(dim(), k);
  for (int j = 0; j < k; ++j) {
    const double u = rng.uniform01() * acc;
    const double* begin = cdf.data();
    const double* it = std::lower_bound(begin, begin + size(), u);
    int idx = static_cast<int>(it - begin);
    if (idx >= size()) idx = size() - 1;
    pts.col(j) = points_.col(idx);
  }
  return uniform_atoms(std::move(pts));
}

void DiscreteMeasure::write_csv(std::ostream& os) const {
  os << "w";
  for (int k = 1; k <= dim(); ++k) os << ",x" << k;
  os << "\n";
  for (int i = 0; i < size(); ++i) {
    os << format_g17(weights_[i]);
    for (int k = 0; k < dim(); ++k) os << "," << format_g17(points_(k, i));
    os << "\n";
  }
}

void DiscreteMeasure::save_csv(const std::string& path) const {
  std::ostringstream buf;
  write_csv(buf);
  atomic_write_file(path, buf.str());
}

DiscreteMeasure DiscreteMeasure::read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("measure CSV: empty file");
  const auto header = split_csv_line(line);
  if (header.empty() || header[0] != "w") {
    throw ConfigError("measure CSV: expected header starting with 'w'");
  }
  const int d = static_cast<int>(header.size()) - 1;
  if (d < 1) throw ConfigError("measure CSV: no coordinate columns");

  std::vector<double> ws;
  std::vector<double> coords;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (static_cast<int>(cells.size()) != d + 1) {
      throw ConfigError("measure CSV: bad row width");
    }
    ws.push_back(std::stod(cells[0]));
    for (int k = 1; k <= d; ++k) coords.push_back(std::stod(cells[k]));
  }
  const long n = static_cast<long>(ws.size());
  if (n == 0) throw ConfigError("measure CSV: no atoms");
  MatrixXd pts(d, n);
  VectorXd weights(n);
  for (long i = 0; i < n; ++i) {
    weights[i] = ws[static_cast<size_t>(i)];
    for (int k = 0; k < d; ++k) {
      pts(k, i) = coords[static_cast<size_t>(i) * d + k];
    }
  }
  return {std::move(pts), std::move(weights)};
}

DiscreteMeasure DiscreteMeasure::load_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open " + path);
  return read_csv(is);
}

DiscreteMeasure grid_uniform(int d, int m, long atom_cap) {
  if (d < 1 || m < 1) throw ConfigError("grid_uniform: need d >= 1, m >= 1");
  double count = 1.0;
  for (int k = 0; k < d; ++k) count *= m;
  if (count > static_cast<double>(atom_cap)) {
    throw ResourceError("grid_uniform: m^d = " + std::to_string(count) +
                        " exceeds atom cap " + std::to_string(atom_cap));
  }
  const long n = static_cast<long>(count);
  MatrixXd pts(d, n);
  std::vector<int> idx(static_cast<size_t>(d), 0);
  for (long j = 0; j < n; ++j) {
    for (int k = 0; k < d; ++k) {
      pts(k, j) = (idx[static_cast<size_t>(k)] + 0.5) / double(m);
    }
    // odometer order, last axis fastest
    for (int k = d - 1; k >= 0; --k) {
      if (++idx[static_cast<size_t>(k)] < m) break;
      idx[static_cast<size_t>(k)] = 0;
    }
  }
  return DiscreteMeasure::uniform_atoms(std::move(pts));
}

DiscreteMeasure sample_uniform(int d, int n, std::uint64_t seed) {
  if (d < 1 || n < 1) throw ConfigError("sample_uniform: need d, n >= 1");
  Rng rng(seed);
  MatrixXd pts(d, n);
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k < d; ++k) pts(k, j) = rng.uniform01();
  }
  return DiscreteMeasure::uniform_atoms(std::move(pts));
}

DiscreteMeasure clamp_to_unit_box(const DiscreteMeasure& mu) {
  MatrixXd pts = mu.points().cwiseMax(0.0).cwiseMin(1.0);
  return {std::move(pts), mu.weights()};
}

}  // namespace liperm::ot
