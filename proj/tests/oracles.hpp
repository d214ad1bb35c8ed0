// Test-only oracles, implemented independently of the library code paths
// they check. Nothing in here may call the functions under test.
#ifndef BIMKIT_TESTS_ORACLES_HPP
#define BIMKIT_TESTS_ORACLES_HPP

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "bimkit/rng.hpp"

namespace oracles {

inline constexpr double kEarthRadius = 6371000.0;
inline constexpr double kPi = 3.14159265358979323846;

// Great-circle distance via the spherical law of cosines (the implementation
// under test uses the haversine form). Loses precision below ~1 km, so use
// distance_atan2_m where sub-meter agreement matters.
inline double distance_slc_m(double lat1, double lon1, double lat2, double lon2) {
  const double p1 = lat1 * kPi / 180.0;
  const double p2 = lat2 * kPi / 180.0;
  const double dl = (lon2 - lon1) * kPi / 180.0;
  double c = std::sin(p1) * std::sin(p2) + std::cos(p1) * std::cos(p2) * std::cos(dl);
  c = std::min(1.0, std::max(-1.0, c));
  return kEarthRadius * std::acos(c);
}

// Great-circle distance in the atan2 form (Vincenty on the sphere): robust
// at every separation and independent of the haversine code path.
inline double distance_atan2_m(double lat1, double lon1, double lat2, double lon2) {
  const double p1 = lat1 * kPi / 180.0;
  const double p2 = lat2 * kPi / 180.0;
  const double dl = (lon2 - lon1) * kPi / 180.0;
  const double y = std::sqrt(std::pow(std::cos(p2) * std::sin(dl), 2) +
                             std::pow(std::cos(p1) * std::sin(p2) -
                                          std::sin(p1) * std::cos(p2) * std::cos(dl),
                                      2));
  const double x = std::sin(p1) * std::sin(p2) +
                   std::cos(p1) * std::cos(p2) * std::cos(dl);
  return kEarthRadius * std::atan2(y, x);
}

// Dense linear solve by Gauss-Jordan elimination with full pivoting
// (independent of the partial-pivot forward/back-substitution in src).
inline std::vector<double> solve_full_pivot(std::vector<std::vector<double>> a,
                                            std::vector<double> b) {
  const size_t n = b.size();
  std::vector<size_t> col_of(n);
  for (size_t i = 0; i < n; ++i) col_of[i] = i;

  for (size_t step = 0; step < n; ++step) {
    size_t pr = step, pc = step;
    double best = 0.0;
    for (size_t r = step; r < n; ++r)
      for (size_t c = step; c < n; ++c)
        if (std::abs(a[r][c]) > best) {
          best = std::abs(a[r][c]);
          pr = r;
          pc = c;
        }
    if (best < 1e-14) throw std::runtime_error("oracle solve: singular");
    std::swap(a[step], a[pr]);
    std::swap(b[step], b[pr]);
    for (size_t r = 0; r < n; ++r) std::swap(a[r][step], a[r][pc]);
    std::swap(col_of[step], col_of[pc]);

    const double pivot = a[step][step];
    for (size_t c = 0; c < n; ++c) a[step][c] /= pivot;
    b[step] /= pivot;
    for (size_t r = 0; r < n; ++r) {
      if (r == step) continue;
      const double f = a[r][step];
      if (f == 0.0) continue;
      for (size_t c = 0; c < n; ++c) a[r][c] -= f * a[step][c];
      b[r] -= f * b[step];
    }
  }
  std::vector<double> x(n);
  for (size_t i = 0; i < n; ++i) x[col_of[i]] = b[i];
  return x;
}

// Exponential-family semivariance, written out from the closed form.
inline double gamma_exponential(double nugget, double sill, double range, double h) {
  if (h == 0.0) return 0.0;
  return nugget + (sill - nugget) * (1.0 - std::exp(-3.0 * h / range));
}

struct OracleKrige {
  double mean = 0.0;
  double variance = 0.0;
  std::vector<double> weights;
};

// Ordinary kriging by direct assembly and the full-pivot solve above.
// `gamma(i, j)` indices: 0..n-1 neighbors, n = target.
template <typename GammaFn>
OracleKrige krige_reference(size_t n, GammaFn gamma,
                            const std::vector<double>& values) {
  std::vector<std::vector<double>> a(n + 1, std::vector<double>(n + 1, 0.0));
  std::vector<double> b(n + 1, 0.0);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < n; ++j) a[i][j] = i == j ? 0.0 : gamma(i, j);
    a[i][n] = 1.0;
    a[n][i] = 1.0;
    b[i] = gamma(i, n);
  }
  b[n] = 1.0;
  const auto x = solve_full_pivot(std::move(a), std::move(b));

  OracleKrige out;
  out.weights.assign(x.begin(), x.begin() + n);
  out.variance = x[n];
  for (size_t i = 0; i < n; ++i) {
    out.mean += out.weights[i] * values[i];
    out.variance += out.weights[i] * gamma(i, n);
  }
  return out;
}

// Gaussian random field with an exponential covariance plus nugget noise,
// generated by sequential simulation: points are visited in order and each
// value is drawn from its exact conditional given all previously simulated
// ones (maintained through a growing Cholesky factor).
class SequentialFieldSimulator {
 public:
  SequentialFieldSimulator(double nugget, double sill, double range_m)
      : nugget_(nugget), sill_(sill), range_(range_m) {}

  // locations as (north_m, east_m) pairs on a flat patch.
  std::vector<double> simulate(const std::vector<std::pair<double, double>>& pts,
                               uint64_t seed) const {
    const size_t n = pts.size();
    bimkit::Rng rng(seed);
    std::vector<std::vector<double>> chol;  // lower-triangular rows
    std::vector<double> white;              // solves L w = c for conditioning
    std::vector<double> values(n, 0.0);

    auto cov = [&](size_t i, size_t j) {
      if (i == j) return sill_;
      const double dn = pts[i].first - pts[j].first;
      const double de = pts[i].second - pts[j].second;
      const double h = std::sqrt(dn * dn + de * de);
      return (sill_ - nugget_) * std::exp(-3.0 * h / range_);
    };

    for (size_t k = 0; k < n; ++k) {
      // Solve L y = c where c are covariances with the previous points.
      std::vector<double> y(k, 0.0);
      for (size_t i = 0; i < k; ++i) {
        double acc = cov(k, i);
        for (size_t j = 0; j < i; ++j) acc -= chol[i][j] * y[j];
        y[i] = acc / chol[i][i];
      }
      double cond_var = cov(k, k);
      for (size_t i = 0; i < k; ++i) cond_var -= y[i] * y[i];
      cond_var = std::max(cond_var, 1e-12);

      double cond_mean = 0.0;
      for (size_t i = 0; i < k; ++i) cond_mean += y[i] * white[i];

      const double draw = rng.normal();
      values[k] = cond_mean + std::sqrt(cond_var) * draw;
      white.push_back(draw);
      y.push_back(std::sqrt(cond_var));
      chol.push_back(std::move(y));
    }
    return values;
  }

 private:
  double nugget_;
  double sill_;
  double range_;
};

}  // namespace oracles

#endif
