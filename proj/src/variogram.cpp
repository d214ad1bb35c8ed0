#include "bimkit/variogram.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>

namespace bimkit {

EmpiricalVariogram empirical_variogram(const std::vector<SpatialSample>& samples,
                                       int n_bins, double max_lag_m) {
  if (samples.size() < 2)
    throw Error("empirical_variogram: need at least 2 samples");
  if (n_bins < 1) throw Error("empirical_variogram: n_bins must be >= 1");
  if (!(max_lag_m > 0.0)) throw Error("empirical_variogram: max_lag must be > 0");

  const double width = max_lag_m / n_bins;
  std::vector<double> sq_sum(n_bins, 0.0);
  std::vector<double> lag_sum(n_bins, 0.0);
  std::vector<size_t> count(n_bins, 0);

  for (size_t i = 0; i + 1 < samples.size(); ++i) {
    for (size_t j = i + 1; j < samples.size(); ++j) {
      const double h = haversine_m(samples[i].location, samples[j].location);
      if (h > max_lag_m) continue;
      int b = static_cast<int>(h / width);
      if (b >= n_bins) b = n_bins - 1;  // h == max_lag lands in the last bin
      const double dz = samples[i].value - samples[j].value;
      sq_sum[b] += dz * dz;
      lag_sum[b] += h;
      ++count[b];
    }
  }

  EmpiricalVariogram emp;
  emp.max_lag = max_lag_m;
  for (int b = 0; b < n_bins; ++b) {
    if (count[b] == 0) continue;
    VariogramBin bin;
    bin.mean_lag = lag_sum[b] / static_cast<double>(count[b]);
    bin.semivariance = sq_sum[b] / (2.0 * static_cast<double>(count[b]));
    bin.pair_count = count[b];
    emp.bins.push_back(bin);
  }
  if (emp.bins.empty())
    throw Error("empirical_variogram: no pairs within max_lag");
  return emp;
}

std::string to_string(VariogramFamily f) {
  switch (f) {
    case VariogramFamily::Exponential: return "exponential";
    case VariogramFamily::Gaussian: return "gaussian";
    case VariogramFamily::Spherical: return "spherical";
  }
  return "exponential";
}

VariogramFamily variogram_family_from_string(const std::string& s) {
  if (s == "exponential") return VariogramFamily::Exponential;
  if (s == "gaussian") return VariogramFamily::Gaussian;
  if (s == "spherical") return VariogramFamily::Spherical;
  throw Error("unknown variogram family: " + s);
}

double variogram_value(const VariogramModel& model, double h_m) {
  if (h_m < 0.0) throw Error("variogram_value: negative lag");
  if (h_m == 0.0) return 0.0;
  const double partial = model.sill - model.nugget;
  const double r = model.range_m;
  switch (model.family) {
    case VariogramFamily::Exponential:
      return model.nugget + partial * (1.0 - std::exp(-3.0 * h_m / r));
    case VariogramFamily::Gaussian:
      return model.nugget + partial * (1.0 - std::exp(-3.0 * h_m * h_m / (r * r)));
    case VariogramFamily::Spherical: {
      if (h_m >= r) return model.sill;
      const double u = h_m / r;
      return model.nugget + partial * (1.5 * u - 0.5 * u * u * u);
    }
  }
  return model.sill;
}

namespace {

// Parameter vector is (nugget, partial sill, range). Projection keeps the
// fit inside the constraint set; the upper caps bound the search to the
// identifiable region (a range far beyond max_lag and an unbounded sill are
// exchangeable along a flat ridge of the objective).
struct FitObjective {
  const EmpiricalVariogram& emp;
  VariogramFamily family;
  double min_range;
  double max_range;
  double gamma_cap;

  std::array<double, 3> project(std::array<double, 3> p) const {
    p[0] = std::clamp(p[0], 0.0, gamma_cap);
    p[1] = std::clamp(p[1], 0.0, 2.0 * gamma_cap);
    p[2] = std::clamp(p[2], min_range, max_range);
    return p;
  }

  double operator()(std::array<double, 3> p) const {
    p = project(p);
    VariogramModel m{family, p[0], p[0] + p[1], p[2], false};
    double sse = 0.0;
    for (const auto& bin : emp.bins) {
      const double diff = variogram_value(m, bin.mean_lag) - bin.semivariance;
      sse += static_cast<double>(bin.pair_count) * diff * diff;
    }
    return sse;
  }
};

std::array<double, 3> nelder_mead(const FitObjective& f,
                                  std::array<double, 3> start,
                                  std::array<double, 3> step, int max_iter) {
  constexpr int n = 3;
  std::array<std::array<double, 3>, n + 1> simplex;
  std::array<double, n + 1> value;
  simplex[0] = start;
  for (int i = 0; i < n; ++i) {
    simplex[i + 1] = start;
    simplex[i + 1][i] += step[i];
  }
  for (int i = 0; i <= n; ++i) value[i] = f(simplex[i]);

  auto order = [&] {
    std::array<int, n + 1> idx{0, 1, 2, 3};
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return value[a] < value[b]; });
    std::array<std::array<double, 3>, n + 1> s2;
    std::array<double, n + 1> v2;
    for (int i = 0; i <= n; ++i) {
      s2[i] = simplex[idx[i]];
      v2[i] = value[idx[i]];
    }
    simplex = s2;
    value = v2;
  };

  for (int iter = 0; iter < max_iter; ++iter) {
    order();
    if (value[n] - value[0] < 1e-14 * (1.0 + std::abs(value[0]))) break;

    std::array<double, 3> centroid{0, 0, 0};
    for (int i = 0; i < n; ++i)
      for (int d = 0; d < 3; ++d) centroid[d] += simplex[i][d] / n;

    auto blend = [&](double coef) {
      std::array<double, 3> p;
      for (int d = 0; d < 3; ++d)
        p[d] = centroid[d] + coef * (simplex[n][d] - centroid[d]);
      return p;
    };

    const auto reflected = blend(-1.0);
    const double fr = f(reflected);
    if (fr < value[0]) {
      const auto expanded = blend(-2.0);
      const double fe = f(expanded);
      if (fe < fr) {
        simplex[n] = expanded;
        value[n] = fe;
      } else {
        simplex[n] = reflected;
        value[n] = fr;
      }
    } else if (fr < value[n - 1]) {
      simplex[n] = reflected;
      value[n] = fr;
    } else {
      const auto contracted = blend(0.5);
      const double fc = f(contracted);
      if (fc < value[n]) {
        simplex[n] = contracted;
        value[n] = fc;
      } else {
        for (int i = 1; i <= n; ++i) {
          for (int d = 0; d < 3; ++d)
            simplex[i][d] = simplex[0][d] + 0.5 * (simplex[i][d] - simplex[0][d]);
          value[i] = f(simplex[i]);
        }
      }
    }
  }
  order();
  return simplex[0];
}

}  // namespace

VariogramModel fit_variogram(const EmpiricalVariogram& emp, VariogramFamily family) {
  if (emp.bins.size() < 3)
    throw Error("fit_variogram: need at least 3 populated bins, have " +
                std::to_string(emp.bins.size()));

  double gamma_max = 0.0;
  for (const auto& bin : emp.bins) gamma_max = std::max(gamma_max, bin.semivariance);

  if (gamma_max <= 0.0) {
    VariogramModel m{family, 0.0, 0.0, emp.max_lag, true};
    return m;
  }

  const double min_range = 1e-6 * emp.max_lag;
  FitObjective objective{emp, family, min_range, 3.0 * emp.max_lag,
                         2.0 * gamma_max};

  // Coarse grid over (nugget, partial sill, range).
  std::array<double, 3> best{0.0, gamma_max, emp.max_lag / 2.0};
  double best_sse = objective(best);
  for (int in = 0; in <= 10; ++in) {
    const double nugget = gamma_max * in / 10.0;
    for (int is = 0; is <= 12; ++is) {
      const double partial = 1.5 * gamma_max * is / 12.0;
      for (int ir = 1; ir <= 15; ++ir) {
        const double range = emp.max_lag * 1.5 * ir / 15.0;
        const std::array<double, 3> p{nugget, partial, range};
        const double sse = objective(p);
        if (sse < best_sse) {
          best_sse = sse;
          best = p;
        }
      }
    }
  }

  const std::array<double, 3> step{std::max(0.05 * gamma_max, 1e-12),
                                   std::max(0.1 * gamma_max, 1e-12),
                                   0.05 * emp.max_lag};
  const auto refined = objective.project(nelder_mead(objective, best, step, 400));

  VariogramModel model;
  model.family = family;
  model.nugget = refined[0];
  model.sill = std::max(refined[0] + refined[1], std::max(refined[0], 1e-12));
  model.range_m = refined[2];
  model.degenerate = false;
  return model;
}

}  // namespace bimkit
