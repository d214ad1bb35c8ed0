#include "bimkit/kriging.hpp"

#include <algorithm>
#include <cmath>

namespace bimkit {

namespace {

// Gaussian elimination with partial pivoting; returns false on a singular
// pivot. A is n x n row-major, b is overwritten with the solution.
bool solve_dense(std::vector<double> a, std::vector<double>& b, size_t n) {
  double scale = 0.0;
  for (double v : a) scale = std::max(scale, std::abs(v));
  const double tiny = std::max(scale, 1.0) * 1e-13;

  for (size_t col = 0; col < n; ++col) {
    size_t pivot = col;
    for (size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r * n + col]) > std::abs(a[pivot * n + col])) pivot = r;
    if (std::abs(a[pivot * n + col]) < tiny) return false;
    if (pivot != col) {
      for (size_t c = 0; c < n; ++c) std::swap(a[col * n + c], a[pivot * n + c]);
      std::swap(b[col], b[pivot]);
    }
    for (size_t r = col + 1; r < n; ++r) {
      const double f = a[r * n + col] / a[col * n + col];
      if (f == 0.0) continue;
      for (size_t c = col; c < n; ++c) a[r * n + c] -= f * a[col * n + c];
      b[r] -= f * b[col];
    }
  }
  for (size_t i = n; i-- > 0;) {
    double sum = b[i];
    for (size_t c = i + 1; c < n; ++c) sum -= a[i * n + c] * b[c];
    b[i] = sum / a[i * n + i];
  }
  return true;
}

struct SystemResult {
  bool ok = false;
  std::vector<double> solution;  // n weights + Lagrange multiplier
  std::vector<double> rhs_gamma; // gamma(d_i0) per neighbor
};

SystemResult solve_kriging_system(const VariogramModel& model,
                                  const Geocode& target,
                                  const std::vector<SpatialSample>& neighbors,
                                  bool jitter) {
  const size_t n = neighbors.size();
  const size_t dim = n + 1;
  std::vector<double> a(dim * dim, 0.0);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      const double g = variogram_value(
          model, haversine_m(neighbors[i].location, neighbors[j].location));
      a[i * dim + j] = g;
      a[j * dim + i] = g;
    }
    a[i * dim + n] = 1.0;
    a[n * dim + i] = 1.0;
    if (jitter) a[i * dim + i] += 1e-10;
  }

  SystemResult res;
  res.rhs_gamma.resize(n);
  std::vector<double> b(dim);
  for (size_t i = 0; i < n; ++i) {
    res.rhs_gamma[i] = variogram_value(
        model, haversine_m(neighbors[i].location, target));
    b[i] = res.rhs_gamma[i];
  }
  b[n] = 1.0;

  res.ok = solve_dense(std::move(a), b, dim);
  if (res.ok) res.solution = std::move(b);
  return res;
}

// Averages the values of neighbors that share a location (within 1e-6 m),
// keeping first-occurrence order.
std::vector<SpatialSample> collapse_duplicates(
    const std::vector<SpatialSample>& neighbors) {
  std::vector<SpatialSample> out;
  std::vector<size_t> counts;
  for (const auto& s : neighbors) {
    bool merged = false;
    for (size_t i = 0; i < out.size(); ++i) {
      if (haversine_m(out[i].location, s.location) < 1e-6) {
        out[i].value += (s.value - out[i].value) / static_cast<double>(counts[i] + 1);
        ++counts[i];
        merged = true;
        break;
      }
    }
    if (!merged) {
      out.push_back(s);
      counts.push_back(1);
    }
  }
  return out;
}

KrigingPrediction prediction_from(const SystemResult& sys,
                                  const std::vector<SpatialSample>& neighbors) {
  const size_t n = neighbors.size();
  KrigingPrediction pred;
  pred.weights.assign(sys.solution.begin(), sys.solution.begin() + n);
  const double mu = sys.solution[n];
  pred.mean = 0.0;
  pred.variance = mu;
  for (size_t i = 0; i < n; ++i) {
    pred.mean += pred.weights[i] * neighbors[i].value;
    pred.variance += pred.weights[i] * sys.rhs_gamma[i];
  }
  pred.variance = std::max(0.0, pred.variance);
  return pred;
}

}  // namespace

KrigingPrediction krige(const VariogramModel& model, const NeighborContext& ctx) {
  if (ctx.neighbors.empty()) throw Error("krige: no neighbors");
  if (!(model.sill >= model.nugget) || model.nugget < 0.0 || !(model.range_m > 0.0))
    throw Error("krige: invalid variogram model");

  auto attempt = [&](const std::vector<SpatialSample>& neigh)
      -> std::optional<KrigingPrediction> {
    auto sys = solve_kriging_system(model, ctx.target, neigh, false);
    if (!sys.ok) sys = solve_kriging_system(model, ctx.target, neigh, true);
    if (!sys.ok) return std::nullopt;
    return prediction_from(sys, neigh);
  };

  if (auto pred = attempt(ctx.neighbors)) return *pred;

  const auto collapsed = collapse_duplicates(ctx.neighbors);
  if (collapsed.size() < ctx.neighbors.size())
    if (auto pred = attempt(collapsed)) return *pred;

  throw Error("krige: singular kriging system");
}

}  // namespace bimkit
