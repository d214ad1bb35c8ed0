#include "bimkit/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace bimkit {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kDegToRad = kPi / 180.0;
}  // namespace

double haversine_m(const Geocode& a, const Geocode& b) {
  const double lat1 = a.lat * kDegToRad;
  const double lat2 = b.lat * kDegToRad;
  const double dlat = (b.lat - a.lat) * kDegToRad;
  const double dlon = (b.lon - a.lon) * kDegToRad;
  const double sl = std::sin(dlat / 2.0);
  const double so = std::sin(dlon / 2.0);
  const double h = sl * sl + std::cos(lat1) * std::cos(lat2) * so * so;
  return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(h)));
}

LocalOffsetKm local_offset_km(const Geocode& origin, const Geocode& p) {
  LocalOffsetKm off;
  off.north = (p.lat - origin.lat) * kDegToRad * kEarthRadiusM / 1000.0;
  off.east = (p.lon - origin.lon) * kDegToRad *
             std::cos(origin.lat * kDegToRad) * kEarthRadiusM / 1000.0;
  return off;
}

NeighborContext nearest_neighbors(const std::vector<SpatialSample>& samples,
                                  const Geocode& target, int k) {
  if (samples.empty()) throw Error("nearest_neighbors: empty sample set");
  if (k < 1) throw Error("nearest_neighbors: k must be >= 1");

  std::vector<std::pair<double, size_t>> by_dist;
  by_dist.reserve(samples.size());
  for (size_t i = 0; i < samples.size(); ++i)
    by_dist.emplace_back(haversine_m(samples[i].location, target), i);

  const size_t take = std::min<size_t>(static_cast<size_t>(k), samples.size());
  std::partial_sort(by_dist.begin(), by_dist.begin() + take, by_dist.end());

  NeighborContext ctx;
  ctx.target = target;
  ctx.neighbors.reserve(take);
  for (size_t i = 0; i < take; ++i) ctx.neighbors.push_back(samples[by_dist[i].second]);
  return ctx;
}

SpatialIndex::SpatialIndex(std::vector<Geocode> points)
    : points_(std::move(points)) {
  if (points_.empty()) {
    rows_ = cols_ = 1;
    cell_deg_ = 1.0;
    buckets_.resize(1);
    return;
  }
  double min_lat = points_[0].lat, max_lat = points_[0].lat;
  double min_lon = points_[0].lon, max_lon = points_[0].lon;
  for (const auto& p : points_) {
    min_lat = std::min(min_lat, p.lat);
    max_lat = std::max(max_lat, p.lat);
    min_lon = std::min(min_lon, p.lon);
    max_lon = std::max(max_lon, p.lon);
  }
  min_lat_ = min_lat;
  min_lon_ = min_lon;
  const double span = std::max(max_lat - min_lat, max_lon - min_lon);
  // Aim for a few points per bucket.
  const double target_cells = std::sqrt(static_cast<double>(points_.size()) / 2.0);
  cell_deg_ = std::max(span / std::max(1.0, target_cells), 1e-9);
  rows_ = static_cast<int>((max_lat - min_lat) / cell_deg_) + 1;
  cols_ = static_cast<int>((max_lon - min_lon) / cell_deg_) + 1;
  buckets_.resize(static_cast<size_t>(rows_) * cols_);
  for (size_t i = 0; i < points_.size(); ++i) {
    const int r = static_cast<int>((points_[i].lat - min_lat_) / cell_deg_);
    const int c = static_cast<int>((points_[i].lon - min_lon_) / cell_deg_);
    bucket(std::min(r, rows_ - 1), std::min(c, cols_ - 1)).push_back(i);
  }
  const double extreme_lat =
      std::max(std::abs(min_lat), std::abs(max_lat)) + cell_deg_;
  cos_band_ = std::cos(std::min(89.9, extreme_lat) * kDegToRad);
}

std::vector<size_t>& SpatialIndex::bucket(int row, int col) {
  return buckets_[static_cast<size_t>(row) * cols_ + col];
}

const std::vector<size_t>* SpatialIndex::bucket_if_exists(int row, int col) const {
  if (row < 0 || row >= rows_ || col < 0 || col >= cols_) return nullptr;
  return &buckets_[static_cast<size_t>(row) * cols_ + col];
}

std::vector<size_t> SpatialIndex::knn(const Geocode& target, int k) const {
  if (points_.empty()) throw Error("SpatialIndex::knn: empty index");
  if (k < 1) throw Error("SpatialIndex::knn: k must be >= 1");
  const size_t want = std::min<size_t>(static_cast<size_t>(k), points_.size());

  // Start from the grid cell nearest the target. Clamping is sound: the
  // per-dimension cell distance from any bucket to the target can only be
  // underestimated, so the ring lower bound below stays a lower bound.
  const int r0 = std::clamp(
      static_cast<int>(std::floor((target.lat - min_lat_) / cell_deg_)), 0,
      rows_ - 1);
  const int c0 = std::clamp(
      static_cast<int>(std::floor((target.lon - min_lon_) / cell_deg_)), 0,
      cols_ - 1);

  std::vector<std::pair<double, size_t>> best;  // (distance, index)
  auto scan_cell = [&](int r, int c) {
    if (const auto* cell = bucket_if_exists(r, c))
      for (size_t idx : *cell)
        best.emplace_back(haversine_m(points_[idx], target), idx);
  };

  const int max_ring = std::max(rows_, cols_);
  for (int ring = 0; ring <= max_ring; ++ring) {
    // A bucket in a ring >= 2 away differs by at least (ring - 1) whole
    // cells in lat or lon, which bounds its distance from below.
    if (best.size() >= want) {
      const double ring_min_m =
          std::max(0, ring - 1) * cell_deg_ * kDegToRad * kEarthRadiusM * cos_band_;
      std::nth_element(best.begin(), best.begin() + (want - 1), best.end());
      if (ring_min_m > best[want - 1].first) break;
    }
    if (ring == 0) {
      scan_cell(r0, c0);
      continue;
    }
    for (int dc = -ring; dc <= ring; ++dc) {
      scan_cell(r0 - ring, c0 + dc);
      scan_cell(r0 + ring, c0 + dc);
    }
    for (int dr = -ring + 1; dr <= ring - 1; ++dr) {
      scan_cell(r0 + dr, c0 - ring);
      scan_cell(r0 + dr, c0 + ring);
    }
  }

  std::sort(best.begin(), best.end());
  best.resize(std::min(best.size(), want));
  std::vector<size_t> out;
  out.reserve(best.size());
  for (const auto& [d, i] : best) out.push_back(i);
  return out;
}

double SpatialIndex::nearest_distance_m(const Geocode& target) const {
  if (points_.empty()) return std::numeric_limits<double>::infinity();
  const auto nn = knn(target, 1);
  return haversine_m(points_[nn[0]], target);
}

double mean_nearest_neighbor_spacing_m(const std::vector<Geocode>& points) {
  if (points.size() < 2)
    throw Error("mean_nearest_neighbor_spacing_m: need at least 2 points");
  SpatialIndex index(points);
  double total = 0.0;
  for (const auto& p : points) {
    const auto nn = index.knn(p, 2);  // nearest is the point itself
    double d = haversine_m(points[nn[0]], p);
    if (d == 0.0 && nn.size() > 1) d = haversine_m(points[nn[1]], p);
    total += d;
  }
  return total / static_cast<double>(points.size());
}

}  // namespace bimkit
