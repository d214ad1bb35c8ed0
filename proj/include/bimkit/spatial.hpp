#ifndef BIMKIT_SPATIAL_HPP
#define BIMKIT_SPATIAL_HPP

#include <cstddef>
#include <vector>

#include "bimkit/inventory.hpp"

namespace bimkit {

inline constexpr double kEarthRadiusM = 6371000.0;

// Great-circle distance in meters (haversine).
double haversine_m(const Geocode& a, const Geocode& b);

// Local equirectangular displacement of `p` relative to `origin`, in km.
// Distortion stays below 0.5% for city-scale extents (< 100 km), which is
// why no projection library is involved.
struct LocalOffsetKm {
  double north = 0.0;
  double east = 0.0;
};
LocalOffsetKm local_offset_km(const Geocode& origin, const Geocode& p);

struct SpatialSample {
  Geocode location;
  double value = 0.0;
};

// Neighbors of a prediction target, sorted by ascending haversine distance.
// Ties keep sample insertion order.
struct NeighborContext {
  Geocode target;
  std::vector<SpatialSample> neighbors;
};

// Brute-force k nearest neighbors. Throws Error on an empty sample set or
// k < 1. Returns min(k, |samples|) neighbors.
NeighborContext nearest_neighbors(const std::vector<SpatialSample>& samples,
                                  const Geocode& target, int k);

// Uniform lat/lon bucket grid for repeated k-NN queries over a fixed point
// set. Query results are identical to nearest_neighbors ordering
// (distance, then insertion index). Not suitable for datasets spanning the
// antimeridian or the poles; fine for city/regional extents.
class SpatialIndex {
 public:
  explicit SpatialIndex(std::vector<Geocode> points);

  // Indices of the min(k, n) nearest points, ascending (distance, index).
  std::vector<size_t> knn(const Geocode& target, int k) const;

  // Distance in meters to the nearest indexed point; infinity when empty.
  double nearest_distance_m(const Geocode& target) const;

  size_t size() const { return points_.size(); }
  const std::vector<Geocode>& points() const { return points_; }

 private:
  std::vector<size_t>& bucket(int row, int col);
  const std::vector<size_t>* bucket_if_exists(int row, int col) const;

  std::vector<Geocode> points_;
  std::vector<std::vector<size_t>> buckets_;
  double cell_deg_ = 0.0;
  double min_lat_ = 0.0, min_lon_ = 0.0;
  int rows_ = 0, cols_ = 0;
  double cos_band_ = 1.0;  // min |cos(lat)| over the extent, for ring bounds
};

// Mean over points of the distance to their nearest other point. Requires
// at least 2 points.
double mean_nearest_neighbor_spacing_m(const std::vector<Geocode>& points);

}  // namespace bimkit

#endif
