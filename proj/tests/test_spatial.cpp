#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>

#include "bimkit/rng.hpp"
#include "bimkit/spatial.hpp"
#include "oracles.hpp"

using namespace bimkit;

TEST_CASE("haversine basics") {
  const Geocode p{37.7749, -122.4194};
  CHECK(haversine_m(p, p) == 0.0);

  // Antipodal points: half the circumference.
  CHECK(haversine_m({0.0, 0.0}, {0.0, 180.0}) ==
        doctest::Approx(20015086.796).epsilon(1e-9));
  CHECK(haversine_m({45.0, 10.0}, {-45.0, -170.0}) ==
        doctest::Approx(20015086.796).epsilon(1e-9));

  // Symmetry and non-negativity on random pairs.
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const Geocode a{rng.uniform(-80, 80), rng.uniform(-179, 179)};
    const Geocode b{rng.uniform(-80, 80), rng.uniform(-179, 179)};
    const double dab = haversine_m(a, b);
    CHECK(dab >= 0.0);
    CHECK(dab == haversine_m(b, a));
  }
}

TEST_CASE("haversine matches spherical-law-of-cosines oracle") {
  // Value frozen from the oracle computed ahead of the implementation.
  CHECK(oracles::distance_slc_m(37.7749, -122.4194, 37.8044, -122.2712) ==
        doctest::Approx(13429.625334).epsilon(1e-9));
  CHECK(std::abs(haversine_m({37.7749, -122.4194}, {37.8044, -122.2712}) -
                 13429.625334) < 0.1);

  Rng rng(11);
  for (int i = 0; i < 100; ++i) {
    const Geocode a{rng.uniform(-60, 60), rng.uniform(-120, 120)};
    const Geocode b{a.lat + rng.uniform(-0.5, 0.5), a.lon + rng.uniform(-0.5, 0.5)};
    const double ours = haversine_m(a, b);
    const double oracle = oracles::distance_slc_m(a.lat, a.lon, b.lat, b.lon);
    CHECK(std::abs(ours - oracle) < 0.1);
  }
}

TEST_CASE("local equirectangular offsets") {
  const Geocode origin{37.75, -122.25};
  // 1 km due north.
  const double dlat = 1000.0 / kEarthRadiusM * 180.0 / 3.14159265358979323846;
  const Geocode north{origin.lat + dlat, origin.lon};
  const auto off = local_offset_km(origin, north);
  CHECK(off.north == doctest::Approx(1.0).epsilon(0.001));
  CHECK(off.east == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
  // Haversine agrees with the offset magnitude within 0.1%.
  CHECK(haversine_m(origin, north) == doctest::Approx(1000.0).epsilon(0.001));

  const auto self = local_offset_km(origin, origin);
  CHECK(self.north == 0.0);
  CHECK(self.east == 0.0);
}

namespace {

// Independent brute-force oracle: full sort on (distance, insertion index).
std::vector<size_t> knn_oracle(const std::vector<SpatialSample>& samples,
                               const Geocode& target, int k) {
  std::vector<std::pair<double, size_t>> all;
  for (size_t i = 0; i < samples.size(); ++i)
    all.emplace_back(
        oracles::distance_slc_m(samples[i].location.lat, samples[i].location.lon,
                                target.lat, target.lon),
        i);
  std::sort(all.begin(), all.end());
  std::vector<size_t> idx;
  for (size_t i = 0; i < std::min<size_t>(k, all.size()); ++i)
    idx.push_back(all[i].second);
  return idx;
}

std::vector<SpatialSample> random_samples(int n, Rng& rng) {
  std::vector<SpatialSample> samples;
  for (int i = 0; i < n; ++i)
    samples.push_back({{37.0 + rng.uniform(0, 0.2), -122.0 + rng.uniform(0, 0.2)},
                       rng.uniform()});
  return samples;
}

}  // namespace

TEST_CASE("nearest_neighbors") {
  Rng rng(17);
  const auto samples = random_samples(50, rng);
  const Geocode target{37.1, -121.9};

  SUBCASE("errors") {
    CHECK_THROWS_AS(nearest_neighbors({}, target, 3), Error);
    CHECK_THROWS_AS(nearest_neighbors(samples, target, 0), Error);
  }
  SUBCASE("k >= n returns all, sorted ascending") {
    const auto ctx = nearest_neighbors(samples, target, 100);
    REQUIRE(ctx.neighbors.size() == samples.size());
    for (size_t i = 1; i < ctx.neighbors.size(); ++i)
      CHECK(haversine_m(ctx.neighbors[i - 1].location, target) <=
            haversine_m(ctx.neighbors[i].location, target));
  }
  SUBCASE("k = 1 matches exhaustive scan") {
    const auto ctx = nearest_neighbors(samples, target, 1);
    const auto oracle = knn_oracle(samples, target, 1);
    CHECK(ctx.neighbors[0].location == samples[oracle[0]].location);
  }
  SUBCASE("equidistant ties keep insertion order") {
    // Two samples symmetric east/west of the target at identical distance.
    std::vector<SpatialSample> pair{{{37.0, -122.01}, 1.0}, {{37.0, -121.99}, 2.0}};
    const auto ctx = nearest_neighbors(pair, {37.0, -122.0}, 2);
    CHECK(ctx.neighbors[0].value == 1.0);
    CHECK(ctx.neighbors[1].value == 2.0);
  }
}

TEST_CASE("spatial index agrees with brute force") {
  Rng rng(23);
  for (int trial = 0; trial < 5; ++trial) {
    const auto samples = random_samples(200 + static_cast<int>(rng.index(200)), rng);
    std::vector<Geocode> points;
    for (const auto& s : samples) points.push_back(s.location);
    const SpatialIndex index(points);

    for (int q = 0; q < 40; ++q) {
      // Mix of in-extent and out-of-extent targets.
      const Geocode target{37.0 + rng.uniform(-0.1, 0.35),
                           -122.0 + rng.uniform(-0.1, 0.35)};
      const int k = 1 + static_cast<int>(rng.index(20));
      const auto got = index.knn(target, k);
      const auto brute = nearest_neighbors(samples, target, k);
      REQUIRE(got.size() == brute.neighbors.size());
      for (size_t i = 0; i < got.size(); ++i)
        CHECK(samples[got[i]].location == brute.neighbors[i].location);
    }
  }
}

TEST_CASE("spatial index handles duplicates and tiny sets") {
  std::vector<Geocode> pts{{37, -122}, {37, -122}, {37.001, -122}};
  const SpatialIndex index(pts);
  const auto nn = index.knn({37, -122}, 3);
  REQUIRE(nn.size() == 3);
  CHECK(nn[0] == 0);  // ties by insertion index
  CHECK(nn[1] == 1);
  CHECK(nn[2] == 2);
  CHECK(index.nearest_distance_m({37, -122}) == 0.0);

  const SpatialIndex single(std::vector<Geocode>{{37, -122}});
  CHECK(single.knn({38, -121}, 5).size() == 1);
}

TEST_CASE("mean nearest neighbor spacing") {
  // Three collinear points 0.001 deg apart: spacing ~111 m each.
  std::vector<Geocode> pts{{37.0, -122.0}, {37.001, -122.0}, {37.002, -122.0}};
  const double spacing = mean_nearest_neighbor_spacing_m(pts);
  CHECK(spacing == doctest::Approx(111.2).epsilon(0.01));
  CHECK_THROWS_AS(mean_nearest_neighbor_spacing_m({{37, -122}}), Error);
}
