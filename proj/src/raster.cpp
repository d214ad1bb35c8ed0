#include "bimkit/raster.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "bimkit/kriging.hpp"
#include "bimkit/spatial.hpp"

namespace bimkit {

std::string to_string(SurfaceEngine e) {
  return e == SurfaceEngine::Idw ? "idw" : "kriging";
}

SurfaceEngine surface_engine_from_string(const std::string& s) {
  if (s == "idw") return SurfaceEngine::Idw;
  if (s == "kriging") return SurfaceEngine::Kriging;
  throw Error("unknown surface engine: " + s);
}

namespace {

std::vector<SpatialSample> collect_points(const Inventory& inv,
                                          const std::string& attribute) {
  const auto it = inv.schema().find(attribute);
  if (it == inv.schema().end())
    throw SchemaError("unknown attribute: " + attribute);
  if (it->second != AttributeKind::Numeric)
    throw Error("probability_surface needs a numeric attribute; '" + attribute +
                "' is categorical");
  std::vector<SpatialSample> points;
  for (const auto& rec : inv.records()) {
    if (!rec.geocode) continue;
    const auto attr = rec.attributes.find(attribute);
    if (attr == rec.attributes.end()) continue;
    points.push_back({*rec.geocode, std::get<NumericValue>(attr->second.value).value});
  }
  if (points.empty())
    throw Error("no geocoded records carry attribute '" + attribute + "'");
  return points;
}

BoundingBox default_bbox(const std::vector<SpatialSample>& points,
                         double cell_size) {
  BoundingBox box{points[0].location.lat, points[0].location.lat,
                  points[0].location.lon, points[0].location.lon};
  for (const auto& p : points) {
    box.min_lat = std::min(box.min_lat, p.location.lat);
    box.max_lat = std::max(box.max_lat, p.location.lat);
    box.min_lon = std::min(box.min_lon, p.location.lon);
    box.max_lon = std::max(box.max_lon, p.location.lon);
  }
  const double lat_pad = std::max(0.05 * (box.max_lat - box.min_lat), cell_size);
  const double lon_pad = std::max(0.05 * (box.max_lon - box.min_lon), cell_size);
  box.min_lat -= lat_pad;
  box.max_lat += lat_pad;
  box.min_lon -= lon_pad;
  box.max_lon += lon_pad;
  return box;
}

}  // namespace

RasterGrid probability_surface(const Inventory& inv, const std::string& attribute,
                               const SurfaceConfig& cfg) {
  if (!(cfg.cell_size_deg > 0.0)) throw Error("cell size must be > 0");
  const auto points = collect_points(inv, attribute);

  BoundingBox box = cfg.bbox ? *cfg.bbox : default_bbox(points, cfg.cell_size_deg);
  if (!(box.min_lat < box.max_lat) || !(box.min_lon < box.max_lon))
    throw Error("invalid bounding box");

  RasterGrid grid;
  grid.cell_size_deg = cfg.cell_size_deg;
  grid.nrows = std::max(
      1, static_cast<int>(std::ceil((box.max_lat - box.min_lat) / cfg.cell_size_deg -
                                    1e-9)));
  grid.ncols = std::max(
      1, static_cast<int>(std::ceil((box.max_lon - box.min_lon) / cfg.cell_size_deg -
                                    1e-9)));
  const double cells =
      static_cast<double>(grid.nrows) * static_cast<double>(grid.ncols);
  if (cells > 1e7)
    throw Error("grid of " + std::to_string(grid.nrows) + "x" +
                std::to_string(grid.ncols) + " cells exceeds the 1e7 budget");
  // Anchor north-west; derive the south/east edges from whole cells.
  grid.bbox.max_lat = box.max_lat;
  grid.bbox.min_lon = box.min_lon;
  grid.bbox.min_lat = box.max_lat - grid.nrows * cfg.cell_size_deg;
  grid.bbox.max_lon = box.min_lon + grid.ncols * cfg.cell_size_deg;
  grid.values.assign(static_cast<size_t>(grid.nrows) * grid.ncols,
                     RasterGrid::kNoData);

  std::vector<Geocode> locations;
  locations.reserve(points.size());
  for (const auto& p : points) locations.push_back(p.location);
  const SpatialIndex index(locations);

  double cutoff;
  if (cfg.cutoff_m)
    cutoff = *cfg.cutoff_m;
  else if (points.size() >= 2)
    cutoff = 2.0 * mean_nearest_neighbor_spacing_m(locations);
  else
    cutoff = std::numeric_limits<double>::infinity();
  if (!(cutoff > 0.0)) cutoff = std::numeric_limits<double>::infinity();

  std::optional<VariogramModel> model;
  if (cfg.engine == SurfaceEngine::Kriging) {
    model = fit_variogram_auto(points, cfg.family, cfg.variogram_bins, 0.0,
                               cfg.max_variogram_points, cfg.seed);
  }

  const int k = std::max(1, cfg.k);
  auto fill_row = [&](int row) {
    for (int col = 0; col < grid.ncols; ++col) {
      const Geocode center = grid.cell_center(row, col);
      const auto nn = index.knn(center, k);
      const double nearest = haversine_m(points[nn[0]].location, center);
      if (nearest > cutoff) continue;

      double value;
      if (cfg.engine == SurfaceEngine::Idw) {
        if (nearest < 1e-9) {
          value = points[nn[0]].value;
        } else {
          double wsum = 0.0, vsum = 0.0;
          for (size_t idx : nn) {
            const double d = haversine_m(points[idx].location, center);
            const double w = 1.0 / std::pow(d, cfg.idw_power);
            wsum += w;
            vsum += w * points[idx].value;
          }
          value = vsum / wsum;
        }
      } else {
        NeighborContext ctx;
        ctx.target = center;
        for (size_t idx : nn) ctx.neighbors.push_back(points[idx]);
        value = std::clamp(krige(*model, ctx).mean, 0.0, 1.0);
      }
      grid.at(row, col) = value;
    }
  };

  if (cfg.jobs <= 1 || grid.nrows < 2) {
    for (int row = 0; row < grid.nrows; ++row) fill_row(row);
  } else {
    std::atomic<int> next{0};
    const int workers = std::min(cfg.jobs, grid.nrows);
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (int row = next.fetch_add(1); row < grid.nrows;
             row = next.fetch_add(1))
          fill_row(row);
      });
    for (auto& t : pool) t.join();
  }
  return grid;
}

namespace {

// 6 significant digits; integral shortcut keeps nodata as a clean "-9999".
std::string format_value(double v) {
  char buf[40];
  if (v == std::floor(v) && std::abs(v) < 1e15) {
    std::snprintf(buf, sizeof buf, "%.0f", v);
  } else {
    std::snprintf(buf, sizeof buf, "%.6g", v);
  }
  return buf;
}

std::string format_coord(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

void export_ascii_grid(const RasterGrid& grid, const std::string& path) {
  if (grid.nrows < 1 || grid.ncols < 1 ||
      grid.values.size() != static_cast<size_t>(grid.nrows) * grid.ncols)
    throw Error("export_ascii_grid: invalid grid");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open file for writing: " + path);
  out << "ncols " << grid.ncols << '\n';
  out << "nrows " << grid.nrows << '\n';
  out << "xllcorner " << format_coord(grid.bbox.min_lon) << '\n';
  out << "yllcorner " << format_coord(grid.bbox.min_lat) << '\n';
  out << "cellsize " << format_coord(grid.cell_size_deg) << '\n';
  out << "NODATA_value -9999\n";
  for (int row = 0; row < grid.nrows; ++row) {
    for (int col = 0; col < grid.ncols; ++col) {
      if (col) out << ' ';
      out << format_value(grid.at(row, col));
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing: " + path);
}

RasterGrid parse_ascii_grid(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);

  RasterGrid grid;
  double xll = 0, yll = 0, nodata = RasterGrid::kNoData;
  for (int i = 0; i < 6; ++i) {
    std::string key;
    if (!(in >> key)) throw Error("truncated ASCII grid header");
    std::string lower;
    for (char c : key) lower += static_cast<char>(std::tolower(c));
    if (lower == "ncols") in >> grid.ncols;
    else if (lower == "nrows") in >> grid.nrows;
    else if (lower == "xllcorner") in >> xll;
    else if (lower == "yllcorner") in >> yll;
    else if (lower == "cellsize") in >> grid.cell_size_deg;
    else if (lower == "nodata_value") in >> nodata;
    else throw Error("unexpected ASCII grid header token: " + key);
    if (!in) throw Error("malformed ASCII grid header");
  }
  if (grid.nrows < 1 || grid.ncols < 1 || !(grid.cell_size_deg > 0))
    throw Error("invalid ASCII grid dimensions");
  grid.bbox.min_lon = xll;
  grid.bbox.min_lat = yll;
  grid.bbox.max_lon = xll + grid.ncols * grid.cell_size_deg;
  grid.bbox.max_lat = yll + grid.nrows * grid.cell_size_deg;
  grid.values.resize(static_cast<size_t>(grid.nrows) * grid.ncols);
  for (auto& v : grid.values) {
    if (!(in >> v)) throw Error("truncated ASCII grid data");
    if (v == nodata) v = RasterGrid::kNoData;
  }
  return grid;
}

void export_geojson_cells(const RasterGrid& grid, const std::string& path,
                          std::optional<double> threshold) {
  nlohmann::json features = nlohmann::json::array();
  for (int row = 0; row < grid.nrows; ++row) {
    for (int col = 0; col < grid.ncols; ++col) {
      const double v = grid.at(row, col);
      if (v == RasterGrid::kNoData) continue;
      if (threshold && v < *threshold) continue;
      const double north = grid.bbox.max_lat - row * grid.cell_size_deg;
      const double south = north - grid.cell_size_deg;
      const double west = grid.bbox.min_lon + col * grid.cell_size_deg;
      const double east = west + grid.cell_size_deg;
      nlohmann::json feature;
      feature["type"] = "Feature";
      feature["geometry"] = {
          {"type", "Polygon"},
          {"coordinates", {{{west, south}, {east, south}, {east, north},
                            {west, north}, {west, south}}}}};
      feature["properties"] = {{"probability", v}};
      features.push_back(std::move(feature));
    }
  }
  nlohmann::json collection{{"type", "FeatureCollection"},
                            {"features", std::move(features)}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open file for writing: " + path);
  out << collection.dump(2) << '\n';
  if (!out) throw IoError("failed writing: " + path);
}

}  // namespace bimkit
