#ifndef BIMKIT_RASTER_HPP
#define BIMKIT_RASTER_HPP

#include <optional>
#include <string>
#include <vector>

#include "bimkit/impute.hpp"
#include "bimkit/inventory.hpp"

namespace bimkit {

struct BoundingBox {
  double min_lat = 0.0, max_lat = 0.0;
  double min_lon = 0.0, max_lon = 0.0;
};

// Regular lat/lon grid, row-major with row 0 at the northern edge. The box
// is anchored at (max_lat, min_lon); min_lat/max_lon are whole-cell
// multiples away so ESRI ASCII export/import round-trips the georeference.
struct RasterGrid {
  static constexpr double kNoData = -9999.0;

  BoundingBox bbox;
  int nrows = 0, ncols = 0;
  double cell_size_deg = 0.0;
  std::vector<double> values;  // nrows * ncols

  double at(int row, int col) const {
    return values[static_cast<size_t>(row) * ncols + col];
  }
  double& at(int row, int col) {
    return values[static_cast<size_t>(row) * ncols + col];
  }
  Geocode cell_center(int row, int col) const {
    return {bbox.max_lat - (row + 0.5) * cell_size_deg,
            bbox.min_lon + (col + 0.5) * cell_size_deg};
  }
};

enum class SurfaceEngine { Idw, Kriging };

std::string to_string(SurfaceEngine e);
SurfaceEngine surface_engine_from_string(const std::string& s);

struct SurfaceConfig {
  SurfaceEngine engine = SurfaceEngine::Idw;
  double cell_size_deg = 0.001;
  std::optional<BoundingBox> bbox;  // default: data extent padded 5%
  int k = 12;                       // neighbors per cell
  double idw_power = 2.0;
  // Cells whose nearest building is beyond this are nodata. Default: twice
  // the mean nearest-neighbor spacing of the input points.
  std::optional<double> cutoff_m;
  VariogramFamily family = VariogramFamily::Exponential;
  int variogram_bins = 15;
  int max_variogram_points = 4000;
  uint64_t seed = 0;
  int jobs = 1;
};

// Interpolates the numeric attribute (a probability in [0,1], e.g. the
// soft-story score) from the geocoded records onto a regular grid. Throws
// Error when no usable record exists or the grid would exceed 1e7 cells.
RasterGrid probability_surface(const Inventory& inv, const std::string& attribute,
                               const SurfaceConfig& cfg);

// ESRI ASCII grid with the standard six header lines; cell values are
// written with 6 significant digits, nodata as -9999.
void export_ascii_grid(const RasterGrid& grid, const std::string& path);
RasterGrid parse_ascii_grid(const std::string& path);

// One Polygon feature per non-nodata cell (only cells >= threshold when one
// is given), with a "probability" property.
void export_geojson_cells(const RasterGrid& grid, const std::string& path,
                          std::optional<double> threshold = {});

}  // namespace bimkit

#endif
