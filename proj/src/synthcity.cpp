#include "bimkit/synthcity.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"

#include "bimkit/csv.hpp"
#include "bimkit/errors.hpp"
#include "bimkit/rng.hpp"

namespace bimkit {

namespace {

constexpr double kBaseLat = 37.745;
constexpr double kBaseLon = -122.265;
constexpr double kLotSpacingDeg = 0.00065;  // ~70 m between buildings

std::string fixed(double v, int decimals) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

// Smooth bump field in [0, 1]; three hot spots across the grid.
double bump_field(double u, double v) {
  struct Bump {
    double u, v, amp, sigma;
  };
  static constexpr Bump bumps[] = {
      {0.25, 0.30, 0.85, 0.18},
      {0.70, 0.65, 0.75, 0.22},
      {0.85, 0.15, 0.60, 0.12},
  };
  double total = 0.0;
  for (const auto& b : bumps) {
    const double du = u - b.u;
    const double dv = v - b.v;
    total += b.amp * std::exp(-(du * du + dv * dv) / (2.0 * b.sigma * b.sigma));
  }
  return std::min(total, 1.0);
}

const char* material_for(double u, double v, double roll) {
  const double downtown = bump_field(u, v);
  if (downtown > 0.65) return roll < 0.7 ? "concrete" : "steel";
  if (downtown > 0.35) return roll < 0.6 ? "masonry" : "concrete";
  return roll < 0.8 ? "wood" : "masonry";
}

void write_selftrain_blobs(const std::string& dir, const SynthCityOptions& opt) {
  Rng rng(opt.seed + 101);
  // Two interleaved families of clusters in feature space.
  struct Cluster {
    double x, y;
    int label;
  };
  static constexpr Cluster clusters[] = {
      {-2.0, 0.0, 0}, {0.0, 2.2, 0},  {2.2, -2.0, 0},
      {2.0, 0.3, 1},  {-0.2, -2.2, 1}, {-2.2, 2.4, 1},
  };

  auto sample = [&](std::vector<std::vector<std::string>>& rows,
                    const std::string& prefix, int n, bool with_label) {
    for (int i = 0; i < n; ++i) {
      const auto& c = clusters[rng.index(6)];
      const double x = c.x + 0.55 * rng.normal();
      const double y = c.y + 0.55 * rng.normal();
      std::vector<std::string> row{prefix + std::to_string(i + 1), fixed(x, 6),
                                   fixed(y, 6)};
      if (with_label) row.push_back(std::to_string(c.label));
      rows.push_back(std::move(row));
    }
  };

  std::vector<std::vector<std::string>> seed_rows, pool_rows, eval_rows;
  sample(seed_rows, "S", opt.selftrain_seed_items, true);
  sample(pool_rows, "P", opt.selftrain_pool_items, false);
  sample(eval_rows, "E", opt.selftrain_eval_items, true);

  write_csv(dir + "/selftrain_seed.csv", {"id", "f1", "f2", "label"}, seed_rows);
  write_csv(dir + "/selftrain_pool.csv", {"id", "f1", "f2"}, pool_rows);
  write_csv(dir + "/selftrain_eval.csv", {"id", "f1", "f2", "label"}, eval_rows);
}

void write_config(const std::string& dir, const SynthCityOptions& opt) {
  nlohmann::json cfg;
  cfg["seed"] = opt.seed;
  cfg["paths"] = {
      {"metadata_csv", "metadata.csv"},
      {"vision_csv", "vision.csv"},
      {"geocode_table", "geocode_table.csv"},
      {"geocode_cache", "out/geocode_cache.jsonl"},
      {"rejects_metadata", "out/rejects_metadata.jsonl"},
      {"rejects_vision", "out/rejects_vision.jsonl"},
      {"metadata_inventory", "out/metadata_inventory.geojson"},
      {"vision_inventory", "out/vision_inventory.geojson"},
      {"geocoded_inventory", "out/geocoded_inventory.geojson"},
      {"merged_inventory", "out/merged_inventory.geojson"},
      {"imputed_inventory", "out/imputed_inventory.geojson"},
      {"raster_asc", "out/ss_heatmap.asc"},
      {"raster_cells", "out/ss_cells.geojson"},
      {"cv_report", "out/cv_report.json"},
      {"selftrain_seed_csv", "selftrain_seed.csv"},
      {"selftrain_pool_csv", "selftrain_pool.csv"},
      {"selftrain_eval_csv", "selftrain_eval.csv"},
      {"selftrain_report", "out/selftrain_report.json"},
      {"selftrain_model", "out/selftrain_model.json"},
      {"selftrain_labeled", "out/selftrain_labeled.csv"},
      {"report", "out/report.json"},
  };
  cfg["metadata_schema"] = {
      {"id_column", "id"},
      {"address_column", "address"},
      {"lat_column", "lat"},
      {"lon_column", "lon"},
      {"attributes",
       {{{"name", "stories"}, {"kind", "numeric"}},
        {{"name", "year_built"}, {"kind", "numeric"}},
        {{"name", "material"}, {"kind", "categorical"}}}},
  };
  cfg["vision_schema"] = {
      {"id_column", "id"},
      {"attributes",
       {{{"name", "ss_probability"}, {"kind", "numeric"}},
        {{"name", "material"}, {"kind", "categorical"}}}},
  };
  cfg["geocoder"] = {{"provider", "file"},
                     {"table", "geocode_table.csv"},
                     {"retries", 3},
                     {"backoff_ms", 500}};
  cfg["merge"] = {{"prefer", "metadata"}};
  cfg["surf"] = {{"attribute", "ss_probability"},
                 {"engine", "kriging"},
                 {"k", 8},
                 {"family", "exponential"},
                 {"min_known", 10},
                 {"mlp",
                  {{"layers", {16}},
                   {"lr", 0.05},
                   {"epochs", 200},
                   {"batch", 32},
                   {"seed", opt.seed}}}};
  cfg["selftrain"] = {{"tau", 0.9},
                      {"rounds", 3},
                      {"balance", true},
                      {"hidden_layers", {16}},
                      {"lr", 0.1},
                      {"batch", 16},
                      {"stage1_epochs", 30},
                      {"stage2_epochs", 120}};
  cfg["raster"] = {{"attribute", "ss_probability"},
                   {"engine", "idw"},
                   {"cell_size", 0.001},
                   {"threshold", 0.5},
                   {"k", 12}};

  std::ofstream out(dir + "/config.json", std::ios::binary);
  if (!out) throw IoError("cannot write config.json in " + dir);
  out << cfg.dump(2) << '\n';
}

}  // namespace

void write_synth_city(const std::string& dir, const SynthCityOptions& opt) {
  std::filesystem::create_directories(dir);
  Rng rng(opt.seed);

  // Street grid sized to the building count.
  const int streets =
      std::max(4, static_cast<int>(std::ceil(std::sqrt(opt.count / 2.0))));
  const int lots_per_street =
      (opt.count + streets - 1) / streets;

  std::vector<std::vector<std::string>> metadata_rows;
  std::vector<std::vector<std::string>> vision_rows;
  std::vector<std::vector<std::string>> geocode_rows;
  metadata_rows.reserve(opt.count);

  for (int i = 0; i < opt.count; ++i) {
    const int street = i % streets;
    const int lot = i / streets;
    const double jitter_lat = 0.12 * kLotSpacingDeg * rng.normal();
    const double jitter_lon = 0.12 * kLotSpacingDeg * rng.normal();
    const double lat = kBaseLat + street * kLotSpacingDeg + jitter_lat;
    const double lon = kBaseLon + lot * kLotSpacingDeg + jitter_lon;
    const double u = static_cast<double>(lot) / std::max(1, lots_per_street - 1);
    const double v = static_cast<double>(street) / std::max(1, streets - 1);

    const std::string id = "B" + std::to_string(i + 1);
    const std::string address =
        std::to_string(100 + lot * 2) + " Street " + std::to_string(street + 1);

    const double downtown = bump_field(u, v);
    const int stories = std::max(
        1, static_cast<int>(std::lround(1.0 + 9.0 * downtown + 0.8 * rng.normal())));
    const int year =
        1905 + static_cast<int>(std::lround(80.0 * u + 6.0 * rng.normal()));
    const std::string material = material_for(u, v, rng.uniform());
    const double ss_prob = std::clamp(
        0.08 + 0.85 * bump_field(u, 1.0 - v) + 0.05 * rng.normal(), 0.0, 1.0);

    const bool drop_latlon = rng.uniform() < opt.missing_latlon;
    const bool drop_stories = rng.uniform() < opt.missing_stories;
    const bool drop_year = rng.uniform() < opt.missing_year;
    const bool drop_material = rng.uniform() < opt.missing_material;
    const bool has_vision = rng.uniform() < opt.vision_coverage;

    metadata_rows.push_back(
        {id, address, drop_latlon ? "" : fixed(lat, 6),
         drop_latlon ? "" : fixed(lon, 6),
         drop_stories ? "" : std::to_string(stories),
         drop_year ? "" : std::to_string(year),
         drop_material ? "" : material});

    if (has_vision) {
      const double vision_ss =
          std::clamp(ss_prob + 0.04 * rng.normal(), 0.0, 1.0);
      const double conf = rng.uniform(0.70, 0.99);
      const bool vision_material = rng.uniform() < 0.5;
      vision_rows.push_back({id, fixed(vision_ss, 4), fixed(conf, 3),
                             vision_material ? material : "",
                             vision_material ? fixed(rng.uniform(0.6, 0.95), 3)
                                             : ""});
    }

    geocode_rows.push_back({address, fixed(lat, 6), fixed(lon, 6), "exact"});
  }

  write_csv(dir + "/metadata.csv",
            {"id", "address", "lat", "lon", "stories", "year_built", "material"},
            metadata_rows);
  write_csv(dir + "/vision.csv",
            {"id", "ss_probability", "ss_probability_confidence", "material",
             "material_confidence"},
            vision_rows);
  write_csv(dir + "/geocode_table.csv", {"address", "lat", "lon", "quality"},
            geocode_rows);
  write_selftrain_blobs(dir, opt);
  write_config(dir, opt);
}

}  // namespace bimkit
