#ifndef BIMKIT_SYNTHCITY_HPP
#define BIMKIT_SYNTHCITY_HPP

#include <cstdint>
#include <string>

namespace bimkit {

// Deterministic synthetic-city dataset: tax-record style metadata with gaps,
// vision predictions with confidences, a geocode lookup table, feature-vector
// sets for the labeling workflow, and a ready-to-run pipeline config. Used
// for the bundled example data and for scale/determinism testing.
struct SynthCityOptions {
  int count = 400;
  uint64_t seed = 7;
  double missing_latlon = 0.30;    // rows whose coordinates must be geocoded
  double missing_stories = 0.25;
  double missing_year = 0.15;
  double missing_material = 0.20;
  double vision_coverage = 0.70;   // share of buildings with vision rows
  int selftrain_seed_items = 40;
  int selftrain_pool_items = 300;
  int selftrain_eval_items = 160;
};

// Writes metadata.csv, vision.csv, geocode_table.csv, selftrain_{seed,pool,
// eval}.csv and config.json into `dir` (created if needed).
void write_synth_city(const std::string& dir, const SynthCityOptions& opt = {});

}  // namespace bimkit

#endif
