// Generates the deterministic synthetic-city dataset (CSVs + pipeline
// config). data/synthetic_city in this repo was produced with the defaults.

#include <iostream>

#include "CLI11.hpp"

#include "bimkit/synthcity.hpp"

int main(int argc, char** argv) {
  CLI::App app{"bimkit-synthgen: write a synthetic city dataset"};
  std::string out_dir;
  bimkit::SynthCityOptions opt;
  app.add_option("--out", out_dir, "output directory")->required();
  app.add_option("--count", opt.count, "number of buildings");
  app.add_option("--seed", opt.seed, "generator seed");

  CLI11_PARSE(app, argc, argv);

  try {
    bimkit::write_synth_city(out_dir, opt);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << "wrote " << opt.count << " buildings to " << out_dir << "\n";
  return 0;
}
