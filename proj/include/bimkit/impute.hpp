#ifndef BIMKIT_IMPUTE_HPP
#define BIMKIT_IMPUTE_HPP

#include <optional>
#include <string>

#include "json.hpp"

#include "bimkit/inventory.hpp"
#include "bimkit/kriging.hpp"
#include "bimkit/mlp.hpp"
#include "bimkit/selftrain.hpp"
#include "bimkit/variogram.hpp"

namespace bimkit {

enum class ImputeEngine { Kriging, NeuralNet, NeighborMajority };

std::string to_string(ImputeEngine e);
ImputeEngine impute_engine_from_string(const std::string& s);

struct MlpHyper {
  std::vector<int> hidden_layers{16};
  double learning_rate = 0.05;
  int epochs = 300;
  int batch_size = 0;
  uint64_t seed = 0;
};

struct ImputeConfig {
  int k = 8;                      // neighbors per prediction
  VariogramFamily family = VariogramFamily::Exponential;
  int min_known = 10;             // required known-and-geocoded records
  int variogram_bins = 15;
  double variogram_max_lag_m = 0;  // 0 = half the data bounding-box diagonal
  int max_variogram_points = 4000;  // subsample cap for the empirical fit
  int residual_folds = 5;         // NN-regression uncertainty estimation
  MlpHyper mlp;
  uint64_t seed = 0;
  int jobs = 1;
};

// Fixed-length encoding of a neighbor context for the neural engine:
// (value, north_km, east_km) per neighbor for the k nearest, zero-padded,
// then a k-entry presence mask. Total length 4k.
std::vector<double> build_neighbor_features(const NeighborContext& ctx, int k);

// Convenience wrapper: empirical variogram with auto max-lag and an optional
// seeded subsample of the locations, then fit_variogram.
VariogramModel fit_variogram_auto(const std::vector<SpatialSample>& samples,
                                  VariogramFamily family, int n_bins,
                                  double max_lag_m, int max_points,
                                  uint64_t seed);

// SURF enhancement: every record that has a geocode but is missing
// `attribute` gains it with provenance Imputed(method, uncertainty). Known
// values are never overwritten, records without geocode are untouched.
// Numeric attributes take Kriging or NeuralNet (regression); categorical
// take NeighborMajority or NeuralNet (classification). Throws
// InsufficientDataError when fewer than cfg.min_known usable records exist.
Inventory impute(const Inventory& inv, const std::string& attribute,
                 ImputeEngine engine, const ImputeConfig& cfg);

struct CrossValidationReport {
  std::string attribute;
  ImputeEngine engine = ImputeEngine::Kriging;
  int folds = 0;
  uint64_t seed = 0;
  // Numeric engines:
  std::optional<double> rmse;
  std::optional<double> mae;
  // Categorical engines:
  std::optional<Metrics> classification;

  nlohmann::json to_json() const;
};

// Deterministic seeded fold assignment over the known records; per-fold
// hold-out imputation; aggregate metrics over all held-out predictions.
// Throws Error when folds < 2 or a fold would be empty.
CrossValidationReport cross_validate(const Inventory& inv,
                                     const std::string& attribute,
                                     ImputeEngine engine, const ImputeConfig& cfg,
                                     int folds);

}  // namespace bimkit

#endif
