#ifndef BIMKIT_VARIOGRAM_HPP
#define BIMKIT_VARIOGRAM_HPP

#include <string>
#include <vector>

#include "bimkit/spatial.hpp"

namespace bimkit {

struct VariogramBin {
  double mean_lag = 0.0;      // meters, mean pair distance within the bin
  double semivariance = 0.0;  // >= 0
  size_t pair_count = 0;
};

struct EmpiricalVariogram {
  std::vector<VariogramBin> bins;  // only populated bins, lags increasing
  double max_lag = 0.0;
};

// Matheron estimator on equal-width bins over [0, max_lag]:
//   gamma(h) = sum (z_i - z_j)^2 / (2 N(h))  over pairs with distance in bin.
// Pairs beyond max_lag are ignored; empty bins are dropped. Throws Error when
// fewer than 2 samples are given or no pair falls within max_lag.
EmpiricalVariogram empirical_variogram(const std::vector<SpatialSample>& samples,
                                       int n_bins, double max_lag_m);

enum class VariogramFamily { Exponential, Gaussian, Spherical };

std::string to_string(VariogramFamily f);
VariogramFamily variogram_family_from_string(const std::string& s);

struct VariogramModel {
  VariogramFamily family = VariogramFamily::Exponential;
  double nugget = 0.0;   // >= 0
  double sill = 0.0;     // >= nugget
  double range_m = 1.0;  // > 0; effective range: gamma(range) ~ 0.95 sill
                         // for Exponential/Gaussian, exact sill for Spherical
  bool degenerate = false;  // set when fitted to an all-zero variogram
};

// gamma(0) = 0 by convention; for h > 0 the parametric families are
//   Exponential: nugget + (sill-nugget) (1 - exp(-3h/range))
//   Gaussian:    nugget + (sill-nugget) (1 - exp(-3h^2/range^2))
//   Spherical:   nugget + (sill-nugget) (1.5 h/r - 0.5 (h/r)^3), sill past r.
// Throws Error for h < 0.
double variogram_value(const VariogramModel& model, double h_m);

// Weighted least squares over the populated bins (weights = pair counts),
// coarse grid search followed by Nelder-Mead refinement with parameters
// projected onto nugget >= 0, sill >= max(nugget, eps), range > 0.
// Requires >= 3 populated bins. An all-zero variogram yields
// nugget = sill = 0, range = max_lag and the degenerate flag.
VariogramModel fit_variogram(const EmpiricalVariogram& emp, VariogramFamily family);

}  // namespace bimkit

#endif
