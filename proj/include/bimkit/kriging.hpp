#ifndef BIMKIT_KRIGING_HPP
#define BIMKIT_KRIGING_HPP

#include <vector>

#include "bimkit/variogram.hpp"

namespace bimkit {

struct KrigingPrediction {
  double mean = 0.0;
  double variance = 0.0;          // clamped at 0
  std::vector<double> weights;    // sums to 1 (unbiasedness constraint)
};

// Ordinary kriging from the neighbors in `ctx`: solves the augmented system
// with pairwise semivariances, the sum-to-one row and a Lagrange multiplier.
// A failed solve is retried once with 1e-10 diagonal jitter; if it is still
// singular, duplicate neighbor locations are collapsed by averaging their
// values and the solve is repeated. Throws Error when the system remains
// singular or ctx has no neighbors.
KrigingPrediction krige(const VariogramModel& model, const NeighborContext& ctx);

}  // namespace bimkit

#endif
