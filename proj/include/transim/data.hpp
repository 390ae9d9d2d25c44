#pragma once
// Decay-curve container shared by the simulation engine and the measurement
// ingestion utilities.

#include <vector>

namespace transim {

// A probability-vs-time trace. `half_width` is the uncertainty half-width of
// each mean: the ensemble standard error for simulated curves, the 2-sigma
// bootstrap spread for measured ones.
struct DecayCurve {
  std::vector<double> instants;    // ns
  std::vector<double> mean;        // probability
  std::vector<double> half_width;  // same length as mean; >= 0
};

}  // namespace transim
