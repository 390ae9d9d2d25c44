#pragma once
// Random-telegraph fluctuator ensembles: sampling of switching trajectories,
// pointwise evaluation, and the averaged power spectral density used for the
// 1/f diagnostic.

#include <cstdint>
#include <vector>

namespace transim {

struct FluctuatorEnsembleSpec {
  int count = 10;
  double b = 0.0;          // per-fluctuator amplitude, GHz
  double gamma_min = 1e-4;  // switching-rate range, 1/ns
  double gamma_max = 5e-2;
  std::uint64_t seed = 0;
  void validate() const;  // count >= 1, b >= 0, 0 < gamma_min <= gamma_max
};

struct FluctuatorRealization {
  double b = 0.0;
  double t_max = 0.0;
  std::vector<double> rates;                      // 1/ns, one per fluctuator
  std::vector<int> initial_signs;                 // +-1
  std::vector<std::vector<double>> switch_times;  // strictly ascending, ns
};

// Draws rates log-uniformly on [gamma_min, gamma_max], equiprobable initial
// signs, and exponential waiting times out to t_max. Deterministic given seed.
// With `fixed_rates` (one rate per fluctuator) the rate draw is skipped and
// only signs and switch times are sampled.
FluctuatorRealization sample_fluctuators(
    const FluctuatorEnsembleSpec& spec, double t_max, std::uint64_t rng_seed,
    const std::vector<double>* fixed_rates = nullptr);

// Sign of fluctuator k at time t: initial sign times a flip per switch <= t.
int fluctuator_sign_at(const FluctuatorRealization& real, int k, double t);

// Summed amplitude sum_k b * chi_k(t); rejects t outside [0, t_max].
double fluctuator_value_at(const FluctuatorRealization& real, double t);

// Exact integral_a^b of the summed amplitude, from the switch times; rejects
// a reversed or out-of-window interval.
double fluctuator_integral(const FluctuatorRealization& real, double a,
                           double b);

struct PsdEstimate {
  std::vector<double> freq;  // GHz, positive half-spectrum without DC
  std::vector<double> psd;   // two-sided density, GHz^2 / GHz
};

// Averaged periodogram of the summed telegraph signal over n_realizations
// independently re-drawn realizations (rates included).
PsdEstimate ensemble_psd_estimate(const FluctuatorEnsembleSpec& spec,
                                  int n_realizations);

}  // namespace transim
