#include "transim/fluctuators.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <random>
#include <stdexcept>

#include "transim/util.hpp"

namespace transim {

void FluctuatorEnsembleSpec::validate() const {
  if (count < 1)
    throw std::invalid_argument("FluctuatorEnsembleSpec: count must be >= 1");
  if (b < 0.0) throw std::invalid_argument("FluctuatorEnsembleSpec: b must be >= 0");
  if (gamma_min <= 0.0 || gamma_min > gamma_max)
    throw std::invalid_argument(
        "FluctuatorEnsembleSpec: need 0 < gamma_min <= gamma_max");
}

FluctuatorRealization sample_fluctuators(const FluctuatorEnsembleSpec& spec,
                                         double t_max, std::uint64_t rng_seed,
                                         const std::vector<double>* fixed_rates) {
  spec.validate();
  if (t_max <= 0.0)
    throw std::invalid_argument("sample_fluctuators: t_max must be positive");
  if (fixed_rates && static_cast<int>(fixed_rates->size()) != spec.count)
    throw std::invalid_argument(
        "sample_fluctuators: fixed_rates size does not match count");
  std::mt19937_64 rng(rng_seed);
  std::uniform_real_distribution<double> log_rate(std::log(spec.gamma_min),
                                                  std::log(spec.gamma_max));
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  FluctuatorRealization real;
  real.b = spec.b;
  real.t_max = t_max;
  real.rates.resize(spec.count);
  real.initial_signs.resize(spec.count);
  real.switch_times.resize(spec.count);
  for (int k = 0; k < spec.count; ++k) {
    real.rates[k] = fixed_rates ? (*fixed_rates)[k]
                    : (spec.gamma_min == spec.gamma_max)
                        ? spec.gamma_min
                        : std::exp(log_rate(rng));
    real.initial_signs[k] = (coin(rng) < 0.5) ? 1 : -1;
    std::exponential_distribution<double> waiting(real.rates[k]);
    double t = waiting(rng);
    while (t <= t_max) {
      real.switch_times[k].push_back(t);
      t += waiting(rng);
    }
  }
  return real;
}

int fluctuator_sign_at(const FluctuatorRealization& real, int k, double t) {
  const auto& times = real.switch_times[k];
  const auto flips = std::upper_bound(times.begin(), times.end(), t) - times.begin();
  return (flips % 2 == 0) ? real.initial_signs[k] : -real.initial_signs[k];
}

double fluctuator_value_at(const FluctuatorRealization& real, double t) {
  if (t < 0.0 || t > real.t_max)
    throw std::out_of_range("fluctuator_value_at: t outside the sampled window");
  double sum = 0.0;
  for (int k = 0; k < static_cast<int>(real.rates.size()); ++k)
    sum += real.b * fluctuator_sign_at(real, k, t);
  return sum;
}

double fluctuator_integral(const FluctuatorRealization& real, double a,
                           double b) {
  if (a > b) throw std::invalid_argument("fluctuator_integral: reversed interval");
  if (a < -1e-9 || b > real.t_max + 1e-9)
    throw std::out_of_range("fluctuator_integral: interval outside the window");
  double sum = 0.0;
  for (int k = 0; k < static_cast<int>(real.rates.size()); ++k) {
    const auto& times = real.switch_times[k];
    int sign = fluctuator_sign_at(real, k, a);
    double t = a;
    double acc = 0.0;
    for (auto it = std::upper_bound(times.begin(), times.end(), a);
         it != times.end() && *it <= b; ++it) {
      acc += sign * (*it - t);
      t = *it;
      sign = -sign;
    }
    acc += sign * (b - t);
    sum += real.b * acc;
  }
  return sum;
}

PsdEstimate ensemble_psd_estimate(const FluctuatorEnsembleSpec& spec,
                                  int n_realizations) {
  spec.validate();
  if (n_realizations < 100)
    throw std::invalid_argument("ensemble_psd_estimate: need >= 100 realizations");
  // window long enough to resolve the slowest fluctuators, sampled fast enough
  // to keep Lorentzian aliasing negligible at the fastest
  const int n_samples = 1 << 15;
  const double t_window = 4.0 / spec.gamma_min;
  const double dt = t_window / n_samples;

  std::vector<double> in(n_samples);
  std::vector<std::complex<double>> out(n_samples / 2 + 1);
  fftw_plan plan = fftw_plan_dft_r2c_1d(
      n_samples, in.data(), reinterpret_cast<fftw_complex*>(out.data()),
      FFTW_ESTIMATE);

  PsdEstimate est;
  est.freq.resize(n_samples / 2);
  est.psd.assign(n_samples / 2, 0.0);
  for (int j = 1; j <= n_samples / 2; ++j)
    est.freq[j - 1] = j / t_window;

  for (int r = 0; r < n_realizations; ++r) {
    const FluctuatorRealization real =
        sample_fluctuators(spec, t_window, derive_seed(spec.seed, r));
    // walk each fluctuator's switch list once across the sample grid
    std::fill(in.begin(), in.end(), 0.0);
    for (int k = 0; k < spec.count; ++k) {
      double sign = real.initial_signs[k];
      size_t next = 0;
      const auto& times = real.switch_times[k];
      for (int i = 0; i < n_samples; ++i) {
        const double t = i * dt;
        while (next < times.size() && times[next] <= t) {
          sign = -sign;
          ++next;
        }
        in[i] += spec.b * sign;
      }
    }
    fftw_execute(plan);
    for (int j = 1; j <= n_samples / 2; ++j)
      est.psd[j - 1] += std::norm(out[j]) * dt / n_samples;
  }
  fftw_destroy_plan(plan);
  for (double& p : est.psd) p /= n_realizations;
  return est;
}

}  // namespace transim
