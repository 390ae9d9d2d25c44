#pragma once
// Ohmic bath spectral densities, their time-domain correlation functions, and
// exponential-sum (Prony) compressions of the latter for the propagation
// engine's memory recursion.

#include <complex>
#include <vector>

namespace transim {

struct OhmicBathSpec {
  double g = 0.0;               // coupling, GHz
  double omega_c = 1.0;         // exponential cutoff, GHz
  double temperature = 0.4167;  // k_B*T/h, GHz
  double eta = 1e-4;            // spectral prefactor, GHz^-2
  void validate() const;        // g >= 0, omega_c > 0, temperature > 0, eta > 0
};

// Transition-rate density at signed linear frequency f (GHz), returned in
// 1/ns. The spectral formula is evaluated in angular units (every
// frequency-dimensioned parameter promoted by 2*pi, eta included) with the
// golden-rule 2*pi prefactor on top; f = 0 returns the analytic limit.
// Detailed balance: ohmic_spectrum_at(-f) = exp(-f/T) * ohmic_spectrum_at(f).
double ohmic_spectrum_at(const OhmicBathSpec& spec, double f);

struct CorrelationGrid {
  std::vector<double> tau;              // ns, symmetric about 0
  std::vector<std::complex<double>> c;  // C(tau), 1/ns^2
  double memory_time = 0.0;  // smallest grid time beyond which |C| < 1e-6 |C(0)|
};

// C(tau) = integral of ohmic_spectrum_at(f) * exp(-i*2*pi*f*tau) df over a
// window covering the spectral support, on a symmetric tau grid. Panelled
// trapezoid quadrature; throws if doubling the node count moves C(0) by more
// than 1e-6 relative.
CorrelationGrid correlation_function_grid(const OhmicBathSpec& spec,
                                          double tau_max, int n_points);

// C(tau) on an arbitrary tau grid (ns); same quadrature as the grid version.
std::vector<std::complex<double>> correlation_samples(
    const OhmicBathSpec& spec, const std::vector<double>& taus);

// ---- exponential-sum compression ----

struct ExpSumMode {
  std::complex<double> z;  // per-sample ratio, |z| <= 1
  std::complex<double> w;  // weight
};

// h_k ~= sum_p w_p * z_p^k on a uniform grid with spacing ds; equivalently
// h(tau) ~= sum_p w_p * exp(q_p * tau) with q_p = log(z_p)/ds.
struct ExpSumFit {
  std::vector<ExpSumMode> modes;
  double ds = 0.0;        // ns
  double residual = 0.0;  // max reconstruction error / max |h|
  std::complex<double> eval_time(double tau) const;
  ExpSumFit scaled(double factor) const;  // weights multiplied by factor
};

// Hankel-SVD (shift-invariance) fit of an exponential sum to uniform samples.
// Tries increasing window sizes and model orders up to max_modes until the
// reconstruction residual drops below tol; returns the best fit found. When
// h_mid holds samples at the half-step offsets (k + 1/2)*ds, the residual
// also covers them, guarding against fits that ring between grid points.
ExpSumFit fit_exponential_sum(const std::vector<std::complex<double>>& h,
                              double ds, int max_modes, double tol,
                              const std::vector<std::complex<double>>& h_mid = {});

// Samples C(tau) on [0, tau_max] with spacing ds and compresses it.
ExpSumFit fit_correlation_modes(const OhmicBathSpec& spec, double tau_max,
                                double ds, int max_modes, double tol);

}  // namespace transim
