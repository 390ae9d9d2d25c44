#pragma once
// Drive envelopes, the rotating-frame drive Hamiltonian, closed-system gate
// propagators, and gate quality metrics.

#include <Eigen/Dense>
#include <complex>
#include <vector>

#include "transim/transmon.hpp"

namespace transim {

// Baseline-subtracted Gaussian drive envelope, zero outside [0, t_g].
// The in-phase amplitude is in linear GHz; the quadrature (derivative)
// component is scaled by alpha / (2*pi*eta_q) so that the corrective term
// matches the angular-units prescription.
struct Envelope {
  double t_g = 70.0;       // ns
  double sigma = 70.0 / 6.0;  // ns
  double amplitude = 0.0;  // GHz
  double drag_alpha = 0.0;
  double phase = 0.0;      // drive axis, radians: 0 -> x, pi/2 -> y
  double detuning = 0.0;   // drive frequency minus qubit frequency, GHz

  double value_at(double t) const;       // in-phase component, GHz
  double derivative_at(double t) const;  // d/dt of the in-phase component
  // In-phase plus DRAG quadrature: value + i*alpha*derivative/(2*pi*eta_q).
  std::complex<double> complex_value_at(double t, double eta_q) const;
  double area() const;  // closed-form integral of value_at over [0, t_g], GHz*ns
};

// Calibrates the amplitude so the rotation angle delivered on the qubit
// transition equals `angle`: 2*pi * g01 * integral(envelope) = angle.
Envelope make_envelope(double angle, double t_g, double sigma, double g01);

// Rotation angle the envelope delivers through coupling g01, radians.
double effective_angle(const Envelope& env, double g01);

// Rotating-frame drive Hamiltonian at time t, linear GHz units:
// diagonal omega_k - k*omega_d, ladder (g_{k,k+1}/2) * envelope * exp(i*phase).
Eigen::MatrixXcd drive_hamiltonian_at(double t, const TransmonSpectrum& sp,
                                      const Envelope& env);

struct EnvelopeSpectrum {
  std::vector<double> freq;       // GHz, offsets from the carrier
  std::vector<double> magnitude;  // normalized to max 1
};

// Discrete Fourier transform magnitude of the (complex) envelope sampled at
// sample_rate GS/s, evaluated on a +-f_span window around the carrier.
EnvelopeSpectrum envelope_spectrum(const Envelope& env, double eta_q,
                                   double sample_rate = 10.0, double f_span = 1.0,
                                   int n_freq = 801);

// ---- gate simulation ----

enum class GateAxis { x, y, idle };
enum class GateComposition { single, two_halves };

struct GateSpec {
  GateAxis axis = GateAxis::x;
  double angle = 0.0;  // radians; ignored for idle
  GateComposition composition = GateComposition::two_halves;
  // Frame-phase updates (virtual z), radians: applied as exp(-i*phi*N-hat)
  // after each half (two_halves) or after the pulse (single). Empty = none.
  std::vector<double> frame_phases;
};

// Propagator of one calibrated pulse (or idle) of duration env.t_g in the
// rotating frame; midpoint matrix-exponential product with micro-step dt.
Eigen::MatrixXcd simulate_pulse(const TransmonSpectrum& sp, const Envelope& env,
                                double dt);

// Full gate propagator per the composition rule. For two_halves the envelope
// argument describes one half-pulse (duration t_g/2 of the gate, angle/2).
Eigen::MatrixXcd simulate_gate(const GateSpec& gate, const TransmonSpectrum& sp,
                               const Envelope& half_or_full, double dt);

// Standard library gate: axis +-x/y rotation by `angle` of total duration
// t_g_total, built per the two-halves default with sigma = segment/6.
Eigen::MatrixXcd standard_gate(GateAxis axis, double angle,
                               const TransmonSpectrum& sp, double t_g_total,
                               double drag_alpha, double dt,
                               GateComposition comp = GateComposition::two_halves);

// Diagonal frame-phase update exp(-i*phi*N-hat) on n_levels.
Eigen::MatrixXcd frame_phase_op(double phi, int n_levels);

// Measures the residual z-phase of a propagator's qubit block relative to the
// ideal rotation; used by the optional virtual-z calibration utility.
double qubit_phase_of(const Eigen::MatrixXcd& u, const Eigen::Matrix2cd& ideal);

struct GateMetrics {
  double fidelity = 0.0;     // six-polar-state average with subspace projection
  double leakage = 0.0;      // mean population left outside the qubit subspace
  double phase_error = 0.0;  // infidelity of the unitarized qubit block
};

GateMetrics gate_metrics(const Eigen::MatrixXcd& propagator,
                         const Eigen::Matrix2cd& ideal);

// Ideal qubit rotations for reference.
Eigen::Matrix2cd ideal_rotation(GateAxis axis, double angle);

}  // namespace transim
