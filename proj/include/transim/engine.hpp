#pragma once
// Hybrid weak-coupling master-equation engine: propagates the driven
// multi-level system under quantum bath channels (second-order
// time-convolutionless dissipator with memory) plus per-trajectory telegraph
// dephasing entered coherently, and averages trajectory ensembles.
//
// Three propagation routes share one physical model:
//  - a generic micro-step integrator (the reference; handles any program),
//  - a closed-form stream for drive-free programs (kernel integrals are
//    analytic when the frame Hamiltonian is diagonal),
//  - a cycle-streamed ensemble route for periodic DD programs (the dissipative
//    stream is trajectory-independent and is built once per cycle).
// Cross-agreement of the routes is enforced by tests, not assumed.

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <optional>
#include <vector>

#include "transim/bath.hpp"
#include "transim/data.hpp"
#include "transim/fluctuators.hpp"
#include "transim/schedule.hpp"
#include "transim/transmon.hpp"

namespace transim {

// One quantum bath channel: spectral parameters plus the system coupling
// operator in the eigenbasis. `modes` caches the exponential-sum compression
// of the bath correlation function; when absent the engine fits it from the
// bath parameters (span, sampling, and tolerance derived from the spectrum).
struct NoiseChannel {
  OhmicBathSpec bath;
  Eigen::MatrixXcd coupling;
  std::optional<ExpSumFit> modes;
};

struct HybridNoiseModel {
  std::vector<NoiseChannel> channels;
  // Telegraph dephasing: active when fluctuators.count > 0 and b > 0 and a
  // coupling axis is set. Enters the commutator, never the dissipative kernel.
  FluctuatorEnsembleSpec fluctuators;
  Eigen::MatrixXcd fluct_coupling;
  // Re-draw switching rates per trajectory (each trajectory is an independent
  // realization of the ensemble); false freezes rates at the base draw.
  bool redraw_rates = true;

  bool has_fluctuators() const;
};

struct PropagationOptions {
  double dt = 0.02;              // micro-step, ns (generic and DD-stream routes)
  double stream_dt = 5.0;        // macro step of the drive-free stream, ns
  double ensemble_dt = 0.2;      // telegraph phase-update spacing in the DD stream, ns
  double memory_cutoff = 4000.0; // kernel truncation of the direct-quadrature route, ns
  // Reuse the DD cycle superoperator from this cycle index on (the kernel has
  // equilibrated by then); 0 never reuses and streams every cycle.
  int dd_periodic_after = 0;
  std::vector<double> store_instants;  // ns, ascending, within the program span
  bool record_propagators = false;     // keep U_sys micro-step snapshots
  bool record_lambda = false;          // keep per-channel kernel operators at instants
  double trace_tolerance = 1e-5;       // abort threshold on |tr rho - 1|
};

// Micro-step snapshots of the drive-only system propagator U_sys(t_k <- 0).
struct PropagatorHistory {
  std::vector<double> times;
  std::vector<Eigen::MatrixXcd> u;
};

struct TrajectoryResult {
  std::vector<double> instants;
  std::vector<Eigen::MatrixXcd> states;  // rho at each instant
  // Per-channel kernel operators Lambda_i(t) at each instant (record_lambda).
  std::vector<std::vector<Eigen::MatrixXcd>> lambda;  // [instant][channel]
  PropagatorHistory history;                          // record_propagators
  double max_trace_error = 0.0;
  double max_hermiticity_error = 0.0;
  double min_eigenvalue = 0.0;
};

// Exponential-sum compression of a bath correlation function with controls
// derived from the spectral shape: sampling resolution from the quadrature
// support, span from the kernel memory, residual target from the ripple floor
// the truncation edge imposes. This is what the engine runs when a channel
// carries no precomputed modes.
ExpSumFit derive_channel_modes(const OhmicBathSpec& bath);

// ---- density-matrix diagnostics ----

double trace_error(const Eigen::MatrixXcd& rho);
double hermiticity_error(const Eigen::MatrixXcd& rho);
double min_eigenvalue(const Eigen::MatrixXcd& rho);

// |psi><psi| on the qubit subspace embedded into n_levels.
Eigen::MatrixXcd embed_pure(const Eigen::Vector2cd& psi, int n_levels);

// <psi| P rho P |psi> with P the qubit-subspace projector; leaked population
// counts as infidelity (no renormalization).
double state_fidelity(const Eigen::MatrixXcd& rho, const Eigen::Vector2cd& psi);

// ---- kernel operator, direct-quadrature route ----

// Lambda(t) = integral_0^t C(t - tau) U_sys(t,tau) A(tau) U_sys(t,tau)^dag dtau
// with A(tau) the drive-frame coupling (elementwise phases at omega_d) and the
// correlation function interpolated on `corr`; trapezoid over the recorded
// micro-step grid, truncated at memory_cutoff. The independent reference for
// the engine's compressed-kernel route. Throws when t is not covered by the
// history or the grid.
Eigen::MatrixXcd lambda_operator_at(double t, const Eigen::MatrixXcd& coupling,
                                    const PropagatorHistory& history,
                                    const CorrelationGrid& corr, double omega_d,
                                    double memory_cutoff);

// ---- propagation ----

// Generic micro-step route: one trajectory with an explicit fluctuator
// realization (pass nullptr for none). Uniform micro-steps; the telegraph
// shift enters the midpoint Hamiltonian with its exact step-averaged value.
TrajectoryResult propagate_trajectory(const Eigen::MatrixXcd& rho0,
                                      const PulseProgram& program,
                                      const TransmonSpectrum& sp,
                                      const HybridNoiseModel& noise,
                                      const FluctuatorRealization* realization,
                                      const PropagationOptions& opts);

// Ensemble mean of state_fidelity(rho(t), psi_ref) at the stored instants,
// with the trajectory-sample standard error in half_width. Deterministic
// given base_seed for any worker count. Without fluctuators the dynamics are
// deterministic and a single run is taken regardless of n_traj.
DecayCurve run_ensemble(const Eigen::MatrixXcd& rho0,
                        const Eigen::Vector2cd& psi_ref,
                        const PulseProgram& program, const TransmonSpectrum& sp,
                        const HybridNoiseModel& noise, int n_traj,
                        std::uint64_t base_seed, const PropagationOptions& opts,
                        int workers = 1);

// Full decay-curve convenience: builds the instant grid and schedule for the
// experiment kind, prepares the state ideally, and runs the ensemble.
DecayCurve simulate_decay_curve(const U3Params& u3, ExperimentKind kind,
                                const TransmonSpectrum& sp,
                                const HybridNoiseModel& noise, double total,
                                int n_intervals, int n_traj,
                                std::uint64_t base_seed,
                                const PropagationOptions& opts,
                                const GateTimings& gates, int workers = 1);

}  // namespace transim
