#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <vector>

#include "transim/engine.hpp"
#include "transim/util.hpp"

using namespace transim;
using Cx = std::complex<double>;

namespace {

OhmicBathSpec quito_x_bath() {
  OhmicBathSpec b;
  b.g = 5.734e-3;
  b.omega_c = 1.948;
  return b;
}

OhmicBathSpec quito_z_bath() {
  OhmicBathSpec b;
  b.g = 4.41e-3;
  b.omega_c = 5.69e-3;
  return b;
}

const TransmonSpectrum& quito_spectrum() {
  static TransmonSpectrum sp = spectrum_from_device(5.0806, 0.3192, 4);
  return sp;
}

const ExpSumFit& cached_x_modes() {
  static ExpSumFit f = derive_channel_modes(quito_x_bath());
  return f;
}

const ExpSumFit& cached_z_modes() {
  static ExpSumFit f = derive_channel_modes(quito_z_bath());
  return f;
}

NoiseChannel x_channel() {
  NoiseChannel ch;
  ch.bath = quito_x_bath();
  ch.coupling = quito_spectrum().coupling_x;
  ch.modes = cached_x_modes();
  return ch;
}

NoiseChannel z_channel() {
  NoiseChannel ch;
  ch.bath = quito_z_bath();
  ch.coupling = quito_spectrum().coupling_z;
  ch.modes = cached_z_modes();
  return ch;
}

// Minimal two-level spectrum for channel-level checks with hand-picked
// coupling operators.
TransmonSpectrum two_level_spectrum() {
  TransmonSpectrum sp;
  sp.spec.n_levels = 2;
  sp.omega = {0.0, 5.0806};
  sp.qubit_freq = 5.0806;
  sp.anharmonicity = 0.3192;
  sp.couplings = {1.0};
  return sp;
}

Eigen::Vector2cd plus_state() {
  Eigen::Vector2cd psi;
  psi << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
  return psi;
}

PulseProgram idle_program(double duration) {
  PulseProgram p;
  ScheduleSegment seg;
  seg.axis = GateAxis::idle;
  seg.duration = duration;
  seg.envelope.t_g = duration;
  seg.envelope.amplitude = 0.0;
  p.segments.push_back(seg);
  return p;
}

}  // namespace

TEST_CASE("density-matrix diagnostics and the qubit-block fidelity") {
  Eigen::Vector2cd zero, one;
  zero << 1.0, 0.0;
  one << 0.0, 1.0;
  const Eigen::MatrixXcd rho0 = embed_pure(zero, 4);
  CHECK(rho0.rows() == 4);
  CHECK(trace_error(rho0) < 1e-15);
  CHECK(hermiticity_error(rho0) < 1e-15);
  CHECK(min_eigenvalue(rho0) > -1e-15);
  CHECK(state_fidelity(rho0, zero) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(state_fidelity(rho0, one) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(state_fidelity(rho0, plus_state()) ==
        doctest::Approx(0.5).epsilon(1e-12));

  // fidelity against an embedded pure state is the squared overlap
  for (double theta : {0.3, 1.2, 2.8}) {
    for (double phi : {0.0, 1.1, -2.0}) {
      Eigen::Vector2cd a, b;
      a << std::cos(0.4), std::sin(0.4) * std::exp(Cx(0.0, 0.7));
      b << std::cos(0.5 * theta), std::sin(0.5 * theta) * std::exp(Cx(0.0, phi));
      const double direct = std::norm(b.dot(a));
      CHECK(state_fidelity(embed_pure(a, 4), b) ==
            doctest::Approx(direct).epsilon(1e-12));
    }
  }

  // leaked population counts as infidelity: a state fully outside the qubit
  // subspace has zero fidelity against any qubit state
  Eigen::MatrixXcd leaked = Eigen::MatrixXcd::Zero(4, 4);
  leaked(2, 2) = 1.0;
  CHECK(state_fidelity(leaked, plus_state()) == doctest::Approx(0.0));
}

TEST_CASE("kernel operator vanishes at t = 0 and integrates a static channel") {
  // diagonal coupling on a drive-free program: the kernel operator is exactly
  // the coupling times the running integral of the correlation function
  OhmicBathSpec bath;
  bath.g = 5e-3;
  bath.omega_c = 0.05;

  TransmonSpectrum sp = quito_spectrum();
  NoiseChannel ch;
  ch.bath = bath;
  Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(4, 4);
  a.diagonal() << 0.3, -0.4, 0.1, 0.05;
  ch.coupling = a;
  ch.modes = derive_channel_modes(bath);

  HybridNoiseModel noise;
  noise.channels.push_back(ch);

  PropagationOptions opts;
  opts.store_instants = {0.0, 100.0};
  opts.record_lambda = true;

  const TrajectoryResult res = propagate_trajectory(
      embed_pure(plus_state(), 4), idle_program(100.0), sp, noise, nullptr,
      opts);
  REQUIRE(res.lambda.size() == 2);
  CHECK(res.lambda[0][0].cwiseAbs().maxCoeff() < 1e-14);

  // direct integral of C over [0, 100]
  const int n_s = 5001;
  std::vector<double> taus(n_s);
  for (int i = 0; i < n_s; ++i) taus[i] = 100.0 * i / (n_s - 1);
  const auto c_vals = correlation_samples(bath, taus);
  Cx integral = 0.0;
  for (int i = 0; i + 1 < n_s; ++i)
    integral += 0.5 * (taus[i + 1] - taus[i]) * (c_vals[i] + c_vals[i + 1]);

  const Eigen::MatrixXcd expected = a * integral;
  const double scale = expected.cwiseAbs().maxCoeff();
  CHECK((res.lambda[1][0] - expected).cwiseAbs().maxCoeff() < 2e-3 * scale);
}

TEST_CASE("kernel recursion agrees with direct quadrature under drive") {
  const TransmonSpectrum& sp = quito_spectrum();
  HybridNoiseModel noise;
  noise.channels.push_back(x_channel());

  // one calibrated pi pulse then idle
  PulseProgram program;
  const double t_half = 35.0;
  for (int i = 0; i < 2; ++i) {
    ScheduleSegment seg;
    seg.axis = GateAxis::x;
    seg.duration = t_half;
    seg.envelope = make_envelope(0.5 * pi, t_half, t_half / 6.0, sp.couplings[0]);
    seg.envelope.drag_alpha = 0.5;
    program.segments.push_back(seg);
  }
  ScheduleSegment tail;
  tail.axis = GateAxis::idle;
  tail.duration = 100.0;
  tail.envelope.t_g = 100.0;
  tail.envelope.amplitude = 0.0;
  program.segments.push_back(tail);

  PropagationOptions opts;
  opts.dt = 0.005;
  opts.store_instants = {170.0};
  opts.record_propagators = true;
  opts.record_lambda = true;

  const TrajectoryResult res =
      propagate_trajectory(embed_pure(plus_state(), 4), program, sp, noise,
                           nullptr, opts);
  REQUIRE(res.lambda.size() == 1);
  const Eigen::MatrixXcd lam_rec = res.lambda[0][0];

  const CorrelationGrid corr =
      correlation_function_grid(quito_x_bath(), 171.0, 65537);
  const Eigen::MatrixXcd lam_direct = lambda_operator_at(
      170.0, sp.coupling_x, res.history, corr, sp.qubit_freq, 4000.0);

  const double scale = lam_direct.cwiseAbs().maxCoeff();
  CHECK(scale > 0.0);
  CHECK((lam_rec - lam_direct).cwiseAbs().maxCoeff() < 5e-3 * scale);

  // the correlation memory is a couple of ns here, so shrinking the cutoff
  // far below the span must not move the result
  const Eigen::MatrixXcd lam_cut = lambda_operator_at(
      170.0, sp.coupling_x, res.history, corr, sp.qubit_freq, 50.0);
  CHECK((lam_cut - lam_direct).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("relaxation rate matches the spectral density at the transition") {
  const TransmonSpectrum sp = two_level_spectrum();
  NoiseChannel ch;
  ch.bath = quito_x_bath();
  ch.coupling = Eigen::MatrixXcd{{0.0, 1.0}, {1.0, 0.0}};
  ch.modes = cached_x_modes();
  HybridNoiseModel noise;
  noise.channels.push_back(ch);

  Eigen::Vector2cd one;
  one << 0.0, 1.0;

  PropagationOptions opts;
  for (int k = 0; k <= 10; ++k) opts.store_instants.push_back(500.0 * k);

  const DecayCurve curve =
      run_ensemble(embed_pure(one, 2), one, idle_program(5000.0), sp, noise, 1,
                   1, opts);

  // least-squares slope of log fidelity
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const int n = static_cast<int>(curve.instants.size());
  for (int i = 0; i < n; ++i) {
    const double x = curve.instants[i];
    const double y = std::log(curve.mean[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double gamma = ohmic_spectrum_at(quito_x_bath(), sp.qubit_freq);
  CHECK(std::abs(-slope - gamma) < 0.05 * gamma);
}

TEST_CASE("telegraph dephasing reproduces the two-state ensemble average") {
  // single fluctuator at fixed rate, no quantum channels: the free-evolution
  // coherence of |+> averages to the closed-form telegraph decay
  const TransmonSpectrum sp = two_level_spectrum();
  HybridNoiseModel noise;
  noise.fluctuators.count = 1;
  noise.fluctuators.b = 8e-3;
  noise.fluctuators.gamma_min = 0.02;
  noise.fluctuators.gamma_max = 0.02;
  noise.fluct_coupling = Eigen::MatrixXcd{{0.5, 0.0}, {0.0, -0.5}};

  PropagationOptions opts;
  for (int k = 0; k <= 10; ++k) opts.store_instants.push_back(50.0 * k);

  const int n_traj = 600;
  const DecayCurve curve =
      run_ensemble(embed_pure(plus_state(), 2), plus_state(),
                   idle_program(500.0), sp, noise, n_traj, 20260822, opts);

  const double gamma = 0.02;
  // b is a rate like gamma: the |+> phase toggles at +-b * (a_0 - a_1), so
  // the half-splitting entering the telegraph formula is b/2 for a unit-gap
  // axis, with no 2*pi anywhere
  const double b_eff = 0.5 * noise.fluctuators.b;
  const double mu = std::sqrt(gamma * gamma - 4.0 * b_eff * b_eff);
  for (size_t i = 0; i < curve.instants.size(); ++i) {
    const double t = curve.instants[i];
    const double d = std::exp(-gamma * t) *
                     (std::cosh(mu * t) + (gamma / mu) * std::sinh(mu * t));
    const double expect = 0.5 * (1.0 + d);
    CHECK(curve.half_width[i] < 2e-2);
    CHECK(std::abs(curve.mean[i] - expect) <
          std::max(3.0 * curve.half_width[i], 1e-3));
  }
}

TEST_CASE("zero-coupling evolution leaves the state untouched") {
  const TransmonSpectrum& sp = quito_spectrum();
  HybridNoiseModel noise;  // no channels, no fluctuators

  PropagationOptions opts;
  opts.store_instants = {0.0, 150.0, 300.0};

  const Eigen::MatrixXcd rho0 = embed_pure(plus_state(), 4);
  const TrajectoryResult res =
      propagate_trajectory(rho0, idle_program(300.0), sp, noise, nullptr, opts);
  for (const auto& rho : res.states)
    CHECK((rho - rho0).cwiseAbs().maxCoeff() < 1e-12);

  const DecayCurve curve = run_ensemble(rho0, plus_state(),
                                        idle_program(300.0), sp, noise, 1, 7,
                                        opts);
  for (double f : curve.mean) CHECK(f == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("zero telegraph amplitude collapses the ensemble to one run") {
  const TransmonSpectrum& sp = quito_spectrum();
  HybridNoiseModel noise;
  noise.channels.push_back(x_channel());
  noise.channels.push_back(z_channel());
  noise.fluctuators.count = 10;
  noise.fluctuators.b = 0.0;  // inactive
  noise.fluct_coupling = sp.coupling_z;
  CHECK_FALSE(noise.has_fluctuators());

  PropagationOptions opts;
  opts.store_instants = {0.0, 400.0, 800.0};

  const Eigen::MatrixXcd rho0 = embed_pure(plus_state(), 4);
  const DecayCurve many = run_ensemble(rho0, plus_state(),
                                       idle_program(800.0), sp, noise, 40, 3,
                                       opts);
  const DecayCurve single = run_ensemble(rho0, plus_state(),
                                         idle_program(800.0), sp, noise, 1, 3,
                                         opts);
  for (size_t i = 0; i < many.mean.size(); ++i) {
    CHECK(many.mean[i] == single.mean[i]);
    CHECK(many.half_width[i] == 0.0);
  }
}

TEST_CASE("ensemble reduction is bit-identical for any worker count") {
  const TransmonSpectrum& sp = quito_spectrum();
  HybridNoiseModel noise;
  noise.channels.push_back(x_channel());
  noise.fluctuators.count = 10;
  noise.fluctuators.b = 5.98e-4;
  noise.fluctuators.gamma_min = 1e-4;
  noise.fluctuators.gamma_max = 5.1e-2;
  noise.fluct_coupling = sp.coupling_z;

  PropagationOptions opts;
  opts.store_instants = {0.0, 560.0, 1120.0};

  const Eigen::MatrixXcd rho0 = embed_pure(plus_state(), 4);
  const DecayCurve serial = run_ensemble(rho0, plus_state(),
                                         idle_program(1120.0), sp, noise, 72,
                                         99, opts, 1);
  const DecayCurve threaded = run_ensemble(rho0, plus_state(),
                                           idle_program(1120.0), sp, noise, 72,
                                           99, opts, 3);
  for (size_t i = 0; i < serial.mean.size(); ++i) {
    CHECK(serial.mean[i] == threaded.mean[i]);
    CHECK(serial.half_width[i] == threaded.half_width[i]);
  }
}

TEST_CASE("the propagation map is linear in the state") {
  const TransmonSpectrum& sp = quito_spectrum();
  HybridNoiseModel noise;
  noise.channels.push_back(x_channel());
  noise.channels.push_back(z_channel());

  PropagationOptions opts;
  opts.store_instants = {100.0};

  Eigen::Vector2cd zero, one;
  zero << 1.0, 0.0;
  one << 0.0, 1.0;
  const Eigen::MatrixXcd rho_a = embed_pure(zero, 4);
  const Eigen::MatrixXcd rho_b = embed_pure(one, 4);
  const Eigen::MatrixXcd rho_c = 0.3 * rho_a + 0.7 * rho_b;

  const PulseProgram program = idle_program(100.0);
  const auto out_a =
      propagate_trajectory(rho_a, program, sp, noise, nullptr, opts).states[0];
  const auto out_b =
      propagate_trajectory(rho_b, program, sp, noise, nullptr, opts).states[0];
  const auto out_c =
      propagate_trajectory(rho_c, program, sp, noise, nullptr, opts).states[0];
  CHECK((out_c - (0.3 * out_a + 0.7 * out_b)).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("halving the micro-step leaves a driven noisy evolution unchanged") {
  const TransmonSpectrum& sp = quito_spectrum();
  HybridNoiseModel noise;
  noise.channels.push_back(x_channel());
  noise.channels.push_back(z_channel());

  PulseProgram program;
  const double t_half = 35.0;
  for (int i = 0; i < 2; ++i) {
    ScheduleSegment seg;
    seg.axis = GateAxis::x;
    seg.duration = t_half;
    seg.envelope = make_envelope(0.5 * pi, t_half, t_half / 6.0, sp.couplings[0]);
    seg.envelope.drag_alpha = 0.5;
    program.segments.push_back(seg);
  }
  ScheduleSegment tail;
  tail.axis = GateAxis::idle;
  tail.duration = 30.0;
  tail.envelope.t_g = 30.0;
  tail.envelope.amplitude = 0.0;
  program.segments.push_back(tail);

  PropagationOptions coarse;
  coarse.dt = 0.02;
  coarse.store_instants = {100.0};
  PropagationOptions fine = coarse;
  fine.dt = 0.01;

  const Eigen::MatrixXcd rho0 = embed_pure(plus_state(), 4);
  const auto rho_coarse =
      propagate_trajectory(rho0, program, sp, noise, nullptr, coarse).states[0];
  const auto rho_fine =
      propagate_trajectory(rho0, program, sp, noise, nullptr, fine).states[0];
  CHECK((rho_coarse - rho_fine).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("drive-free stream route agrees with the micro-step route") {
  const TransmonSpectrum& sp = quito_spectrum();
  HybridNoiseModel noise;
  noise.channels.push_back(x_channel());
  noise.channels.push_back(z_channel());

  PropagationOptions opts;
  opts.store_instants = {0.0, 280.0, 560.0};

  const Eigen::MatrixXcd rho0 = embed_pure(plus_state(), 4);
  const TrajectoryResult micro = propagate_trajectory(
      rho0, idle_program(560.0), sp, noise, nullptr, opts);
  const DecayCurve stream = run_ensemble(rho0, plus_state(),
                                         idle_program(560.0), sp, noise, 1, 5,
                                         opts);
  for (size_t i = 0; i < stream.mean.size(); ++i) {
    const double f_micro = state_fidelity(micro.states[i], plus_state());
    CHECK(std::abs(stream.mean[i] - f_micro) < 1e-5);
  }

  CHECK(micro.max_trace_error < 1e-10);
  CHECK(micro.max_hermiticity_error < 1e-10);
  CHECK(micro.min_eigenvalue > -1e-4);
}

TEST_CASE("periodic-cycle stream agrees with the micro-step route") {
  const TransmonSpectrum& sp = quito_spectrum();
  HybridNoiseModel noise;
  noise.channels.push_back(x_channel());
  noise.channels.push_back(z_channel());

  GateTimings gates;
  const PulseProgram program =
      build_schedule(ExperimentKind::dd, 1120.0, 560.0, sp, gates);
  REQUIRE(program.cycle_span == doctest::Approx(560.0));

  PropagationOptions opts;
  opts.store_instants = {0.0, 560.0, 1120.0};

  const Eigen::MatrixXcd rho0 = embed_pure(plus_state(), 4);
  const TrajectoryResult micro =
      propagate_trajectory(rho0, program, sp, noise, nullptr, opts);
  const DecayCurve stream = run_ensemble(rho0, plus_state(), program, sp,
                                         noise, 1, 5, opts);
  for (size_t i = 0; i < stream.mean.size(); ++i) {
    const double f_micro = state_fidelity(micro.states[i], plus_state());
    CHECK(std::abs(stream.mean[i] - f_micro) < 1e-5);
  }
  CHECK(micro.max_trace_error < 1e-9);
  CHECK(micro.max_hermiticity_error < 1e-9);
  CHECK(micro.min_eigenvalue > -1e-4);
}

TEST_CASE("freezing the cycle superoperator changes nothing measurable") {
  const TransmonSpectrum& sp = quito_spectrum();
  HybridNoiseModel noise;
  noise.channels.push_back(x_channel());
  noise.channels.push_back(z_channel());

  GateTimings gates;
  const PulseProgram program =
      build_schedule(ExperimentKind::dd, 2240.0, 560.0, sp, gates);

  PropagationOptions streamed;
  streamed.store_instants = {0.0, 560.0, 1120.0, 1680.0, 2240.0};
  PropagationOptions frozen = streamed;
  frozen.dd_periodic_after = 2;

  const Eigen::MatrixXcd rho0 = embed_pure(plus_state(), 4);
  const DecayCurve a = run_ensemble(rho0, plus_state(), program, sp, noise, 1,
                                    5, streamed);
  const DecayCurve b = run_ensemble(rho0, plus_state(), program, sp, noise, 1,
                                    5, frozen);
  for (size_t i = 0; i < a.mean.size(); ++i)
    CHECK(std::abs(a.mean[i] - b.mean[i]) < 1e-5);
}

TEST_CASE("automatically derived compression matches a supplied one") {
  OhmicBathSpec bath;
  bath.g = 5e-3;
  bath.omega_c = 0.05;

  NoiseChannel with, without;
  with.bath = bath;
  without.bath = bath;
  with.coupling = quito_spectrum().coupling_z;
  without.coupling = quito_spectrum().coupling_z;
  with.modes = derive_channel_modes(bath);

  PropagationOptions opts;
  opts.store_instants = {50.0};

  const Eigen::MatrixXcd rho0 = embed_pure(plus_state(), 4);
  HybridNoiseModel noise_a, noise_b;
  noise_a.channels.push_back(with);
  noise_b.channels.push_back(without);
  const auto rho_a =
      propagate_trajectory(rho0, idle_program(50.0), quito_spectrum(), noise_a,
                           nullptr, opts)
          .states[0];
  const auto rho_b =
      propagate_trajectory(rho0, idle_program(50.0), quito_spectrum(), noise_b,
                           nullptr, opts)
          .states[0];
  CHECK((rho_a - rho_b).cwiseAbs().maxCoeff() < 1e-12);
}
