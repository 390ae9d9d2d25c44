#include "doctest.h"

#include <cmath>
#include <complex>
#include <random>

#include "transim/pulse.hpp"
#include "transim/transmon.hpp"
#include "transim/util.hpp"

using namespace transim;

namespace {

const TransmonSpectrum& quito4() {
  static const TransmonSpectrum sp = spectrum_from_device(5.0806, 0.3192, 4);
  return sp;
}

const TransmonSpectrum& quito2() {
  static const TransmonSpectrum sp = spectrum_from_device(5.0806, 0.3192, 2);
  return sp;
}

// Simpson quadrature of f over [a, b] with n (even) intervals.
template <typename F>
double simpson(F f, double a, double b, int n) {
  const double h = (b - a) / n;
  double acc = f(a) + f(b);
  for (int i = 1; i < n; ++i) acc += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

double max_abs(const Eigen::MatrixXcd& m) { return m.cwiseAbs().maxCoeff(); }

double infidelity(const Eigen::MatrixXcd& u, GateAxis axis, double angle) {
  return 1.0 - gate_metrics(u, ideal_rotation(axis, angle)).fidelity;
}

}  // namespace

TEST_CASE("calibrated envelope delivers the requested rotation angle") {
  const double g01 = quito4().couplings[0];
  const Envelope env = make_envelope(pi, 70.0, 70.0 / 6.0, g01);

  CHECK(effective_angle(env, g01) == doctest::Approx(pi).epsilon(1e-10));

  // independent quadrature route for the delivered angle
  const double quad = simpson(
      [&](double t) { return two_pi * g01 * env.value_at(t); }, 0.0, 70.0, 1 << 15);
  CHECK(quad == doctest::Approx(pi).epsilon(1e-6));
  CHECK(std::abs(quad - two_pi * g01 * env.area()) / pi < 1e-8);

  // baseline subtraction and windowing
  CHECK(env.value_at(0.0) == 0.0);
  CHECK(env.value_at(70.0) == 0.0);
  CHECK(env.value_at(-1.0) == 0.0);
  CHECK(env.value_at(71.0) == 0.0);

  const Envelope zero = make_envelope(0.0, 70.0, 70.0 / 6.0, g01);
  CHECK(zero.amplitude == 0.0);
  CHECK(zero.value_at(35.0) == 0.0);

  CHECK_THROWS(make_envelope(pi, -1.0, 10.0, g01));
  CHECK_THROWS(make_envelope(pi, 70.0, 0.0, g01));
  CHECK_THROWS(make_envelope(pi, 70.0, 10.0, -1.0));
}

TEST_CASE("peak amplitude halves when the gate doubles at fixed shape ratio") {
  const double g01 = quito4().couplings[0];
  const Envelope short_env = make_envelope(pi, 70.0, 70.0 / 6.0, g01);
  const Envelope long_env = make_envelope(pi, 140.0, 140.0 / 6.0, g01);
  const double ratio = short_env.value_at(35.0) / long_env.value_at(70.0);
  CHECK(ratio == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("drag quadrature tracks the envelope derivative") {
  const double eta = quito4().anharmonicity;
  const double g01 = quito4().couplings[0];
  Envelope env = make_envelope(pi, 70.0, 70.0 / 6.0, g01);

  SUBCASE("disabled drag is purely real") {
    env.drag_alpha = 0.0;
    CHECK(env.complex_value_at(21.0, eta).imag() == 0.0);
    CHECK(env.complex_value_at(21.0, eta).real() ==
          doctest::Approx(env.value_at(21.0)).epsilon(1e-12));
  }

  SUBCASE("quadrature is the scaled derivative and integrates to zero") {
    env.drag_alpha = 0.5;
    for (double t : {5.0, 21.0, 35.0, 50.0, 64.0}) {
      const double quad = env.complex_value_at(t, eta).imag();
      CHECK(quad == doctest::Approx(env.drag_alpha * env.derivative_at(t) /
                                    (two_pi * eta))
                        .epsilon(1e-12));
    }
    const double net = simpson(
        [&](double t) { return env.complex_value_at(t, eta).imag(); }, 0.0, 70.0,
        1 << 14);
    CHECK(std::abs(net) < 1e-12);
  }

  SUBCASE("peak ratio matches the closed-form gaussian derivative") {
    env.drag_alpha = 0.5;
    double peak_in = 0.0, peak_quad = 0.0;
    for (int i = 0; i <= 70000; ++i) {
      const double t = i * 1e-3;
      peak_in = std::max(peak_in, std::abs(env.value_at(t)));
      peak_quad = std::max(peak_quad, std::abs(env.complex_value_at(t, eta).imag()));
    }
    const double base = std::exp(-0.5 * 35.0 * 35.0 / (env.sigma * env.sigma));
    const double analytic = env.drag_alpha * std::exp(-0.5) / env.sigma /
                            (two_pi * eta * (1.0 - base));
    CHECK(peak_quad / peak_in == doctest::Approx(analytic).epsilon(1e-6));
  }
}

TEST_CASE("drive hamiltonian matches the qubit-subspace reduction") {
  const double g01 = quito2().couplings[0];
  const Envelope env = make_envelope(pi, 70.0, 70.0 / 6.0, g01);

  SUBCASE("two-level resonant drive is the in-phase ladder") {
    for (double t : {10.0, 35.0, 42.0}) {
      const Eigen::MatrixXcd h = drive_hamiltonian_at(t, quito2(), env);
      CHECK(std::abs(h(0, 0)) < 1e-14);
      CHECK(std::abs(h(1, 1)) < 1e-12);
      CHECK(h(1, 0).real() ==
            doctest::Approx(0.5 * g01 * env.value_at(t)).epsilon(1e-12));
      CHECK(std::abs(h(1, 0).imag()) < 1e-14);
    }
  }

  SUBCASE("zero drive leaves the rotating-frame diagonal") {
    Envelope off = env;
    off.amplitude = 0.0;
    const Eigen::MatrixXcd h = drive_hamiltonian_at(35.0, quito4(), off);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        if (i != j) CHECK(std::abs(h(i, j)) == 0.0);
    CHECK(std::abs(h(0, 0)) < 1e-14);
    CHECK(std::abs(h(1, 1)) < 1e-12);
    CHECK(h(2, 2).real() ==
          doctest::Approx(-quito4().anharmonicity).epsilon(1e-10));
  }

  SUBCASE("hermitian at random times") {
    Envelope dragged = make_envelope(pi, 70.0, 70.0 / 6.0, quito4().couplings[0]);
    dragged.drag_alpha = 1.0;
    dragged.phase = 0.7;
    std::mt19937_64 rng(12345);
    std::uniform_real_distribution<double> pick(0.0, 70.0);
    for (int i = 0; i < 100; ++i) {
      const Eigen::MatrixXcd h = drive_hamiltonian_at(pick(rng), quito4(), dragged);
      CHECK(max_abs(h - h.adjoint()) < 1e-14);
    }
  }
}

TEST_CASE("envelope spectrum reflects gate bandwidth") {
  // device with 0.2 GHz anharmonicity for the overlap check
  const double eta = 0.2;
  const Envelope env70 = make_envelope(pi, 70.0, 70.0 / 6.0, 1.0);
  const Envelope env10 = make_envelope(pi, 10.0, 10.0 / 6.0, 1.0);
  const EnvelopeSpectrum s70 = envelope_spectrum(env70, eta);
  const EnvelopeSpectrum s10 = envelope_spectrum(env10, eta);

  auto half_width = [](const EnvelopeSpectrum& s) {
    const int n = static_cast<int>(s.freq.size());
    const int i0 = n / 2;  // f = 0 for the symmetric default grid
    for (int i = i0; i + 1 < n; ++i)
      if (s.magnitude[i] >= 0.5 && s.magnitude[i + 1] < 0.5) {
        const double frac = (s.magnitude[i] - 0.5) / (s.magnitude[i] - s.magnitude[i + 1]);
        return s.freq[i] + frac * (s.freq[i + 1] - s.freq[i]);
      }
    return s.freq[n - 1];
  };

  SUBCASE("bandwidth scales inversely with duration") {
    const double w70 = half_width(s70);
    const double w10 = half_width(s10);
    CHECK(w10 / w70 == doctest::Approx(7.0).epsilon(0.2));
    // gaussian half-width estimate 1/(2 pi sigma) * sqrt(2 ln 2)
    const double expect70 = std::sqrt(2.0 * std::log(2.0)) / (two_pi * env70.sigma);
    CHECK(w70 == doctest::Approx(expect70).epsilon(0.1));
  }

  SUBCASE("short pulse overlaps the leakage transition") {
    auto mag_at = [](const EnvelopeSpectrum& s, double f) {
      int best = 0;
      for (int i = 1; i < static_cast<int>(s.freq.size()); ++i)
        if (std::abs(s.freq[i] - f) < std::abs(s.freq[best] - f)) best = i;
      return s.magnitude[best];
    };
    CHECK(mag_at(s10, -eta) > 0.1);
    CHECK(mag_at(s70, -eta) < 0.02);
  }

  SUBCASE("magnitude is even for a real envelope") {
    const int n = static_cast<int>(s70.freq.size());
    for (int i = 0; i < n; ++i)
      CHECK(s70.magnitude[i] ==
            doctest::Approx(s70.magnitude[n - 1 - i]).epsilon(1e-9));
  }

  SUBCASE("time shift leaves the magnitude unchanged") {
    // delay by 25 ns and recompute the transform by hand on the same grid
    const double dt = 0.1;
    const int n_t = 951;  // covers [0, 95]
    std::vector<double> mag(s70.freq.size());
    double peak = 0.0;
    for (size_t i = 0; i < s70.freq.size(); ++i) {
      std::complex<double> acc = 0.0;
      for (int j = 0; j < n_t; ++j) {
        const double t = j * dt;
        acc += env70.value_at(t - 25.0) *
               std::exp(std::complex<double>(0.0, -two_pi * s70.freq[i] * t));
      }
      mag[i] = std::abs(acc) * dt;
      peak = std::max(peak, mag[i]);
    }
    for (size_t i = 0; i < mag.size(); ++i)
      CHECK(mag[i] / peak == doctest::Approx(s70.magnitude[i]).epsilon(1e-6));
  }
}

TEST_CASE("two-level pi pulse realizes the exact rotation") {
  const Eigen::MatrixXcd u =
      standard_gate(GateAxis::x, pi, quito2(), 70.0, 0.0, 0.005,
                    GateComposition::single);
  Eigen::Matrix2cd ideal = ideal_rotation(GateAxis::x, pi);
  CHECK(max_abs(u - ideal) < 1e-9);
  const GateMetrics m = gate_metrics(u, ideal);
  CHECK(m.fidelity >= 1.0 - 1e-9);
  CHECK(std::abs(m.leakage) < 1e-10);
}

TEST_CASE("four-level gate error reproduces the reference operating points") {
  const double dt = 0.01;
  const Eigen::MatrixXcd u_plain =
      standard_gate(GateAxis::x, pi, quito4(), 70.0, 0.0, dt);
  const Eigen::MatrixXcd u_half =
      standard_gate(GateAxis::x, pi, quito4(), 70.0, 0.5, dt);
  const Eigen::MatrixXcd u_full =
      standard_gate(GateAxis::x, pi, quito4(), 70.0, 1.0, dt);

  const double i_plain = infidelity(u_plain, GateAxis::x, pi);
  const double i_half = infidelity(u_half, GateAxis::x, pi);
  const double i_full = infidelity(u_full, GateAxis::x, pi);

  CHECK(i_plain == doctest::Approx(2.401e-4).epsilon(0.05));
  CHECK(i_full == doctest::Approx(3.081e-4).epsilon(0.05));
  CHECK(i_half == doctest::Approx(1.177e-6).epsilon(0.30));

  // contracted windows for the 70 ns operating point
  CHECK(i_full > 1e-4);
  CHECK(i_full < 5e-3);
  CHECK(i_half <= 1e-5);

  const GateMetrics m_plain = gate_metrics(u_plain, ideal_rotation(GateAxis::x, pi));
  CHECK(m_plain.leakage < 1e-5);
  const Eigen::MatrixXcd u_y =
      standard_gate(GateAxis::y, pi, quito4(), 70.0, 0.0, dt);
  CHECK(gate_metrics(u_y, ideal_rotation(GateAxis::y, pi)).leakage < 1e-5);
}

TEST_CASE("fast gate enters the leakage-dominated error range") {
  const Eigen::MatrixXcd u =
      standard_gate(GateAxis::x, pi, quito4(), 25.0, 0.0, 0.01);
  const double infid = infidelity(u, GateAxis::x, pi);
  CHECK(infid == doctest::Approx(1.988e-3).epsilon(0.05));
  CHECK(infid > 1e-3);
  CHECK(infid < 1e-2);
}

TEST_CASE("splitting the pulse into two halves reduces the error") {
  const double dt = 0.01;
  const double single = infidelity(
      standard_gate(GateAxis::x, pi, quito4(), 70.0, 1.0, dt,
                    GateComposition::single),
      GateAxis::x, pi);
  const double halves = infidelity(
      standard_gate(GateAxis::x, pi, quito4(), 70.0, 1.0, dt,
                    GateComposition::two_halves),
      GateAxis::x, pi);
  CHECK(halves < single);
}

TEST_CASE("y gate equals the z-conjugated x gate") {
  const double dt = 0.02;
  const Eigen::MatrixXcd ux = standard_gate(GateAxis::x, pi, quito4(), 70.0, 1.0, dt);
  const Eigen::MatrixXcd uy = standard_gate(GateAxis::y, pi, quito4(), 70.0, 1.0, dt);
  const Eigen::MatrixXcd p = frame_phase_op(-0.5 * pi, 4);
  CHECK(max_abs(uy - p * ux * p.adjoint()) < 1e-8);
  const double ix = infidelity(ux, GateAxis::x, pi);
  const double iy = infidelity(uy, GateAxis::y, pi);
  CHECK(ix == doctest::Approx(iy).epsilon(1e-9));
}

TEST_CASE("frame updates compose associatively") {
  const Eigen::MatrixXcd a = frame_phase_op(0.3, 4);
  const Eigen::MatrixXcd b = frame_phase_op(-1.1, 4);
  const Eigen::MatrixXcd c = frame_phase_op(2.4, 4);
  CHECK(max_abs(a * b - frame_phase_op(0.3 - 1.1, 4)) < 1e-14);
  CHECK(max_abs((a * b) * c - a * (b * c)) < 1e-14);

  // a two-halves gate with interleaved frame updates is the explicit product
  const double g01 = quito4().couplings[0];
  Envelope half = make_envelope(0.5 * pi, 35.0, 35.0 / 6.0, g01);
  GateSpec gate;
  gate.axis = GateAxis::x;
  gate.angle = pi;
  gate.composition = GateComposition::two_halves;
  gate.frame_phases = {0.37, -0.82};
  const Eigen::MatrixXcd composite = simulate_gate(gate, quito4(), half, 0.02);
  const Eigen::MatrixXcd u_half = simulate_pulse(quito4(), half, 0.02);
  const Eigen::MatrixXcd explicit_product = frame_phase_op(-0.82, 4) * u_half *
                                            frame_phase_op(0.37, 4) * u_half;
  CHECK(max_abs(composite - explicit_product) < 1e-12);
}

TEST_CASE("halving the micro-step leaves gate fidelity unchanged") {
  const double f_coarse = 1.0 - infidelity(
      standard_gate(GateAxis::x, pi, quito4(), 70.0, 1.0, 0.02), GateAxis::x, pi);
  const double f_fine = 1.0 - infidelity(
      standard_gate(GateAxis::x, pi, quito4(), 70.0, 1.0, 0.01), GateAxis::x, pi);
  CHECK(std::abs(f_coarse - f_fine) < 1e-8);
}

TEST_CASE("propagators stay unitary") {
  const Eigen::MatrixXcd eye = Eigen::MatrixXcd::Identity(4, 4);
  for (double alpha : {0.0, 1.0}) {
    for (double t_g : {25.0, 70.0}) {
      const Eigen::MatrixXcd u =
          standard_gate(GateAxis::x, pi, quito4(), t_g, alpha, 0.02);
      CHECK(max_abs(u.adjoint() * u - eye) < 1e-10);
    }
  }
  const Eigen::MatrixXcd uy = standard_gate(GateAxis::y, pi, quito4(), 70.0, 1.0, 0.02);
  CHECK(max_abs(uy.adjoint() * uy - eye) < 1e-10);
}

TEST_CASE("drag reduces the phase error at the operating point") {
  const double dt = 0.01;
  const GateMetrics plain = gate_metrics(
      standard_gate(GateAxis::x, pi, quito4(), 70.0, 0.0, dt),
      ideal_rotation(GateAxis::x, pi));
  const GateMetrics dragged = gate_metrics(
      standard_gate(GateAxis::x, pi, quito4(), 70.0, 0.5, dt),
      ideal_rotation(GateAxis::x, pi));
  CHECK(dragged.phase_error < plain.phase_error);
}

TEST_CASE("idle gate is a pure rotating-frame phase") {
  const Eigen::MatrixXcd u =
      standard_gate(GateAxis::idle, 0.0, quito4(), 35.0, 0.0, 0.02);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      if (i != j) CHECK(std::abs(u(i, j)) < 1e-12);
    }
    CHECK(std::abs(std::abs(u(i, i)) - 1.0) < 1e-12);
  }
  const double lam2 = quito4().omega[2] - 2.0 * quito4().qubit_freq;
  const std::complex<double> expect =
      std::exp(std::complex<double>(0.0, -two_pi * lam2 * 35.0));
  CHECK(std::abs(u(2, 2) - expect) < 1e-10);
}

TEST_CASE("gate metrics recognize an ideal embedded gate") {
  Eigen::MatrixXcd u = Eigen::MatrixXcd::Identity(4, 4);
  u.block(0, 0, 2, 2) = ideal_rotation(GateAxis::x, 0.5 * pi);
  const GateMetrics m = gate_metrics(u, ideal_rotation(GateAxis::x, 0.5 * pi));
  CHECK(m.fidelity == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(m.leakage) < 1e-12);
  CHECK(std::abs(m.phase_error) < 1e-12);
}

TEST_CASE("frame-phase calibration cancels the residual half-pulse phase") {
  const double g01 = quito4().couplings[0];
  Envelope half = make_envelope(0.5 * pi, 35.0, 35.0 / 6.0, g01);
  const Eigen::MatrixXcd u_half = simulate_pulse(quito4(), half, 0.01);
  const Eigen::Matrix2cd ideal = ideal_rotation(GateAxis::x, 0.5 * pi);
  const double beta = qubit_phase_of(u_half, ideal);
  const Eigen::MatrixXcd corrected = frame_phase_op(beta, 4) * u_half;
  CHECK(std::abs(qubit_phase_of(corrected, ideal)) < 1e-8);
}
