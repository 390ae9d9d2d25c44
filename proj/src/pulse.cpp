#include "transim/pulse.hpp"

#include <cmath>
#include <stdexcept>

#include "transim/util.hpp"

namespace transim {

namespace {

double gaussian_shape(double t, double t_g, double sigma) {
  const double u = t - 0.5 * t_g;
  return std::exp(-0.5 * u * u / (sigma * sigma));
}

}  // namespace

double Envelope::value_at(double t) const {
  if (t < 0.0 || t > t_g) return 0.0;
  const double base = gaussian_shape(0.0, t_g, sigma);
  return amplitude * (gaussian_shape(t, t_g, sigma) - base);
}

double Envelope::derivative_at(double t) const {
  if (t < 0.0 || t > t_g) return 0.0;
  const double u = t - 0.5 * t_g;
  return amplitude * (-u / (sigma * sigma)) * gaussian_shape(t, t_g, sigma);
}

std::complex<double> Envelope::complex_value_at(double t, double eta_q) const {
  const double re = value_at(t);
  if (drag_alpha == 0.0) return {re, 0.0};
  if (eta_q == 0.0)
    throw std::invalid_argument("complex_value_at: eta_q must be nonzero with DRAG");
  const double im = drag_alpha * derivative_at(t) / (two_pi * eta_q);
  return {re, im};
}

double Envelope::area() const {
  // integral of amplitude * (G(t) - G(0)) over [0, t_g], closed form
  const double base = gaussian_shape(0.0, t_g, sigma);
  const double core =
      sigma * std::sqrt(two_pi) * std::erf(t_g / (2.0 * std::sqrt(2.0) * sigma));
  return amplitude * (core - t_g * base);
}

Envelope make_envelope(double angle, double t_g, double sigma, double g01) {
  if (t_g <= 0.0) throw std::invalid_argument("make_envelope: t_g must be positive");
  if (sigma <= 0.0) throw std::invalid_argument("make_envelope: sigma must be positive");
  if (g01 <= 0.0) throw std::invalid_argument("make_envelope: g01 must be positive");
  Envelope env;
  env.t_g = t_g;
  env.sigma = sigma;
  env.amplitude = 1.0;
  const double unit_area = env.area();
  if (unit_area <= 0.0)
    throw std::runtime_error("make_envelope: degenerate envelope shape");
  env.amplitude = angle / (two_pi * g01 * unit_area);
  return env;
}

double effective_angle(const Envelope& env, double g01) {
  return two_pi * g01 * env.area();
}

Eigen::MatrixXcd drive_hamiltonian_at(double t, const TransmonSpectrum& sp,
                                      const Envelope& env) {
  const int n = sp.spec.n_levels;
  const double omega_d = sp.qubit_freq + env.detuning;
  Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(n, n);
  for (int k = 0; k < n; ++k) h(k, k) = sp.omega[k] - k * omega_d;
  const std::complex<double> eps =
      env.complex_value_at(t, sp.anharmonicity) *
      std::exp(std::complex<double>(0.0, env.phase));
  for (int k = 0; k + 1 < n; ++k) {
    h(k + 1, k) = 0.5 * sp.couplings[k] * eps;
    h(k, k + 1) = std::conj(h(k + 1, k));
  }
  return h;
}

EnvelopeSpectrum envelope_spectrum(const Envelope& env, double eta_q,
                                   double sample_rate, double f_span,
                                   int n_freq) {
  if (sample_rate <= 0.0)
    throw std::invalid_argument("envelope_spectrum: sample_rate must be positive");
  if (n_freq < 2) throw std::invalid_argument("envelope_spectrum: n_freq too small");
  const double dt = 1.0 / sample_rate;
  const int n_t = std::max(2, static_cast<int>(std::lround(env.t_g / dt)) + 1);
  std::vector<std::complex<double>> samples(n_t);
  for (int j = 0; j < n_t; ++j)
    samples[j] = env.complex_value_at(j * dt, eta_q);
  EnvelopeSpectrum out;
  out.freq = linspace(-f_span, f_span, n_freq);
  out.magnitude.resize(n_freq);
  double peak = 0.0;
  for (int i = 0; i < n_freq; ++i) {
    std::complex<double> acc = 0.0;
    for (int j = 0; j < n_t; ++j) {
      const double ph = -two_pi * out.freq[i] * (j * dt);
      acc += samples[j] * std::exp(std::complex<double>(0.0, ph));
    }
    out.magnitude[i] = std::abs(acc) * dt;
    peak = std::max(peak, out.magnitude[i]);
  }
  if (peak > 0.0)
    for (double& m : out.magnitude) m /= peak;
  return out;
}

Eigen::MatrixXcd simulate_pulse(const TransmonSpectrum& sp, const Envelope& env,
                                double dt) {
  if (dt <= 0.0 || dt > 0.1)
    throw std::invalid_argument("simulate_pulse: dt must be in (0, 0.1] ns");
  const int n = sp.spec.n_levels;
  const int steps = std::max(1, static_cast<int>(std::lround(env.t_g / dt)));
  const double h_step = env.t_g / steps;
  Eigen::MatrixXcd u = Eigen::MatrixXcd::Identity(n, n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es;
  for (int s = 0; s < steps; ++s) {
    const double t_mid = (s + 0.5) * h_step;
    es.compute(drive_hamiltonian_at(t_mid, sp, env));
    Eigen::VectorXcd phases(n);
    for (int k = 0; k < n; ++k)
      phases[k] = std::exp(
          std::complex<double>(0.0, -two_pi * es.eigenvalues()[k] * h_step));
    u = es.eigenvectors() * phases.asDiagonal() *
        es.eigenvectors().adjoint() * u;
  }
  return u;
}

Eigen::MatrixXcd frame_phase_op(double phi, int n_levels) {
  Eigen::MatrixXcd p = Eigen::MatrixXcd::Zero(n_levels, n_levels);
  for (int k = 0; k < n_levels; ++k)
    p(k, k) = std::exp(std::complex<double>(0.0, -phi * k));
  return p;
}

Eigen::MatrixXcd simulate_gate(const GateSpec& gate, const TransmonSpectrum& sp,
                               const Envelope& half_or_full, double dt) {
  const int n = sp.spec.n_levels;
  Envelope env = half_or_full;
  switch (gate.axis) {
    case GateAxis::x: env.phase = 0.0; break;
    case GateAxis::y: env.phase = 0.5 * pi; break;
    case GateAxis::idle: env.amplitude = 0.0; break;
  }
  const int n_segments =
      (gate.composition == GateComposition::two_halves && gate.axis != GateAxis::idle)
          ? 2
          : 1;
  Eigen::MatrixXcd u = Eigen::MatrixXcd::Identity(n, n);
  for (int seg = 0; seg < n_segments; ++seg) {
    u = simulate_pulse(sp, env, dt) * u;
    if (seg < static_cast<int>(gate.frame_phases.size()))
      u = frame_phase_op(gate.frame_phases[seg], n) * u;
  }
  return u;
}

Eigen::MatrixXcd standard_gate(GateAxis axis, double angle,
                               const TransmonSpectrum& sp, double t_g_total,
                               double drag_alpha, double dt,
                               GateComposition comp) {
  GateSpec gate;
  gate.axis = axis;
  gate.angle = angle;
  gate.composition = comp;
  const bool halves = (comp == GateComposition::two_halves && axis != GateAxis::idle);
  const double seg = halves ? 0.5 * t_g_total : t_g_total;
  const double seg_angle = halves ? 0.5 * angle : angle;
  Envelope env;
  if (axis == GateAxis::idle) {
    env.t_g = t_g_total;
    env.sigma = t_g_total / 6.0;
    env.amplitude = 0.0;
  } else {
    env = make_envelope(seg_angle, seg, seg / 6.0, sp.couplings[0]);
  }
  env.drag_alpha = drag_alpha;
  return simulate_gate(gate, sp, env, dt);
}

Eigen::Matrix2cd ideal_rotation(GateAxis axis, double angle) {
  const double c = std::cos(0.5 * angle);
  const double s = std::sin(0.5 * angle);
  Eigen::Matrix2cd u;
  switch (axis) {
    case GateAxis::x:
      u << std::complex<double>(c, 0.0), std::complex<double>(0.0, -s),
          std::complex<double>(0.0, -s), std::complex<double>(c, 0.0);
      break;
    case GateAxis::y:
      u << std::complex<double>(c, 0.0), std::complex<double>(-s, 0.0),
          std::complex<double>(s, 0.0), std::complex<double>(c, 0.0);
      break;
    case GateAxis::idle:
      u = Eigen::Matrix2cd::Identity();
      break;
  }
  return u;
}

namespace {

Eigen::Matrix2cd unitarize_qubit_block(const Eigen::MatrixXcd& propagator) {
  const Eigen::Matrix2cd block = propagator.block(0, 0, 2, 2);
  Eigen::JacobiSVD<Eigen::Matrix2cd> svd(
      block, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().adjoint();
}

std::vector<Eigen::Vector2cd> six_polar_states() {
  using C = std::complex<double>;
  const double r = 1.0 / std::sqrt(2.0);
  std::vector<Eigen::Vector2cd> states(6);
  states[0] << C(1, 0), C(0, 0);
  states[1] << C(0, 0), C(1, 0);
  states[2] << C(r, 0), C(r, 0);
  states[3] << C(r, 0), C(-r, 0);
  states[4] << C(r, 0), C(0, r);
  states[5] << C(r, 0), C(0, -r);
  return states;
}

}  // namespace

double qubit_phase_of(const Eigen::MatrixXcd& u, const Eigen::Matrix2cd& ideal) {
  const Eigen::Matrix2cd c = unitarize_qubit_block(u) * ideal.adjoint();
  return std::arg(c(1, 1) / c(0, 0));
}

GateMetrics gate_metrics(const Eigen::MatrixXcd& propagator,
                         const Eigen::Matrix2cd& ideal) {
  const int n = static_cast<int>(propagator.rows());
  const Eigen::Matrix2cd unitary_block = unitarize_qubit_block(propagator);
  GateMetrics m;
  const auto states = six_polar_states();
  for (const auto& psi : states) {
    Eigen::VectorXcd emb = Eigen::VectorXcd::Zero(n);
    emb[0] = psi[0];
    emb[1] = psi[1];
    const Eigen::VectorXcd out = propagator * emb;
    const Eigen::Vector2cd sub = out.head(2);
    const Eigen::Vector2cd ideal_out = ideal * psi;
    m.fidelity += std::norm(ideal_out.dot(sub));
    m.leakage += 1.0 - sub.squaredNorm();
    const Eigen::Vector2cd unit_out = unitary_block * psi;
    m.phase_error += 1.0 - std::norm(ideal_out.dot(unit_out));
  }
  m.fidelity /= 6.0;
  m.leakage /= 6.0;
  m.phase_error /= 6.0;
  return m;
}

}  // namespace transim
