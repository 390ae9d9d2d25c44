#include "transim/transmon.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace transim {

void TransmonSpec::validate() const {
  if (e_c <= 0 || e_j <= 0)
    throw std::invalid_argument("TransmonSpec: E_C and E_J must be positive");
  if (e_j / e_c <= 20)
    throw std::invalid_argument("TransmonSpec: E_J/E_C = " + std::to_string(e_j / e_c) +
                                " is outside the transmon regime (need > 20)");
  if (n_max < 20) throw std::invalid_argument("TransmonSpec: n_max must be >= 20");
  if (n_levels < 2 || n_levels > 2 * n_max + 1)
    throw std::invalid_argument("TransmonSpec: n_levels out of range");
}

Eigen::MatrixXd build_charge_hamiltonian(const TransmonSpec& spec) {
  // Structural checks only: tiny bases and E_J = 0 are useful in tests even
  // though they fall outside the physical regime enforced by validate().
  if (spec.e_c <= 0 || spec.e_j < 0)
    throw std::invalid_argument("build_charge_hamiltonian: need E_C > 0 and E_J >= 0");
  if (spec.n_max < 1)
    throw std::invalid_argument("build_charge_hamiltonian: need n_max >= 1");
  const int dim = 2 * spec.n_max + 1;
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
  for (int i = 0; i < dim; ++i) {
    const double n = i - spec.n_max;
    h(i, i) = 4.0 * spec.e_c * (n - spec.n_g) * (n - spec.n_g);
    if (i + 1 < dim) {
      h(i, i + 1) = -spec.e_j / 2.0;
      h(i + 1, i) = -spec.e_j / 2.0;
    }
  }
  return h;
}

TransmonSpectrum solve_spectrum(const TransmonSpec& spec) {
  spec.validate();
  const Eigen::MatrixXd h = build_charge_hamiltonian(spec);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(h);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("solve_spectrum: eigensolver failed to converge");

  const int dim = 2 * spec.n_max + 1;
  const int nl = spec.n_levels;
  Eigen::MatrixXd vecs = solver.eigenvectors().leftCols(nl);
  const Eigen::VectorXd vals = solver.eigenvalues();

  // Charge operator in the charge basis is diag(n).
  Eigen::VectorXd nvals(dim);
  for (int i = 0; i < dim; ++i) nvals(i) = i - spec.n_max;

  // Fix eigenvector signs sequentially so each nearest-level charge matrix
  // element comes out positive.
  for (int k = 0; k + 1 < nl; ++k) {
    const double elem = vecs.col(k).cwiseProduct(nvals).dot(vecs.col(k + 1));
    if (elem < 0) vecs.col(k + 1) *= -1.0;
  }

  Eigen::MatrixXd n_eig(nl, nl);
  for (int a = 0; a < nl; ++a)
    for (int b = 0; b < nl; ++b)
      n_eig(a, b) = vecs.col(a).cwiseProduct(nvals).dot(vecs.col(b));

  // cos(phi-hat) couples neighbouring charge states with weight 1/2.
  Eigen::MatrixXd cos_eig(nl, nl);
  for (int a = 0; a < nl; ++a)
    for (int b = 0; b < nl; ++b) {
      double s = 0.0;
      for (int i = 0; i + 1 < dim; ++i)
        s += 0.5 * (vecs(i, a) * vecs(i + 1, b) + vecs(i + 1, a) * vecs(i, b));
      cos_eig(a, b) = s;
    }

  TransmonSpectrum out;
  out.spec = spec;
  out.omega.resize(nl);
  for (int k = 0; k < nl; ++k) out.omega[k] = vals(k) - vals(0);
  out.qubit_freq = out.omega[1];
  out.anharmonicity = (out.omega[1] - out.omega[0]) - (out.omega[2] - out.omega[1]);
  out.charge_op = n_eig.cast<std::complex<double>>();
  out.cosphi_op = cos_eig.cast<std::complex<double>>();
  out.couplings.resize(nl - 1);
  for (int k = 0; k + 1 < nl; ++k) out.couplings[k] = n_eig(k, k + 1);

  const double cx = std::pow(32.0 * spec.e_c / spec.e_j, 0.25);
  const double cz = std::sqrt(2.0 * spec.e_j / spec.e_c);
  out.coupling_x = cx * out.charge_op;
  out.coupling_z = cz * out.cosphi_op;
  return out;
}

namespace {

// Residual of the forward model against the measured targets.
std::pair<double, double> spectrum_residual(double e_c, double e_j, double omega_q,
                                            double eta_q) {
  TransmonSpec spec;
  spec.e_c = e_c;
  spec.e_j = e_j;
  spec.n_levels = 3;
  const TransmonSpectrum sp = solve_spectrum(spec);
  return {sp.qubit_freq - omega_q, sp.anharmonicity - eta_q};
}

}  // namespace

std::pair<double, double> fit_circuit_params(double omega_q, double eta_q) {
  if (omega_q <= 0 || eta_q <= 0)
    throw std::invalid_argument("fit_circuit_params: frequencies must be positive");
  if (omega_q / eta_q <= 5)
    throw std::invalid_argument("fit_circuit_params: omega_q/eta_q too small for a transmon");

  // Asymptotic seed: E_C ~ eta_q, E_J from omega_q ~ sqrt(8 E_C E_J) - E_C.
  double e_c = eta_q;
  double e_j = (omega_q + eta_q) * (omega_q + eta_q) / (8.0 * eta_q);

  const double tol = 1e-10;
  for (int iter = 0; iter < 60; ++iter) {
    const auto [r1, r2] = spectrum_residual(e_c, e_j, omega_q, eta_q);
    const double rnorm = std::hypot(r1 / omega_q, r2 / eta_q);
    if (rnorm < tol) break;

    const double hc = e_c * 1e-6, hj = e_j * 1e-6;
    const auto [r1c, r2c] = spectrum_residual(e_c + hc, e_j, omega_q, eta_q);
    const auto [r1j, r2j] = spectrum_residual(e_c, e_j + hj, omega_q, eta_q);
    const double j11 = (r1c - r1) / hc, j12 = (r1j - r1) / hj;
    const double j21 = (r2c - r2) / hc, j22 = (r2j - r2) / hj;
    const double det = j11 * j22 - j12 * j21;
    if (std::abs(det) < 1e-30)
      throw std::runtime_error("fit_circuit_params: singular Jacobian");
    double dc = -(j22 * r1 - j12 * r2) / det;
    double dj = -(-j21 * r1 + j11 * r2) / det;

    // Damped update: halve the step until the residual shrinks and the
    // parameters stay in the transmon regime.
    double scale = 1.0;
    for (int back = 0; back < 30; ++back) {
      const double nc = e_c + scale * dc, nj = e_j + scale * dj;
      if (nc > 0 && nj > 0 && nj / nc > 20) {
        const auto [t1, t2] = spectrum_residual(nc, nj, omega_q, eta_q);
        if (std::hypot(t1 / omega_q, t2 / eta_q) < rnorm) {
          e_c = nc;
          e_j = nj;
          break;
        }
      }
      scale *= 0.5;
      if (back == 29)
        throw std::runtime_error("fit_circuit_params: line search failed");
    }
  }

  const auto [f1, f2] = spectrum_residual(e_c, e_j, omega_q, eta_q);
  if (std::abs(f1 / omega_q) > 1e-6 || std::abs(f2 / eta_q) > 1e-6)
    throw std::runtime_error("fit_circuit_params: did not converge to targets");
  return {e_c, e_j};
}

TransmonSpectrum spectrum_from_device(double omega_q, double eta_q, int n_levels) {
  const auto [e_c, e_j] = fit_circuit_params(omega_q, eta_q);
  TransmonSpec spec;
  spec.e_c = e_c;
  spec.e_j = e_j;
  spec.n_levels = n_levels;
  return solve_spectrum(spec);
}

}  // namespace transim
