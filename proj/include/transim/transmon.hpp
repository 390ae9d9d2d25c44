#pragma once
// Transmon circuit model: charge-basis Hamiltonian, eigenbasis truncation,
// coupling operators, and the inverse fit from measured frequencies to
// circuit energies.

#include <Eigen/Dense>
#include <vector>

namespace transim {

struct TransmonSpec {
  double e_c = 0.0;    // charging energy, GHz
  double e_j = 0.0;    // Josephson energy, GHz
  double n_g = 0.0;    // offset charge (kept at 0 in the transmon regime)
  int n_max = 50;      // charge-basis cutoff: basis spans n in [-n_max, n_max]
  int n_levels = 4;    // eigenlevels retained after truncation

  void validate() const;  // throws std::invalid_argument with a reason
};

struct TransmonSpectrum {
  TransmonSpec spec;
  std::vector<double> omega;     // eigenfrequencies, GHz, ascending, omega[0] == 0
  double qubit_freq = 0.0;       // omega[1] - omega[0], GHz
  double anharmonicity = 0.0;    // (omega1 - omega0) - (omega2 - omega1), GHz
  Eigen::MatrixXcd charge_op;    // n-hat in the eigenbasis, n_levels x n_levels
  Eigen::MatrixXcd cosphi_op;    // cos(phi-hat) in the eigenbasis
  std::vector<double> couplings; // g_{k,k+1} = charge_op(k, k+1), real positive
  Eigen::MatrixXcd coupling_x;   // zero-point-normalized charge operator, (32 E_C/E_J)^{1/4} n-hat
  Eigen::MatrixXcd coupling_z;   // Josephson-normalized cos(phi-hat), sqrt(2 E_J/E_C) cos(phi-hat)
};

// Charge-basis Hamiltonian: diagonal 4 E_C (n - n_g)^2, off-diagonal -E_J/2.
// Dimension 2 n_max + 1.
Eigen::MatrixXd build_charge_hamiltonian(const TransmonSpec& spec);

// Diagonalizes the charge-basis Hamiltonian, shifts the ground energy to zero,
// rotates n-hat and cos(phi-hat) into the eigenbasis, fixes eigenvector signs
// so every g_{k,k+1} is real positive, and truncates to n_levels.
TransmonSpectrum solve_spectrum(const TransmonSpec& spec);

// Finds (E_C, E_J) whose spectrum reproduces the measured qubit frequency and
// anharmonicity, each to 1e-4 relative. Damped Newton iteration on the
// two-dimensional residual with a finite-difference Jacobian.
std::pair<double, double> fit_circuit_params(double omega_q, double eta_q);

// Convenience: fit (E_C, E_J) and solve in one call.
TransmonSpectrum spectrum_from_device(double omega_q, double eta_q, int n_levels = 4);

}  // namespace transim
