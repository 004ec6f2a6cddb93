#pragma once

#include <Eigen/Dense>

// Linear ion chain in a Paul trap: equilibrium geometry, transverse phonon
// modes, and the effective spin-spin couplings generated by an off-resonant
// spin-dependent force.
//
// Lengths are dimensionless (Coulomb length ell, ell^3 = e^2/(M w_ax^2));
// all frequencies here are conventional kHz.

namespace ionsim::trap {

struct TrapParams {
  int n_ions = 10;
  double rabi_khz = 600.0;             // carrier Rabi frequency of the drive
  double recoil_khz = 18.5;            // two-photon recoil frequency
  double axial_khz = 620.0;            // axial center-of-mass frequency
  double transverse_com_khz = 4797.2;  // transverse center-of-mass frequency
  double detuning_eta_factor = 3.0;    // beatnote mu = w_com + factor*eta*rabi

  // Lamb-Dicke factor eta = sqrt(recoil / transverse_com).
  double eta() const;
  // Beatnote detuning mu in kHz.
  double beatnote_khz() const;
};

// Equilibrium positions along the trap axis, ascending and centered on 0.
struct ChainGeometry {
  Eigen::VectorXd positions;
  int n() const { return static_cast<int>(positions.size()); }
};

// Transverse normal modes: freq_khz sorted descending, vectors(:,m) the
// orthonormal mode vector of mode m. Mode 0 is the center-of-mass mode.
struct TransverseModes {
  Eigen::VectorXd freq_khz;
  Eigen::MatrixXd vectors;
};

// Spin-spin couplings J_ij (kHz), symmetric with zero diagonal.
struct CouplingMatrix {
  Eigen::MatrixXd j_khz;
  double j0_khz = 0.0;  // mean nearest-neighbour |J_{i,i+1}|
  double mu_khz = 0.0;  // beatnote used to generate the couplings
};

// Least-squares power-law summary |J_ij| ~ prefactor / r^alpha.
struct PowerLawFit {
  double alpha = 0.0;
  double prefactor_khz = 0.0;
  double max_log_residual = 0.0;
};

// Solves the axial force-balance equations by damped Newton iteration
// (damping 0.5, at most 500 steps) from a uniformly spaced guess.
// Throws std::runtime_error if the residual does not reach 1e-12.
ChainGeometry solve_equilibrium(int n_ions);

// Transverse Hessian eigenmodes. Throws std::runtime_error if the chain is
// outside the linear regime (zigzag instability, non-positive eigenvalue).
TransverseModes transverse_modes(const ChainGeometry& chain, const TrapParams& params);

// J_ij = rabi^2 * recoil * sum_m b_im b_jm / (mu^2 - w_m^2).
// Throws if the beatnote collides with a mode frequency.
CouplingMatrix coupling_matrix(const ChainGeometry& chain, const TransverseModes& modes,
                               const TrapParams& params);

// Fit log|J_ij| against log r_ij over all pairs; needs n >= 3.
PowerLawFit fit_alpha(const CouplingMatrix& couplings, const ChainGeometry& chain);

// Bisect the axial frequency inside [620, 950] kHz until the fitted decay
// exponent matches target_alpha within tol. Returns the adjusted parameters.
// Throws if the target is not reachable inside the bracket.
TrapParams tune_axial(const TrapParams& params, double target_alpha, double tol = 0.005);

}  // namespace ionsim::trap
