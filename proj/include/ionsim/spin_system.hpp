#pragma once

#include <Eigen/Dense>

#include <complex>
#include <utility>
#include <vector>

// Spin-1/2 chain with Ising couplings along x and a transverse field along y:
//
//   H = - sum_{i<j} J_ij sigma^x_i sigma^x_j - B^(y) sum_i sigma^y_i
//
// Couplings enter in conventional kHz and are converted once; H and all
// eigenvalues are angular (rad/ms).
//
// Basis convention: computational sigma-z product basis. Bit j of a basis
// index holds site j's sigma-z eigenvalue, bit value 0 meaning +1 (up).
//
// Internally the Hamiltonian is conjugated by the diagonal gauge
// D = diag(i^popcount(s)), which maps sigma^y_j to a real matrix (-1 on bit-j
// flips) and sigma^x_i sigma^x_j to signed bit-pair flips, so H becomes real
// symmetric and can be diagonalized in real arithmetic. States stay in the
// plain basis; the gauge is applied on the fly by the basis-change helpers.

namespace ionsim::spin {

using cplx = std::complex<double>;
using StateVector = Eigen::VectorXcd;

inline constexpr int kMaxSites = 14;        // state vectors up to 2^14
inline constexpr int kMaxDenseSites = 12;   // dense eigensolves up to 2^12

enum class Axis { x, y, z };

struct HamiltonianSpec {
  Eigen::MatrixXd j_khz;       // symmetric, zero diagonal
  double field_angular = 0.0;  // B^(y), rad/ms

  int n_sites() const { return static_cast<int>(j_khz.rows()); }
  int dim() const { return 1 << n_sites(); }
};

// Validates shape/symmetry and builds the spec. Throws on a non-symmetric or
// non-hollow coupling matrix or when the site count is out of range.
HamiltonianSpec build_hamiltonian(const Eigen::MatrixXd& j_khz, double field_angular);

struct EigenDecomposition {
  Eigen::VectorXd energy;         // ascending, rad/ms
  Eigen::MatrixXd gauge_vectors;  // real eigenvector columns in the gauge
  Eigen::VectorXi parity;         // spin-reflection parity of each eigenstate
  int n_sites = 0;

  int dim() const { return 1 << n_sites; }
  Eigen::VectorXcd to_eigenbasis(const StateVector& psi) const;
  StateVector from_eigenbasis(const Eigen::VectorXcd& coeff) const;
  Eigen::VectorXcd eigenvector(int n) const;  // plain-basis column n
};

// Dense diagonalization through the real gauge, with degenerate subspaces
// rotated into parity eigenstates.
EigenDecomposition diagonalize(const HamiltonianSpec& h);

// |y+>^N, the fully polarized state along +y (even parity).
StateVector initial_state(int n_sites);

// sigma^(axis)_site |psi>
StateVector apply_site(const StateVector& psi, Axis axis, int site);

// Product of single-site operators, applied right to left.
StateVector apply_string(const StateVector& psi,
                         const std::vector<std::pair<int, Axis>>& ops);

// <psi| op |psi> for a Hermitian string of distinct-site Paulis.
double expectation(const StateVector& psi, const std::vector<std::pair<int, Axis>>& ops);

// Spin-reflection parity P = prod_j sigma^y_j (x -> -x, y -> y, z -> -z).
StateVector apply_parity(const StateVector& psi);

// y = H x on raw storage (used by the Krylov propagator). x and y must not
// alias; y is overwritten.
void apply_hamiltonian(const HamiltonianSpec& h, const cplx* x, cplx* y);

// Dense builders, intended for tests and small systems.
Eigen::MatrixXcd dense_hamiltonian(const HamiltonianSpec& h);
Eigen::MatrixXcd dense_site(Axis axis, int site, int n_sites);
Eigen::MatrixXcd dense_parity(int n_sites);

}  // namespace ionsim::spin
