#pragma once

#include "ionsim/spin_system.hpp"

#include <utility>
#include <vector>

// Ramsey interferometry on the spin chain, and the retarded spin-spin Green's
// function it measures:
//
//   G_{xx,ij}(t) = -i theta(t) <psi0| [sigma^x_i(t), sigma^x_j] |psi0>
//
// computed four independent ways: the explicit rotate-evolve-rotate-measure
// protocol, direct state-vector evolution of the commutator, a double-sum
// spectral (Lehmann-type) series with cross terms, and for i = j a Loschmidt
// echo (forward evolution under H0 and under sigma^x_i H0 sigma^x_i).
//
// The echo identity -i[L(t) - L(-t)] equals the Green's function only for
// initial states that are real in the i^popcount gauge (e.g. the polarized
// |y+>^N state or any eigenstate); see loschmidt_green.

namespace ionsim::ramsey {

using spin::StateVector;
using spin::cplx;

struct ProtocolParams {
  int measured_site = 0;  // i, where sigma^z is read out
  int rotated_site = 0;   // j, where the first pulse acts
  double phi1 = 0.0;
  double phi2 = 1.5707963267948966;  // pi/2
};

// R_j(phi) = [I + i(sigma^x_j cos(phi) - sigma^y_j sin(phi))] / sqrt(2).
StateVector rotate_single(const StateVector& psi, int site, double phi);

// Product of rotate_single over every site (all factors commute).
StateVector rotate_global(const StateVector& psi, double phi);

// M_{ij}(phi1, phi2, t) = <psi(t)|sigma^z_i|psi(t)> with
// |psi(t)> = R(phi2) U(t) R_j(phi1) |psi0>. For parity-even psi0 the default
// angles give M = G/2.
double ramsey_measure(const spin::EigenDecomposition& dec, const StateVector& psi0,
                      const ProtocolParams& p, double t);

// Retarded Green's function by evolving U(t)psi0 and U(t)sigma^x_j psi0; zero
// for t < 0.
double green_direct(const spin::EigenDecomposition& dec, const StateVector& psi0, int i, int j,
                    double t);

// Ungated commutator expectation -i<[sigma^x_i(t), sigma^x_j]>, smooth through
// t = 0 (used for derivative-based moment checks).
double commutator_expectation(const spin::EigenDecomposition& dec, const StateVector& psi0,
                              int i, int j, double t);

// Flattened double-sum spectral series: z(t) = sum_k weight_k e^{-i freq_k t},
// G(t) = 2 Im z(t). Cross terms between different overlap coefficients are
// kept; each term remembers its (bra, ket) eigenstate pair.
struct LehmannTerms {
  std::vector<double> freq;     // E_ket - E_bra, rad/ms
  std::vector<cplx> weight;
  std::vector<std::pair<int, int>> states;  // (bra m, ket n)
  std::size_t size() const { return freq.size(); }
};

// prune_rel drops terms with |weight| below prune_rel * max|weight|.
LehmannTerms lehmann_terms(const spin::EigenDecomposition& dec, const StateVector& psi0, int i,
                           int j, double prune_rel = 1e-14);

double green_lehmann(const LehmannTerms& terms, double t);

// Eigendecomposition of sigma^x_site H sigma^x_site from that of H (same
// spectrum, row-permuted vectors, flipped parities).
spin::EigenDecomposition conjugate_by_x(const spin::EigenDecomposition& dec, int site);

// L(t) = <psi| e^{i H0 t} e^{-i H t} |psi> for two precomputed decompositions.
cplx loschmidt_echo(const spin::EigenDecomposition& eig_h0, const spin::EigenDecomposition& eig_h,
                    const StateVector& psi0, double t);

// -i[L(t) - L(-t)], gated at t < 0; equals the local Green's function
// G_{xx,ii} when eig_h is the sigma^x_i conjugate of eig_h0 and psi0 is real
// in the i^popcount gauge. The imaginary residue of the formula is checked
// against tolerance im_tol (it vanishes in the identity's domain).
double loschmidt_green(const spin::EigenDecomposition& eig_h0,
                       const spin::EigenDecomposition& eig_h, const StateVector& psi0, int i,
                       double t, double im_tol = 1e-9);

enum class TraceMethod { direct, lehmann, protocol };

struct RamseyTrace {
  int i = 0;
  int j = 0;
  Eigen::VectorXd times;   // uniform grid over [0, T]
  Eigen::VectorXd values;  // G at each grid time
};

RamseyTrace scan_trace(const spin::EigenDecomposition& dec, const StateVector& psi0, int i,
                       int j, double t_max, int samples,
                       TraceMethod method = TraceMethod::direct);

}  // namespace ionsim::ramsey
