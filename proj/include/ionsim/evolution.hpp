#pragma once

#include "ionsim/spin_system.hpp"

#include <Eigen/Dense>

// Time evolution for the spin chain.
//
// Constant Hamiltonians are propagated either exactly through an
// eigendecomposition or matrix-free with a Lanczos (Krylov) approximation of
// exp(-i t H). Time-dependent ramps B(t) = B0 exp(-t/tau) use a fourth-order
// commutator-free scheme: each step is two exponentials of weighted averages
// of the Hamiltonian at the two Gauss-Legendre nodes, which for this model is
// again an Ising Hamiltonian with rescaled couplings and field. Step size is
// controlled by comparing a full step against two half steps.

namespace ionsim::evolution {

using spin::HamiltonianSpec;
using spin::StateVector;

struct KrylovOptions {
  double tol = 1e-12;  // per-call error target on a unit vector
  int max_dim = 80;    // Krylov dimension before the interval is split
};

// exp(-i t H) |psi> without forming H.
StateVector expm_apply(const HamiltonianSpec& h, const StateVector& psi, double t,
                       const KrylovOptions& opts = {});

// Exact propagation with precomputed modes.
StateVector evolve_eigen(const spin::EigenDecomposition& dec, const StateVector& psi, double t);

// Exponentially decaying transverse field over fixed couplings.
struct RampSpec {
  Eigen::MatrixXd j_khz;
  double b0_angular = 0.0;  // field at t = 0, rad/ms
  double tau_ms = 1.0;      // decay time

  double field_at(double t) const;
};

// Time at which the field has decayed from b0 to b_target.
double ramp_duration(double b0_angular, double b_target_angular, double tau_ms);

// One fourth-order commutator-free step from t to t + dt.
StateVector cfet_step(const RampSpec& ramp, double t, double dt, const StateVector& psi,
                      const KrylovOptions& opts = {});

struct RampOptions {
  double dt_ms = 0.0;      // initial/maximum step; 0 derives 1e-3 / J0 from the couplings
  double step_tol = 1e-9;  // accepted difference between one step and two half steps
  KrylovOptions krylov{};
};

StateVector evolve_ramp(const RampSpec& ramp, double t0, double t1, const StateVector& psi,
                        const RampOptions& opts = {});

// Uniform-step variant, used for convergence-order measurements.
StateVector evolve_ramp_fixed(const RampSpec& ramp, double t0, double t1, int n_steps,
                              const StateVector& psi, const KrylovOptions& opts = {});

}  // namespace ionsim::evolution
