#pragma once

#include "ionsim/ramsey.hpp"
#include "ionsim/spin_system.hpp"

#include <Eigen/Dense>

#include <array>
#include <functional>

// Spectral-moment sum rules for the retarded Green's function, evaluated two
// ways that are compared structurally:
//
//   analytic: closed-form operator expectations in the initial state
//             (transverse field and couplings entering explicitly),
//   numeric:  derivative moments -Im[i^n d^n g / dt^n] at t = 0+ from
//             Richardson-extrapolated central differences of the ungated
//             commutator expectation.
//
// The two conventions differ by a fixed prefactor per order (the analytic
// forms carry 1/pi factors); reports therefore include the ratios, and tests
// assert the ratio is pair-independent rather than pinning either prefactor.
//
// A windowed sine-transform spectral function is provided as a slow reference
// for the compressive-sensing module.

namespace ionsim::moments {

using spin::StateVector;

struct MomentReport {
  int i = 0;
  int j = 0;
  std::array<double, 4> analytic{};  // closed-form sum rules, orders 0..3
  std::array<double, 4> numeric{};   // derivative moments, orders 0..3
  std::array<double, 4> ratio{};     // analytic / numeric; NaN when numeric ~ 0
  // Orders 0 and 2 of the derivative moments vanish identically for a real
  // signal; the meaningful flatness diagnostics are the raw magnitudes.
  double g0_residual = 0.0;  // |g(0)|
  double g2_residual = 0.0;  // |g''(0)|
};

// Closed-form moments (orders 0..3). Couplings in kHz, field angular.
std::array<double, 4> analytic_moments(const StateVector& psi0, const Eigen::MatrixXd& j_khz,
                                       double field_angular, int i, int j);

struct DerivativeMoments {
  std::array<double, 4> mu{};
  double g0_abs = 0.0;
  double g2_abs = 0.0;
};

// Derivative moments of a smooth real signal g(t) valid on both sides of 0.
// base_step is the largest central-difference step; three Richardson levels
// (h, h/2, h/4) refine it.
DerivativeMoments numeric_moments(const std::function<double(double)>& g, double base_step);

// Step that balances truncation against double-precision cancellation for
// third derivatives of signals oscillating at frequencies ~ scale (rad/ms).
double suggested_step(double frequency_scale);

// Full report for one pair: analytic + numeric + ratios.
// base_step <= 0 selects 1e-4 / (mean nearest-neighbor coupling, angular).
MomentReport moment_report(const spin::EigenDecomposition& dec, const StateVector& psi0,
                           const Eigen::MatrixXd& j_khz, double field_angular, int i, int j,
                           double base_step = 0.0);

struct SpectralFunction {
  Eigen::VectorXd omega;   // rad/ms, symmetric grid
  Eigen::VectorXd values;  // A(omega)
  double window_time = 0.0;
};

// A(w) = -(1/pi) Im int_0^T G(t) e^{iwt} dt = -(1/pi) int_0^T G(t) sin(wt) dt
// by trapezoidal quadrature over the trace window (reference quality only).
SpectralFunction spectral_function(const ramsey::RamseyTrace& trace, double omega_max,
                                   int n_omega);

}  // namespace ionsim::moments
