#include "ionsim/evolution.hpp"

#include "ionsim/kernels/kernels.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

namespace ionsim::evolution {

namespace {

using spin::cplx;

// Propagator y(t) = exp(-i t T) e1 for the real symmetric tridiagonal Lanczos
// matrix, plus a bound on the residual integral beta * int_0^t |y_m(s)| ds
// (sampled at interior times, so oscillating last components are not missed).
struct TridiagExp {
  Eigen::VectorXcd y;
  double residual_integral;  // per unit off-diagonal beta
};

TridiagExp tridiag_expm_e1(const std::vector<double>& diag,
                           const std::vector<double>& offdiag, double t) {
  const int m = static_cast<int>(diag.size());
  Eigen::MatrixXd tmat = Eigen::MatrixXd::Zero(m, m);
  for (int i = 0; i < m; ++i) {
    tmat(i, i) = diag[i];
    if (i + 1 < m) tmat(i, i + 1) = tmat(i + 1, i) = offdiag[i];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(tmat);
  const Eigen::VectorXd w = es.eigenvectors().row(0);
  auto propagate = [&](double s) {
    Eigen::VectorXcd phased(m);
    for (int i = 0; i < m; ++i) phased[i] = std::polar(w[i], -s * es.eigenvalues()[i]);
    return Eigen::VectorXcd(es.eigenvectors() * phased);
  };
  TridiagExp out{propagate(t), 0.0};
  double peak = std::abs(out.y[m - 1]);
  for (double frac : {0.25, 0.5, 0.75}) {
    peak = std::max(peak, std::abs(propagate(frac * t)[m - 1]));
  }
  out.residual_integral = peak * std::abs(t);
  return out;
}

StateVector expm_apply_impl(const HamiltonianSpec& h, const StateVector& psi, double t,
                            const KrylovOptions& opts, double tol, int depth) {
  const double norm = psi.norm();
  if (t == 0.0 || norm == 0.0) return psi;
  if (depth > 40) throw std::runtime_error("expm_apply: interval splitting failed to converge");

  const auto dim = static_cast<std::size_t>(psi.size());
  std::vector<StateVector> basis;
  basis.push_back(psi / norm);
  std::vector<double> alpha, beta;
  StateVector w(psi.size());

  double hscale = 0.0;
  for (int k = 0; k < opts.max_dim; ++k) {
    spin::apply_hamiltonian(h, basis[k].data(), w.data());
    const double a = kernels::dotc(basis[k].data(), w.data(), dim).real();
    alpha.push_back(a);
    w -= a * basis[k];
    if (k > 0) w -= beta[k - 1] * basis[k - 1];
    for (const auto& v : basis) {  // full reorthogonalization
      w -= kernels::dotc(v.data(), w.data(), dim) * v;
    }
    const double b = w.norm();
    hscale = std::max({hscale, std::abs(a), b});

    const TridiagExp small = tridiag_expm_e1(alpha, beta, t);
    const double err = b * small.residual_integral;
    if (err <= tol || b <= 1e-14 * std::max(hscale, 1.0)) {
      StateVector out = StateVector::Zero(psi.size());
      for (int i = 0; i <= k; ++i) out += (norm * small.y[i]) * basis[i];
      return out;
    }
    beta.push_back(b);
    basis.push_back(w / b);
  }

  // Not converged within the allowed Krylov dimension: split the interval,
  // giving each half its share of the error budget (floored near machine eps).
  const double half_tol = std::max(tol / 2, 1e-15);
  const StateVector half = expm_apply_impl(h, psi, t / 2, opts, half_tol, depth + 1);
  return expm_apply_impl(h, half, t / 2, opts, half_tol, depth + 1);
}

}  // namespace

StateVector expm_apply(const HamiltonianSpec& h, const StateVector& psi, double t,
                       const KrylovOptions& opts) {
  if (psi.size() != h.dim()) throw std::invalid_argument("expm_apply: dimension mismatch");
  return expm_apply_impl(h, psi, t, opts, opts.tol, 0);
}

StateVector evolve_eigen(const spin::EigenDecomposition& dec, const StateVector& psi, double t) {
  Eigen::VectorXcd c = dec.to_eigenbasis(psi);
  for (Eigen::Index n = 0; n < c.size(); ++n) {
    c[n] *= std::polar(1.0, -dec.energy[n] * t);
  }
  return dec.from_eigenbasis(c);
}

double RampSpec::field_at(double t) const { return b0_angular * std::exp(-t / tau_ms); }

double ramp_duration(double b0_angular, double b_target_angular, double tau_ms) {
  if (b_target_angular <= 0.0 || b0_angular <= 0.0) {
    throw std::invalid_argument("ramp_duration: fields must be positive");
  }
  if (b_target_angular > b0_angular) {
    throw std::invalid_argument("ramp_duration: target field exceeds the initial field");
  }
  return tau_ms * std::log(b0_angular / b_target_angular);
}

StateVector cfet_step(const RampSpec& ramp, double t, double dt, const StateVector& psi,
                      const KrylovOptions& opts) {
  // Gauss-Legendre nodes and fourth-order averaging weights. The first
  // exponential weights the early node more strongly; the second swaps them.
  const double s3 = std::sqrt(3.0) / 6.0;
  const double a1 = 0.25 + s3;
  const double a2 = 0.25 - s3;
  const double ba = ramp.field_at(t + (0.5 - s3) * dt);
  const double bb = ramp.field_at(t + (0.5 + s3) * dt);
  const HamiltonianSpec first{0.5 * ramp.j_khz, a1 * ba + a2 * bb};
  const HamiltonianSpec second{0.5 * ramp.j_khz, a2 * ba + a1 * bb};
  return expm_apply(second, expm_apply(first, psi, dt, opts), dt, opts);
}

namespace {

double default_ramp_step(const Eigen::MatrixXd& j_khz) {
  const int n = static_cast<int>(j_khz.rows());
  double j0 = 0.0;
  for (int i = 0; i + 1 < n; ++i) j0 += std::abs(j_khz(i, i + 1));
  j0 = n > 1 ? j0 / (n - 1) : 1.0;  // single site: 1 kHz reference scale
  if (j0 <= 0.0) j0 = 1.0;
  return 1e-3 / j0;
}

}  // namespace

StateVector evolve_ramp(const RampSpec& ramp, double t0, double t1, const StateVector& psi,
                        const RampOptions& opts) {
  if (t1 < t0) throw std::invalid_argument("evolve_ramp: reversed interval");
  const double dt_max = opts.dt_ms > 0.0 ? opts.dt_ms : default_ramp_step(ramp.j_khz);
  const double dt_min = dt_max * std::pow(2.0, -20);
  const double t_eps = 1e-12 * std::max(1.0, std::abs(t1));

  StateVector state = psi;
  double t = t0;
  double dt = dt_max;
  while (t < t1 - t_eps) {
    dt = std::min(dt, t1 - t);
    const StateVector full = cfet_step(ramp, t, dt, state, opts.krylov);
    const StateVector mid = cfet_step(ramp, t, dt / 2, state, opts.krylov);
    const StateVector half = cfet_step(ramp, t + dt / 2, dt / 2, mid, opts.krylov);
    const double diff = (full - half).norm();
    if (diff > opts.step_tol) {
      if (dt / 2 < dt_min) throw std::runtime_error("evolve_ramp: step size underflow");
      dt /= 2;
      continue;
    }
    state = half;
    t += dt;
    if (diff < 0.01 * opts.step_tol) dt = std::min(2 * dt, dt_max);
  }
  return state;
}

StateVector evolve_ramp_fixed(const RampSpec& ramp, double t0, double t1, int n_steps,
                              const StateVector& psi, const KrylovOptions& opts) {
  if (n_steps < 1) throw std::invalid_argument("evolve_ramp_fixed: need at least one step");
  const double dt = (t1 - t0) / n_steps;
  StateVector state = psi;
  for (int k = 0; k < n_steps; ++k) {
    state = cfet_step(ramp, t0 + k * dt, dt, state, opts);
  }
  return state;
}

}  // namespace ionsim::evolution
