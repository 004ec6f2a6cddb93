#include "ionsim/trap_chain.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ionsim::trap {

double TrapParams::eta() const { return std::sqrt(recoil_khz / transverse_com_khz); }

double TrapParams::beatnote_khz() const {
  return transverse_com_khz + detuning_eta_factor * eta() * rabi_khz;
}

ChainGeometry solve_equilibrium(int n_ions) {
  if (n_ions < 1) throw std::runtime_error("solve_equilibrium: need at least one ion");
  ChainGeometry chain;
  if (n_ions == 1) {
    chain.positions = Eigen::VectorXd::Zero(1);
    return chain;
  }

  const int n = n_ions;
  // Uniform initial spacing; 2.018/N^0.559 approximates the true central gap.
  const double spacing = 2.018 / std::pow(double(n), 0.559);
  Eigen::VectorXd u(n);
  for (int i = 0; i < n; ++i) u(i) = (i - 0.5 * (n - 1)) * spacing;

  const double tol = 1e-12;
  const double damping = 0.5;
  bool converged = false;
  for (int iter = 0; iter < 500; ++iter) {
    Eigen::VectorXd f = u;
    Eigen::MatrixXd jac = Eigen::MatrixXd::Identity(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        const double d = u(i) - u(j);
        const double inv2 = 1.0 / (d * d);
        const double inv3 = inv2 / std::abs(d);
        f(i) += (j < i) ? -inv2 : inv2;
        jac(i, i) += 2.0 * inv3;
        jac(i, j) -= 2.0 * inv3;
      }
    }
    if (f.lpNorm<Eigen::Infinity>() < tol) {
      converged = true;
      break;
    }
    u -= damping * jac.ldlt().solve(f);
  }
  if (!converged) throw std::runtime_error("solve_equilibrium: Newton iteration did not converge");

  // Enforce the exact reflection symmetry of the solution.
  Eigen::VectorXd sym(n);
  for (int i = 0; i < n; ++i) sym(i) = 0.5 * (u(i) - u(n - 1 - i));
  chain.positions = sym;
  return chain;
}

TransverseModes transverse_modes(const ChainGeometry& chain, const TrapParams& params) {
  const int n = chain.n();
  const Eigen::VectorXd& u = chain.positions;
  const double ratio = params.transverse_com_khz / params.axial_khz;

  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    double diag = ratio * ratio;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double inv3 = 1.0 / std::pow(std::abs(u(i) - u(j)), 3);
      diag -= inv3;
      k(i, j) = inv3;
    }
    k(i, i) = diag;
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k);
  if (es.info() != Eigen::Success) throw std::runtime_error("transverse_modes: eigensolver failed");

  TransverseModes modes;
  modes.freq_khz.resize(n);
  modes.vectors.resize(n, n);
  // SelfAdjointEigenSolver sorts ascending; modes are reported stiffest first.
  for (int m = 0; m < n; ++m) {
    const double lambda = es.eigenvalues()(n - 1 - m);
    if (lambda <= 0.0)
      throw std::runtime_error(
          "transverse_modes: non-positive eigenvalue, chain is past the zigzag instability");
    modes.freq_khz(m) = params.axial_khz * std::sqrt(lambda);
    Eigen::VectorXd b = es.eigenvectors().col(n - 1 - m);
    // Deterministic sign: overall sum positive, falling back to the first
    // component of largest magnitude.
    double s = b.sum();
    if (std::abs(s) < 1e-9) {
      int imax = 0;
      b.cwiseAbs().maxCoeff(&imax);
      s = b(imax);
    }
    if (s < 0.0) b = -b;
    modes.vectors.col(m) = b;
  }
  return modes;
}

CouplingMatrix coupling_matrix(const ChainGeometry& chain, const TransverseModes& modes,
                               const TrapParams& params) {
  const int n = chain.n();
  const double mu = params.beatnote_khz();
  const double scale = params.rabi_khz * params.rabi_khz * params.recoil_khz;

  for (int m = 0; m < n; ++m) {
    const double d = mu * mu - modes.freq_khz(m) * modes.freq_khz(m);
    if (std::abs(d) < 1e-9 * mu * mu)
      throw std::runtime_error("coupling_matrix: beatnote collides with mode " + std::to_string(m));
  }

  CouplingMatrix c;
  c.mu_khz = mu;
  c.j_khz = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      double sum = 0.0;
      for (int m = 0; m < n; ++m) {
        sum += modes.vectors(i, m) * modes.vectors(j, m) /
               (mu * mu - modes.freq_khz(m) * modes.freq_khz(m));
      }
      c.j_khz(i, j) = scale * sum;
      c.j_khz(j, i) = c.j_khz(i, j);
    }
  }

  if (n >= 2) {
    double acc = 0.0;
    for (int i = 0; i + 1 < n; ++i) acc += std::abs(c.j_khz(i, i + 1));
    c.j0_khz = acc / (n - 1);
  }
  return c;
}

PowerLawFit fit_alpha(const CouplingMatrix& couplings, const ChainGeometry& chain) {
  const int n = chain.n();
  if (n < 3) throw std::runtime_error("fit_alpha: need at least three ions");

  // Least squares of log|J| = log(prefactor) - alpha * log(r).
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int cnt = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double jij = std::abs(couplings.j_khz(i, j));
      if (jij <= 0.0) throw std::runtime_error("fit_alpha: vanishing coupling");
      const double x = std::log(std::abs(chain.positions(i) - chain.positions(j)));
      const double y = std::log(jij);
      sx += x; sy += y; sxx += x * x; sxy += x * y;
      ++cnt;
    }
  }
  const double det = cnt * sxx - sx * sx;
  const double slope = (cnt * sxy - sx * sy) / det;
  const double intercept = (sy - slope * sx) / cnt;

  PowerLawFit fit;
  fit.alpha = -slope;
  fit.prefactor_khz = std::exp(intercept);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double x = std::log(std::abs(chain.positions(i) - chain.positions(j)));
      const double y = std::log(std::abs(couplings.j_khz(i, j)));
      fit.max_log_residual = std::max(fit.max_log_residual, std::abs(y - (intercept + slope * x)));
    }
  }
  return fit;
}

TrapParams tune_axial(const TrapParams& params, double target_alpha, double tol) {
  const double lo_khz = 620.0, hi_khz = 950.0;
  const ChainGeometry chain = solve_equilibrium(params.n_ions);

  auto alpha_at = [&](double axial) {
    TrapParams p = params;
    p.axial_khz = axial;
    const TransverseModes modes = transverse_modes(chain, p);
    return fit_alpha(coupling_matrix(chain, modes, p), chain).alpha;
  };

  double alo = alpha_at(lo_khz);
  double ahi = alpha_at(hi_khz);
  if (target_alpha < std::min(alo, ahi) - tol || target_alpha > std::max(alo, ahi) + tol)
    throw std::runtime_error("tune_axial: target decay exponent outside the reachable range");

  double lo = lo_khz, hi = hi_khz;
  if (alo > ahi) std::swap(lo, hi);  // keep alpha(lo) <= target <= alpha(hi)
  TrapParams out = params;
  for (int iter = 0; iter < 80; ++iter) {
    const double mid = 0.5 * (lo + hi);
    const double a = alpha_at(mid);
    if (std::abs(a - target_alpha) <= tol) {
      out.axial_khz = mid;
      return out;
    }
    (a < target_alpha ? lo : hi) = mid;
  }
  // The bracket collapsed without meeting tol; report the midpoint if it is
  // close, otherwise fail loudly.
  const double mid = 0.5 * (lo + hi);
  if (std::abs(alpha_at(mid) - target_alpha) <= 2 * tol) {
    out.axial_khz = mid;
    return out;
  }
  throw std::runtime_error("tune_axial: bisection failed to converge");
}

}  // namespace ionsim::trap
