#include "ionsim/spin_system.hpp"

#include "ionsim/kernels/kernels.hpp"
#include "ionsim/units.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace ionsim::spin {

namespace {

// i^k for k mod 4; gauge(s) = i^popcount(s).
constexpr cplx kPow4[4] = {{1.0, 0.0}, {0.0, 1.0}, {-1.0, 0.0}, {0.0, -1.0}};

cplx gauge(std::size_t s) { return kPow4[std::popcount(s) & 3]; }

void check_sites(int n_sites, int limit, const char* what) {
  if (n_sites < 1 || n_sites > limit) {
    throw std::invalid_argument(std::string(what) + ": site count " +
                                std::to_string(n_sites) + " outside [1, " +
                                std::to_string(limit) + "]");
  }
}

int site_count_of(const StateVector& psi) {
  const auto dim = static_cast<std::size_t>(psi.size());
  if (dim < 2 || (dim & (dim - 1)) != 0) {
    throw std::invalid_argument("state dimension must be a power of two, got " +
                                std::to_string(dim));
  }
  return std::countr_zero(dim);
}

}  // namespace

HamiltonianSpec build_hamiltonian(const Eigen::MatrixXd& j_khz, double field_angular) {
  if (j_khz.rows() != j_khz.cols()) {
    throw std::invalid_argument("coupling matrix must be square");
  }
  const int n = static_cast<int>(j_khz.rows());
  check_sites(n, kMaxSites, "build_hamiltonian");
  for (int i = 0; i < n; ++i) {
    if (j_khz(i, i) != 0.0) {
      throw std::invalid_argument("coupling matrix must have zero diagonal");
    }
    for (int j = i + 1; j < n; ++j) {
      if (std::abs(j_khz(i, j) - j_khz(j, i)) > 1e-12 * std::max(1.0, std::abs(j_khz(i, j)))) {
        throw std::invalid_argument("coupling matrix must be symmetric");
      }
    }
  }
  return HamiltonianSpec{j_khz, field_angular};
}

void apply_hamiltonian(const HamiltonianSpec& h, const cplx* x, cplx* y) {
  const int n = h.n_sites();
  const std::size_t dim = std::size_t{1} << n;
  std::fill(y, y + dim, cplx{0.0, 0.0});
  const double b = h.field_angular;
  if (b != 0.0) {
    // -B sigma^y_j: amplitude flows t^b -> t with weight +iB when bit j of t
    // is 0 and -iB when it is 1.
    for (int j = 0; j < n; ++j) {
      kernels::flip_axpy(cplx{0.0, b}, cplx{0.0, -b}, std::size_t{1} << j, x, y, dim);
    }
  }
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double jij = units::angular(h.j_khz(i, j));
      if (jij == 0.0) continue;
      const cplx c{-jij, 0.0};
      kernels::flip_axpy(c, c, (std::size_t{1} << i) | (std::size_t{1} << j), x, y, dim);
    }
  }
}

StateVector initial_state(int n_sites) {
  check_sites(n_sites, kMaxSites, "initial_state");
  const std::size_t dim = std::size_t{1} << n_sites;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  StateVector psi(dim);
  for (std::size_t s = 0; s < dim; ++s) psi[s] = gauge(s) * scale;
  return psi;
}

StateVector apply_site(const StateVector& psi, Axis axis, int site) {
  const int n = site_count_of(psi);
  if (site < 0 || site >= n) {
    throw std::out_of_range("apply_site: site " + std::to_string(site) +
                            " outside chain of " + std::to_string(n));
  }
  const std::size_t dim = static_cast<std::size_t>(psi.size());
  const std::size_t mask = std::size_t{1} << site;
  StateVector out = StateVector::Zero(psi.size());
  switch (axis) {
    case Axis::x:
      kernels::flip_axpy(cplx{1.0, 0.0}, cplx{1.0, 0.0}, mask, psi.data(), out.data(), dim);
      break;
    case Axis::y:
      kernels::flip_axpy(cplx{0.0, -1.0}, cplx{0.0, 1.0}, mask, psi.data(), out.data(), dim);
      break;
    case Axis::z:
      kernels::masked_sign_axpy(cplx{1.0, 0.0}, mask, psi.data(), out.data(), dim);
      break;
  }
  return out;
}

StateVector apply_string(const StateVector& psi,
                         const std::vector<std::pair<int, Axis>>& ops) {
  StateVector out = psi;
  for (auto it = ops.rbegin(); it != ops.rend(); ++it) {
    out = apply_site(out, it->second, it->first);
  }
  return out;
}

double expectation(const StateVector& psi, const std::vector<std::pair<int, Axis>>& ops) {
  const StateVector phi = apply_string(psi, ops);
  return kernels::dotc(psi.data(), phi.data(), static_cast<std::size_t>(psi.size())).real();
}

StateVector apply_parity(const StateVector& psi) {
  const int n = site_count_of(psi);
  const std::size_t dim = static_cast<std::size_t>(psi.size());
  const std::size_t mask = dim - 1;
  const cplx phase = kPow4[n & 3];  // i^N from N sigma^y factors
  StateVector out(psi.size());
  for (std::size_t s = 0; s < dim; ++s) {
    const cplx sign = (std::popcount(s) & 1) ? -phase : phase;
    out[mask ^ s] = sign * psi[s];
  }
  return out;
}

Eigen::MatrixXcd dense_hamiltonian(const HamiltonianSpec& h) {
  check_sites(h.n_sites(), kMaxDenseSites, "dense_hamiltonian");
  const std::size_t dim = std::size_t{1} << h.n_sites();
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(dim, dim);
  StateVector col(dim);
  StateVector out(dim);
  for (std::size_t s = 0; s < dim; ++s) {
    col.setZero();
    col[s] = 1.0;
    apply_hamiltonian(h, col.data(), out.data());
    m.col(s) = out;
  }
  return m;
}

Eigen::MatrixXcd dense_site(Axis axis, int site, int n_sites) {
  check_sites(n_sites, kMaxDenseSites, "dense_site");
  if (site < 0 || site >= n_sites) throw std::out_of_range("dense_site: bad site");
  const std::size_t dim = std::size_t{1} << n_sites;
  const std::size_t mask = std::size_t{1} << site;
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(dim, dim);
  for (std::size_t s = 0; s < dim; ++s) {
    const bool down = (s & mask) != 0;
    switch (axis) {
      case Axis::x:
        m(s ^ mask, s) = 1.0;
        break;
      case Axis::y:
        m(s ^ mask, s) = down ? cplx{0.0, -1.0} : cplx{0.0, 1.0};
        break;
      case Axis::z:
        m(s, s) = down ? -1.0 : 1.0;
        break;
    }
  }
  return m;
}

Eigen::MatrixXcd dense_parity(int n_sites) {
  check_sites(n_sites, kMaxDenseSites, "dense_parity");
  const std::size_t dim = std::size_t{1} << n_sites;
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Identity(dim, dim);
  for (int j = 0; j < n_sites; ++j) m = dense_site(Axis::y, j, n_sites) * m;
  return m;
}

EigenDecomposition diagonalize(const HamiltonianSpec& h) {
  const int n = h.n_sites();
  check_sites(n, kMaxDenseSites, "diagonalize");
  const int dim = 1 << n;
  const double b = h.field_angular;

  // Gauged Hamiltonian D H D^dag: real symmetric. The field gives +B on every
  // single-bit flip; a pair flip carries +J when the two bits agree, -J when
  // they differ.
  Eigen::MatrixXd hg = Eigen::MatrixXd::Zero(dim, dim);
  if (b != 0.0) {
    for (int j = 0; j < n; ++j) {
      const int mask = 1 << j;
      for (int t = 0; t < dim; ++t) hg(t ^ mask, t) += b;
    }
  }
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double jij = units::angular(h.j_khz(i, j));
      if (jij == 0.0) continue;
      const int mask = (1 << i) | (1 << j);
      for (int t = 0; t < dim; ++t) {
        const bool agree = (((t >> i) ^ (t >> j)) & 1) == 0;
        hg(t ^ mask, t) += agree ? jij : -jij;
      }
    }
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(hg);
  if (solver.info() != Eigen::Success) {
    throw std::runtime_error("diagonalize: eigensolver failed to converge");
  }

  EigenDecomposition dec;
  dec.n_sites = n;
  dec.energy = solver.eigenvalues();
  dec.gauge_vectors = solver.eigenvectors();

  // The gauged spin-reflection operator is (-1)^N times the all-bits-flip
  // permutation; rotate each degenerate cluster into its eigenbasis so every
  // eigenstate carries a definite parity.
  const double sgn = (n & 1) ? -1.0 : 1.0;
  const int all = dim - 1;
  auto reflect = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd r(dim);
    for (int t = 0; t < dim; ++t) r[t] = sgn * v[all ^ t];
    return r;
  };

  const double scale = std::max(1.0, dec.energy.cwiseAbs().maxCoeff());
  const double tol = 1e-9 * scale;
  dec.parity.resize(dim);
  int a = 0;
  while (a < dim) {
    int bnd = a + 1;
    while (bnd < dim && dec.energy[bnd] - dec.energy[bnd - 1] <= tol) ++bnd;
    const int k = bnd - a;
    Eigen::MatrixXd pv(dim, k);
    for (int c = 0; c < k; ++c) pv.col(c) = reflect(dec.gauge_vectors.col(a + c));
    Eigen::MatrixXd blk = dec.gauge_vectors.middleCols(a, k).transpose() * pv;
    blk = 0.5 * (blk + blk.transpose()).eval();
    Eigen::VectorXd labels;
    if (k == 1) {
      labels = blk.col(0);
    } else {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> rot(blk);
      dec.gauge_vectors.middleCols(a, k) =
          (dec.gauge_vectors.middleCols(a, k) * rot.eigenvectors()).eval();
      labels = rot.eigenvalues();
    }
    for (int c = 0; c < k; ++c) {
      const double p = labels[c];
      if (std::abs(std::abs(p) - 1.0) > 1e-6) {
        throw std::runtime_error("diagonalize: eigenstate parity " + std::to_string(p) +
                                 " is not +-1");
      }
      dec.parity[a + c] = p > 0.0 ? 1 : -1;
    }
    a = bnd;
  }

  // Deterministic column signs: largest-magnitude component positive.
  for (int c = 0; c < dim; ++c) {
    int imax = 0;
    dec.gauge_vectors.col(c).cwiseAbs().maxCoeff(&imax);
    if (dec.gauge_vectors(imax, c) < 0.0) dec.gauge_vectors.col(c) *= -1.0;
  }
  return dec;
}

Eigen::VectorXcd EigenDecomposition::to_eigenbasis(const StateVector& psi) const {
  if (psi.size() != dim()) throw std::invalid_argument("to_eigenbasis: dimension mismatch");
  const std::size_t d = static_cast<std::size_t>(dim());
  Eigen::VectorXd wr(d), wi(d);
  for (std::size_t s = 0; s < d; ++s) {
    const cplx w = gauge(s) * psi[static_cast<Eigen::Index>(s)];
    wr[s] = w.real();
    wi[s] = w.imag();
  }
  const Eigen::VectorXd cr = gauge_vectors.transpose() * wr;
  const Eigen::VectorXd ci = gauge_vectors.transpose() * wi;
  return cr + cplx{0.0, 1.0} * ci;
}

StateVector EigenDecomposition::from_eigenbasis(const Eigen::VectorXcd& coeff) const {
  if (coeff.size() != dim()) throw std::invalid_argument("from_eigenbasis: dimension mismatch");
  const Eigen::VectorXd ur = gauge_vectors * coeff.real().matrix();
  const Eigen::VectorXd ui = gauge_vectors * coeff.imag().matrix();
  const std::size_t d = static_cast<std::size_t>(dim());
  StateVector psi(d);
  for (std::size_t s = 0; s < d; ++s) {
    psi[s] = std::conj(gauge(s)) * cplx{ur[s], ui[s]};
  }
  return psi;
}

Eigen::VectorXcd EigenDecomposition::eigenvector(int n) const {
  if (n < 0 || n >= dim()) throw std::out_of_range("eigenvector: index out of range");
  const std::size_t d = static_cast<std::size_t>(dim());
  Eigen::VectorXcd v(d);
  for (std::size_t s = 0; s < d; ++s) {
    v[s] = std::conj(gauge(s)) * gauge_vectors(s, n);
  }
  return v;
}

}  // namespace ionsim::spin
