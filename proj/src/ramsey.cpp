#include "ionsim/ramsey.hpp"

#include "ionsim/evolution.hpp"
#include "ionsim/kernels/kernels.hpp"

#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>

namespace ionsim::ramsey {

namespace {

using spin::Axis;

void check_site(int site, int n, const char* what) {
  if (site < 0 || site >= n) {
    throw std::out_of_range(std::string(what) + ": site " + std::to_string(site) +
                            " outside chain of " + std::to_string(n));
  }
}

// <U(t)psi0| sigma^x_i |U(t) sigma^x_j psi0>, the operator-ordered two-point
// function; its doubled imaginary part is the commutator expectation.
cplx two_point(const spin::EigenDecomposition& dec, const StateVector& psi0, int i, int j,
               double t) {
  const StateVector bra = evolution::evolve_eigen(dec, psi0, t);
  const StateVector ket =
      evolution::evolve_eigen(dec, spin::apply_site(psi0, Axis::x, j), t);
  const StateVector xket = spin::apply_site(ket, Axis::x, i);
  return kernels::dotc(bra.data(), xket.data(), static_cast<std::size_t>(bra.size()));
}

}  // namespace

StateVector rotate_single(const StateVector& psi, int site, double phi) {
  const cplx ic{0.0, std::cos(phi)};
  const cplx is{0.0, std::sin(phi)};
  const StateVector x = spin::apply_site(psi, Axis::x, site);
  const StateVector y = spin::apply_site(psi, Axis::y, site);
  return M_SQRT1_2 * (psi + ic * x - is * y);
}

StateVector rotate_global(const StateVector& psi, double phi) {
  StateVector out = psi;
  const auto dim = static_cast<std::size_t>(psi.size());
  for (int site = 0; (std::size_t{1} << site) < dim; ++site) {
    out = rotate_single(out, site, phi);
  }
  return out;
}

double ramsey_measure(const spin::EigenDecomposition& dec, const StateVector& psi0,
                      const ProtocolParams& p, double t) {
  check_site(p.measured_site, dec.n_sites, "ramsey_measure");
  check_site(p.rotated_site, dec.n_sites, "ramsey_measure");
  if (t < 0.0) throw std::invalid_argument("ramsey_measure: negative evolution time");
  StateVector state = rotate_single(psi0, p.rotated_site, p.phi1);
  state = evolution::evolve_eigen(dec, state, t);
  state = rotate_global(state, p.phi2);
  return spin::expectation(state, {{p.measured_site, Axis::z}});
}

double green_direct(const spin::EigenDecomposition& dec, const StateVector& psi0, int i, int j,
                    double t) {
  if (t < 0.0) return 0.0;
  return 2.0 * two_point(dec, psi0, i, j, t).imag();
}

double commutator_expectation(const spin::EigenDecomposition& dec, const StateVector& psi0,
                              int i, int j, double t) {
  return 2.0 * two_point(dec, psi0, i, j, t).imag();
}

LehmannTerms lehmann_terms(const spin::EigenDecomposition& dec, const StateVector& psi0, int i,
                           int j, double prune_rel) {
  const int dim = dec.dim();
  check_site(i, dec.n_sites, "lehmann_terms");
  check_site(j, dec.n_sites, "lehmann_terms");
  const Eigen::VectorXcd c0 = dec.to_eigenbasis(psi0);
  const Eigen::VectorXcd cj = dec.to_eigenbasis(spin::apply_site(psi0, Axis::x, j));

  // sigma^x_i is i * A in the gauge, A the signed bit-flip permutation; its
  // eigenbasis matrix elements come from one real product V^T (A V).
  const auto& v = dec.gauge_vectors;
  const int mask = 1 << i;
  Eigen::MatrixXd av(dim, dim);
  for (int t = 0; t < dim; ++t) {
    av.row(t) = (((t >> i) & 1) ? 1.0 : -1.0) * v.row(t ^ mask);
  }
  const Eigen::MatrixXd x = v.transpose() * av;

  double wmax = 0.0;
  for (int m = 0; m < dim; ++m) {
    const double am = std::abs(c0[m]);
    for (int n = 0; n < dim; ++n) {
      wmax = std::max(wmax, am * std::abs(x(m, n)) * std::abs(cj[n]));
    }
  }

  LehmannTerms terms;
  const double cutoff = prune_rel * wmax;
  const cplx iunit{0.0, 1.0};
  for (int m = 0; m < dim; ++m) {
    for (int n = 0; n < dim; ++n) {
      const cplx w = iunit * std::conj(c0[m]) * x(m, n) * cj[n];
      const double aw = std::abs(w);
      if (aw <= cutoff || aw == 0.0) continue;
      terms.weight.push_back(w);
      terms.freq.push_back(dec.energy[n] - dec.energy[m]);
      terms.states.emplace_back(m, n);
    }
  }
  return terms;
}

double green_lehmann(const LehmannTerms& terms, double t) {
  if (t < 0.0) return 0.0;
  cplx z{0.0, 0.0};
  for (std::size_t k = 0; k < terms.size(); ++k) {
    z += terms.weight[k] * std::polar(1.0, -terms.freq[k] * t);
  }
  return 2.0 * z.imag();
}

spin::EigenDecomposition conjugate_by_x(const spin::EigenDecomposition& dec, int site) {
  check_site(site, dec.n_sites, "conjugate_by_x");
  const int dim = dec.dim();
  const int mask = 1 << site;
  spin::EigenDecomposition out;
  out.n_sites = dec.n_sites;
  out.energy = dec.energy;
  out.gauge_vectors.resize(dim, dim);
  for (int t = 0; t < dim; ++t) {
    out.gauge_vectors.row(t) =
        (((t >> site) & 1) ? 1.0 : -1.0) * dec.gauge_vectors.row(t ^ mask);
  }
  out.parity = -dec.parity;
  return out;
}

cplx loschmidt_echo(const spin::EigenDecomposition& eig_h0, const spin::EigenDecomposition& eig_h,
                    const StateVector& psi0, double t) {
  const StateVector under_h0 = evolution::evolve_eigen(eig_h0, psi0, t);
  const StateVector under_h = evolution::evolve_eigen(eig_h, psi0, t);
  return kernels::dotc(under_h0.data(), under_h.data(),
                       static_cast<std::size_t>(psi0.size()));
}

double loschmidt_green(const spin::EigenDecomposition& eig_h0,
                       const spin::EigenDecomposition& eig_h, const StateVector& psi0, int i,
                       double t, double im_tol) {
  check_site(i, eig_h0.n_sites, "loschmidt_green");
  if (t < 0.0) return 0.0;
  const double scale = std::max(1.0, eig_h0.energy.cwiseAbs().maxCoeff());
  if (eig_h.n_sites != eig_h0.n_sites ||
      (eig_h.energy - eig_h0.energy).cwiseAbs().maxCoeff() > 1e-9 * scale) {
    throw std::invalid_argument(
        "loschmidt_green: second decomposition is not a single-site conjugate of the first");
  }
  // Spot-check H = sigma^x_i H0 sigma^x_i on one unstructured probe vector.
  const int dim = eig_h0.dim();
  StateVector probe(dim);
  for (int s = 0; s < dim; ++s) probe[s] = cplx(1.0 + s % 7, static_cast<double>(s % 3));
  probe.normalize();
  auto apply_via = [](const spin::EigenDecomposition& d, const StateVector& u) {
    Eigen::VectorXcd c = d.to_eigenbasis(u);
    for (Eigen::Index k = 0; k < c.size(); ++k) c[k] *= d.energy[k];
    return d.from_eigenbasis(c);
  };
  const StateVector lhs = apply_via(eig_h, probe);
  const StateVector rhs = spin::apply_site(
      apply_via(eig_h0, spin::apply_site(probe, Axis::x, i)), Axis::x, i);
  if ((lhs - rhs).norm() > 1e-6 * scale) {
    throw std::invalid_argument("loschmidt_green: decomposition does not match site " +
                                std::to_string(i));
  }

  const cplx g = cplx{0.0, -1.0} * (loschmidt_echo(eig_h0, eig_h, psi0, t) -
                                    loschmidt_echo(eig_h0, eig_h, psi0, -t));
  if (std::abs(g.imag()) > im_tol) {
    throw std::domain_error(
        "loschmidt_green: imaginary residue " + std::to_string(g.imag()) +
        "; initial state is outside the echo identity's domain (not gauge-real)");
  }
  return g.real();
}

RamseyTrace scan_trace(const spin::EigenDecomposition& dec, const StateVector& psi0, int i,
                       int j, double t_max, int samples, TraceMethod method) {
  check_site(i, dec.n_sites, "scan_trace");
  check_site(j, dec.n_sites, "scan_trace");
  if (samples < 2) throw std::invalid_argument("scan_trace: need at least two samples");
  if (t_max <= 0.0) throw std::invalid_argument("scan_trace: trace length must be positive");

  RamseyTrace trace;
  trace.i = i;
  trace.j = j;
  trace.times = Eigen::VectorXd::LinSpaced(samples, 0.0, t_max);
  trace.values.resize(samples);

  switch (method) {
    case TraceMethod::direct: {
      // Cache the eigenbasis coefficients; each sample is two phase rolls and
      // two basis changes.
      const Eigen::VectorXcd c0 = dec.to_eigenbasis(psi0);
      const Eigen::VectorXcd cj = dec.to_eigenbasis(spin::apply_site(psi0, Axis::x, j));
      Eigen::VectorXcd ca(c0.size()), cb(c0.size());
      for (int m = 0; m < samples; ++m) {
        const double t = trace.times[m];
        for (Eigen::Index k = 0; k < c0.size(); ++k) {
          const cplx ph = std::polar(1.0, -dec.energy[k] * t);
          ca[k] = c0[k] * ph;
          cb[k] = cj[k] * ph;
        }
        const StateVector bra = dec.from_eigenbasis(ca);
        const StateVector xket = spin::apply_site(dec.from_eigenbasis(cb), Axis::x, i);
        trace.values[m] =
            2.0 * kernels::dotc(bra.data(), xket.data(), static_cast<std::size_t>(bra.size()))
                      .imag();
      }
      break;
    }
    case TraceMethod::lehmann: {
      const LehmannTerms terms = lehmann_terms(dec, psi0, i, j);
      const std::size_t np = terms.size();
      const double dt = t_max / (samples - 1);
      std::vector<cplx> phase(np, cplx{1.0, 0.0});
      std::vector<cplx> step(np);
      for (std::size_t p = 0; p < np; ++p) step[p] = std::polar(1.0, -terms.freq[p] * dt);
      std::vector<cplx> z(static_cast<std::size_t>(samples), cplx{0.0, 0.0});
      kernels::oscillator_sum(phase.data(), step.data(), terms.weight.data(), np, z.data(),
                              z.size());
      for (int m = 0; m < samples; ++m) trace.values[m] = 2.0 * z[m].imag();
      break;
    }
    case TraceMethod::protocol: {
      ProtocolParams p;
      p.measured_site = i;
      p.rotated_site = j;
      for (int m = 0; m < samples; ++m) {
        trace.values[m] = 2.0 * ramsey_measure(dec, psi0, p, trace.times[m]);
      }
      break;
    }
  }
  return trace;
}

}  // namespace ionsim::ramsey
