#include "ionsim/cs_spectra.hpp"

#include "ionsim/kernels/kernels.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

namespace ionsim::cs {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

}  // namespace

CsProblem build_problem(int m, int n_step, double t_total, unsigned seed) {
  if (m < 1) throw std::invalid_argument("need at least one time sample");
  if (n_step < m) throw std::invalid_argument("frequency grid must be at least as fine as the samples");
  if (!(t_total > 0.0)) throw std::invalid_argument("time window must be positive");

  CsProblem prob;
  prob.m = m;
  prob.n_step = n_step;
  prob.dt = t_total / m;
  prob.seed = seed;
  prob.times = prob.dt * Eigen::VectorXd::LinSpaced(m, 0.0, m - 1.0);
  prob.omega = (kTwoPi / (n_step * prob.dt)) * Eigen::VectorXd::LinSpaced(n_step, 0.0, n_step - 1.0);

  std::mt19937 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd raw(m, m);
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < m; ++c) raw(r, c) = gauss(rng);

  Eigen::HouseholderQR<Eigen::MatrixXd> qr(raw);
  prob.a = qr.householderQ() * Eigen::MatrixXd::Identity(m, m);
  const Eigen::MatrixXd r_factor = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int c = 0; c < m; ++c)
    if (r_factor(c, c) < 0.0) prob.a.col(c) *= -1.0;

  const double ortho = (prob.a.transpose() * prob.a - Eigen::MatrixXd::Identity(m, m))
                           .cwiseAbs()
                           .maxCoeff();
  if (ortho > 1e-12) throw std::runtime_error("measurement matrix failed orthogonalization");

  prob.finv.resize(m, n_step);
  for (int row = 0; row < m; ++row)
    for (int col = 0; col < n_step; ++col) {
      // w_n t_m = 2 pi n m / N_step
      const double phase = -kTwoPi * static_cast<double>(row) * static_cast<double>(col) / n_step;
      prob.finv(row, col) = std::polar(1.0 / n_step, phase);
    }
  return prob;
}

Spectrum basis_pursuit_matrix(const Eigen::MatrixXcd& phi, const Eigen::VectorXcd& b,
                              const SolverOptions& opts) {
  const int m = static_cast<int>(phi.rows());
  const int n = static_cast<int>(phi.cols());
  if (b.size() != m) throw std::invalid_argument("sample vector length must match the sensing rows");
  if (!b.allFinite() || !phi.allFinite()) throw std::invalid_argument("sensing data must be finite");
  if (!(opts.rho > 0.0) || opts.max_iter < 1) throw std::invalid_argument("bad solver options");

  Spectrum out;
  out.amplitude = Eigen::VectorXcd::Zero(n);
  if (b.cwiseAbs().maxCoeff() == 0.0) return out;  // zero is feasible with minimal L1

  const Eigen::MatrixXcd gram = phi * phi.adjoint();
  Eigen::LLT<Eigen::MatrixXcd> llt(gram);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("sensing matrix must have full row rank");

  const auto project = [&](const Eigen::VectorXcd& v) -> Eigen::VectorXcd {
    return v - phi.adjoint() * llt.solve(phi * v - b);
  };

  const double kappa = 1.0 / opts.rho;
  Eigen::VectorXcd x = Eigen::VectorXcd::Zero(n);
  Eigen::VectorXcd z = Eigen::VectorXcd::Zero(n);
  Eigen::VectorXcd u = Eigen::VectorXcd::Zero(n);
  Eigen::VectorXcd relaxed(n), z_old(n);

  int it = 0;
  bool converged = false;
  for (; it < opts.max_iter; ++it) {
    x = project(z - u);
    relaxed = opts.relax * x + (1.0 - opts.relax) * z;
    z_old.swap(z);
    z = relaxed + u;
    kernels::soft_threshold(z.data(), kappa, static_cast<std::size_t>(n));
    u += relaxed - z;

    const double scale = std::max(1.0, z.norm());
    if ((x - z).norm() <= opts.tol_change * scale &&
        (z - z_old).norm() <= opts.tol_change * scale) {
      converged = true;
      ++it;
      break;
    }
  }

  out.amplitude = x;
  out.iterations = it;
  out.residual = (phi * x - b).norm();
  out.l1 = x.cwiseAbs().sum();
  // The projected iterate is feasible by construction, so hitting the cap
  // leaves a valid (if not fully L1-settled) spectrum; only an infeasible
  // result is an error.
  (void)converged;
  if (out.residual > opts.eps_feas) {
    std::ostringstream msg;
    msg << "basis pursuit infeasible after " << it
        << " iterations (residual " << out.residual << ")";
    throw std::runtime_error(msg.str());
  }
  return out;
}

Spectrum basis_pursuit(const CsProblem& prob, const Eigen::VectorXd& samples,
                       const SolverOptions& opts) {
  if (samples.size() != prob.m) throw std::invalid_argument("sample count must match the problem");
  if (!samples.allFinite()) throw std::invalid_argument("samples must be finite");

  Spectrum out;
  out.omega = prob.omega;
  const Eigen::VectorXcd b = (prob.a * samples).cast<cplx>();
  const double scale = b.cwiseAbs().maxCoeff();
  if (scale == 0.0) {
    out.amplitude = Eigen::VectorXcd::Zero(prob.n_step);
    return out;
  }

  // Solve in units where the unknown and right-hand side are O(1): substitute
  // x = N_step * scale * y, which turns the sensing matrix into A e^{-i w t}.
  const Eigen::MatrixXcd phi = prob.a * (static_cast<double>(prob.n_step) * prob.finv);
  Spectrum core = basis_pursuit_matrix(phi, b / scale, opts);

  const double back = prob.n_step * scale;
  out.amplitude = back * core.amplitude;
  out.iterations = core.iterations;
  out.residual = scale * core.residual;
  out.l1 = back * core.l1;
  return out;
}

std::vector<Peak> extract_peaks(const Spectrum& s, double threshold_fraction) {
  if (!(threshold_fraction > 0.0) || !(threshold_fraction < 1.0))
    throw std::invalid_argument("threshold fraction must lie in (0, 1)");
  const int n = static_cast<int>(s.amplitude.size());
  std::vector<Peak> peaks;
  if (n == 0) return peaks;

  const Eigen::VectorXd mags = s.amplitude.cwiseAbs();
  const double top = mags.maxCoeff();
  if (top == 0.0) return peaks;
  const double thr = threshold_fraction * top;

  std::vector<int> candidates;
  for (int k = 0; k < n; ++k) {
    const double left = mags((k + n - 1) % n);
    const double right = mags((k + 1) % n);
    if (mags(k) >= thr && mags(k) >= left && mags(k) >= right) candidates.push_back(k);
  }

  // Candidates on adjacent bins describe one unresolved feature.
  std::size_t run_start = 0;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    const bool last = (k + 1 == candidates.size()) || (candidates[k + 1] - candidates[k] > 1);
    if (!last) continue;
    int best = candidates[run_start];
    for (std::size_t r = run_start; r <= k; ++r)
      if (mags(candidates[r]) > mags(best)) best = candidates[r];
    Peak p;
    p.bin = best;
    p.freq = s.omega.size() == n ? s.omega(best) : 0.0;
    p.magnitude = mags(best);
    p.unresolved = (k > run_start);
    peaks.push_back(p);
    run_start = k + 1;
  }
  return peaks;
}

LehmannPeaks lehmann_reference(const ramsey::LehmannTerms& terms) {
  // G(t) = -i z(t) + i conj(z(t)): each z line contributes at both signs.
  std::vector<std::pair<double, cplx>> lines;
  lines.reserve(2 * terms.size());
  const cplx mi(0.0, -1.0);
  for (std::size_t k = 0; k < terms.size(); ++k) {
    lines.emplace_back(terms.freq[k], mi * terms.weight[k]);
    lines.emplace_back(-terms.freq[k], -mi * std::conj(terms.weight[k]));
  }
  std::sort(lines.begin(), lines.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  LehmannPeaks out;
  std::size_t k = 0;
  while (k < lines.size()) {
    double freq_acc = lines[k].first;
    cplx weight = lines[k].second;
    std::size_t count = 1;
    while (k + count < lines.size() && lines[k + count].first - lines[k].first <= 1e-9) {
      freq_acc += lines[k + count].first;
      weight += lines[k + count].second;
      ++count;
    }
    if (std::abs(weight) >= 1e-12) {
      out.freq.push_back(freq_acc / count);
      out.weight.push_back(weight);
    }
    k += count;
  }
  return out;
}

double fold_frequency(double freq, double period) {
  if (!(period > 0.0)) throw std::invalid_argument("period must be positive");
  double r = std::fmod(freq, period);
  if (r < 0.0) r += period;
  if (r >= period) r = 0.0;
  return r;
}

MatchReport match_peaks(const std::vector<Peak>& recovered, const LehmannPeaks& reference,
                        double bin_width, double period) {
  if (!(bin_width > 0.0) || !(period > 0.0) || bin_width > period)
    throw std::invalid_argument("bad grid geometry");

  // Strong lines choose first: when references cluster within a bin, the
  // association should go to the coefficient that can plausibly carry the
  // peak, not to whichever tiny neighbor sits marginally closer.
  std::vector<std::size_t> order(reference.size());
  for (std::size_t r = 0; r < order.size(); ++r) order[r] = r;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double wa = std::abs(reference.weight[a]);
    const double wb = std::abs(reference.weight[b]);
    if (wa != wb) return wa > wb;
    return reference.freq[a] < reference.freq[b];
  });

  MatchReport report;
  std::vector<bool> ref_used(reference.size(), false), rec_used(recovered.size(), false);
  for (const std::size_t r : order) {
    const double folded = fold_frequency(reference.freq[r], period);
    double best = bin_width;
    int pick = -1;
    for (std::size_t p = 0; p < recovered.size(); ++p) {
      if (rec_used[p]) continue;
      double d = std::abs(folded - recovered[p].freq);
      d = std::min(d, period - d);
      if (d < best || (pick < 0 && d <= best)) {
        best = d;
        pick = static_cast<int>(p);
      }
    }
    if (pick < 0) continue;
    ref_used[r] = true;
    rec_used[pick] = true;
    MatchedLine line;
    line.ref_freq = reference.freq[r];
    line.folded_freq = folded;
    line.rec_freq = recovered[pick].freq;
    line.distance = best;
    line.ref_magnitude = std::abs(reference.weight[r]);
    line.rec_magnitude = recovered[pick].magnitude;
    report.matched.push_back(line);
  }
  for (std::size_t r = 0; r < reference.size(); ++r)
    if (!ref_used[r])
      report.unmatched_reference.emplace_back(reference.freq[r], std::abs(reference.weight[r]));
  for (std::size_t p = 0; p < recovered.size(); ++p)
    if (!rec_used[p]) report.spurious.push_back(recovered[p]);
  return report;
}

}  // namespace ionsim::cs
