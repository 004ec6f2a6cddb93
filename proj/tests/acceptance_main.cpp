// Acceptance suite: end-to-end checks of the simulator against closed-form
// identities, independent solvers, and pinned physical behavior. Each check
// prints one PASS/FAIL line with a short measurement summary and its runtime;
// the process exit status is the number of failed checks.

#include "ionsim/cs_spectra.hpp"
#include "ionsim/evolution.hpp"
#include "ionsim/io.hpp"
#include "ionsim/lr_analysis.hpp"
#include "ionsim/moments.hpp"
#include "ionsim/pipeline.hpp"
#include "ionsim/ramsey.hpp"
#include "ionsim/spin_system.hpp"
#include "ionsim/trap_chain.hpp"
#include "ionsim/units.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>
#include <utility>
#include <vector>

namespace fs = std::filesystem;
using ionsim::spin::StateVector;
using cplx = std::complex<double>;

namespace {

std::string strfmt(const char* fmt, ...) {
  char buf[512];
  va_list args;
  va_start(args, fmt);
  std::vsnprintf(buf, sizeof(buf), fmt, args);
  va_end(args);
  return std::string(buf);
}

// Symmetric hollow coupling matrix with entries uniform in [0.2, 1.0] kHz.
Eigen::MatrixXd random_couplings(int n, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> dist(0.2, 1.0);
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(n, n);
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) j(a, b) = j(b, a) = dist(rng);
  return j;
}

Eigen::MatrixXd power_law_couplings(int n, double alpha, double j0) {
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(n, n);
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) j(a, b) = j(b, a) = j0 / std::pow(double(b - a), alpha);
  return j;
}

double mean_offdiag(const Eigen::MatrixXd& j) {
  const int n = static_cast<int>(j.rows());
  double sum = 0.0;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      if (a != b) sum += j(a, b);
  return sum / double(n * (n - 1));
}

// Polarized start ramped down to the target field under the exponential
// sweep b(t) = b0 exp(-t/tau).
StateVector ramp_to(const Eigen::MatrixXd& j_khz, double b0, double tau_ms, double b_target) {
  ionsim::evolution::RampSpec ramp;
  ramp.j_khz = j_khz;
  ramp.b0_angular = b0;
  ramp.tau_ms = tau_ms;
  const double t1 = ionsim::evolution::ramp_duration(b0, b_target, tau_ms);
  const StateVector psi0 = ionsim::spin::initial_state(static_cast<int>(j_khz.rows()));
  return ionsim::evolution::evolve_ramp(ramp, 0.0, t1, psi0);
}

// Least-squares slope of y against x.
double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sx += x[k];
    sy += y[k];
    sxx += x[k] * x[k];
    sxy += x[k] * y[k];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// Exhaustive LP solve of min ||x||_1 s.t. d x = b for real data, via the
// standard split x = p - q, p,q >= 0 and enumeration of all basic feasible
// points of [d, -d]. Independent of the iterative solver under test.
struct VertexSolution {
  double objective = std::numeric_limits<double>::infinity();
  Eigen::VectorXd x;
};

VertexSolution enumerate_vertices(const Eigen::MatrixXd& d, const Eigen::VectorXd& b) {
  const int m = static_cast<int>(d.rows());
  const int n = static_cast<int>(d.cols());
  Eigen::MatrixXd stacked(m, 2 * n);
  stacked << d, -d;

  VertexSolution best;
  best.x = Eigen::VectorXd::Zero(n);
  std::vector<int> pick(m);
  for (int k = 0; k < m; ++k) pick[k] = k;

  Eigen::MatrixXd basis(m, m);
  while (true) {
    for (int k = 0; k < m; ++k) basis.col(k) = stacked.col(pick[k]);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(basis);
    if (lu.isInvertible()) {
      const Eigen::VectorXd y = lu.solve(b);
      if ((y.array() >= -1e-9).all()) {
        const double obj = y.sum();
        if (obj < best.objective) {
          best.objective = obj;
          best.x.setZero();
          for (int k = 0; k < m; ++k) {
            if (pick[k] < n)
              best.x(pick[k]) += y(k);
            else
              best.x(pick[k] - n) -= y(k);
          }
        }
      }
    }
    int pos = m - 1;
    while (pos >= 0 && pick[pos] == 2 * n - m + pos) --pos;
    if (pos < 0) break;
    ++pick[pos];
    for (int k = pos + 1; k < m; ++k) pick[k] = pick[k - 1] + 1;
  }
  return best;
}

std::map<std::string, std::string> snapshot_tree(const fs::path& root) {
  std::map<std::string, std::string> tree;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    std::ifstream in(entry.path(), std::ios::binary);
    std::ostringstream body;
    body << in.rdbuf();
    tree[fs::relative(entry.path(), root).generic_string()] = body.str();
  }
  return tree;
}

struct CheckResult {
  bool pass = false;
  std::string detail;
};

struct Check {
  std::string name;
  double limit_s = 0.0;  // 0 = no runtime requirement
  std::function<CheckResult()> run;
};

// ---------------------------------------------------------------------------
// 1. The rotate-evolve-rotate protocol measures half the Green's function.

CheckResult check_protocol_identity() {
  double worst = 0.0;
  for (int n : {2, 4, 6, 8}) {
    const Eigen::MatrixXd j = random_couplings(n, 100 + static_cast<unsigned>(n));
    const double jbar = mean_offdiag(j);
    const double b0 = ionsim::units::angular(10.0 * jbar);
    const double tau = 0.85 / ionsim::units::angular(jbar);
    const double bt = ionsim::units::angular(0.94 * jbar);
    const StateVector psi = ramp_to(j, b0, tau, bt);
    const auto dec = ionsim::spin::diagonalize(ionsim::spin::build_hamiltonian(j, bt));
    for (int i = 0; i < n; ++i) {
      for (int jj = 0; jj < n; ++jj) {
        ionsim::ramsey::ProtocolParams p;
        p.measured_site = i;
        p.rotated_site = jj;
        for (int k = 0; k <= 12; ++k) {
          const double t = 2.0 * k / 12.0;
          const double m = ionsim::ramsey::ramsey_measure(dec, psi, p, t);
          const double g = ionsim::ramsey::green_direct(dec, psi, i, jj, t);
          worst = std::max(worst, std::abs(2.0 * m - g));
        }
      }
    }
  }
  return {worst < 1e-9, strfmt("N=2,4,6,8 ramped random chains, max |2M - G| = %.2e", worst)};
}

// ---------------------------------------------------------------------------
// 2. Direct evolution, the spectral double sum, and the echo route agree.

CheckResult check_three_routes() {
  const int n = 6;
  const Eigen::MatrixXd j = power_law_couplings(n, 1.0, 1.0);
  const double bt = ionsim::units::angular(0.94);
  const StateVector psi0 = ionsim::spin::initial_state(n);
  const auto dec = ionsim::spin::diagonalize(ionsim::spin::build_hamiltonian(j, bt));

  double worst_spectral = 0.0;
  double worst_echo = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto flipped = ionsim::ramsey::conjugate_by_x(dec, i);
    for (int jj = 0; jj < n; ++jj) {
      const auto terms = ionsim::ramsey::lehmann_terms(dec, psi0, i, jj);
      for (int k = 0; k <= 24; ++k) {
        const double t = 3.0 * k / 24.0;
        const double gd = ionsim::ramsey::green_direct(dec, psi0, i, jj, t);
        const double gl = ionsim::ramsey::green_lehmann(terms, t);
        worst_spectral = std::max(worst_spectral, std::abs(gd - gl));
        if (i == jj) {
          const double ge = ionsim::ramsey::loschmidt_green(dec, flipped, psi0, i, t);
          worst_echo = std::max(worst_echo, std::abs(gd - ge));
        }
      }
    }
  }
  const bool ok = worst_spectral < 1e-9 && worst_echo < 1e-9;
  return {ok, strfmt("N=6, 36 pairs: |direct - spectral| = %.2e, |direct - echo| = %.2e",
                     worst_spectral, worst_echo)};
}

// ---------------------------------------------------------------------------
// 3. One spin in a transverse field has G(t) = -2 sin(2Bt) <sigma^y>.

CheckResult check_single_spin() {
  const double b = ionsim::units::angular(1.0);
  const Eigen::MatrixXd j = Eigen::MatrixXd::Zero(1, 1);
  const auto dec = ionsim::spin::diagonalize(ionsim::spin::build_hamiltonian(j, b));

  std::vector<StateVector> states;
  states.push_back(ionsim::spin::initial_state(1));
  std::mt19937 rng(11);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int s = 0; s < 3; ++s) {
    StateVector psi(2);
    psi << cplx(gauss(rng), gauss(rng)), cplx(gauss(rng), gauss(rng));
    psi /= psi.norm();
    states.push_back(psi);
  }

  double worst = 0.0;
  for (const auto& psi : states) {
    const double sy = ionsim::spin::expectation(psi, {{0, ionsim::spin::Axis::y}});
    for (int k = 0; k <= 100; ++k) {
      const double t = (10.0 / b) * k / 100.0;
      const double g = ionsim::ramsey::green_direct(dec, psi, 0, 0, t);
      const double exact = -2.0 * std::sin(2.0 * b * t) * sy;
      worst = std::max(worst, std::abs(g - exact));
    }
  }
  return {worst < 1e-10,
          strfmt("4 states, t up to 10/B: max |G + 2 sin(2Bt)<sy>| = %.2e", worst)};
}

// ---------------------------------------------------------------------------
// 4. Without a transverse field every sigma^x response vanishes.

CheckResult check_zero_field_null() {
  const int n = 5;
  const Eigen::MatrixXd j = random_couplings(n, 7);
  const StateVector psi0 = ionsim::spin::initial_state(n);
  const auto dec = ionsim::spin::diagonalize(ionsim::spin::build_hamiltonian(j, 0.0));

  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int jj = 0; jj < n; ++jj) {
      const auto terms = ionsim::ramsey::lehmann_terms(dec, psi0, i, jj);
      for (int k = 0; k <= 25; ++k) {
        const double t = 5.0 * k / 25.0;
        worst = std::max(worst, std::abs(ionsim::ramsey::green_direct(dec, psi0, i, jj, t)));
        worst = std::max(worst, std::abs(ionsim::ramsey::green_lehmann(terms, t)));
      }
    }
  }
  return {worst < 1e-12, strfmt("N=5, all pairs, both routes: max |G| = %.2e", worst)};
}

// ---------------------------------------------------------------------------
// 5. The ramp stepper converges at fourth order and preserves the norm.

CheckResult check_integrator_order() {
  ionsim::trap::TrapParams params;
  params.n_ions = 4;
  const auto geom = ionsim::trap::solve_equilibrium(params.n_ions);
  const auto modes = ionsim::trap::transverse_modes(geom, params);
  const auto coup = ionsim::trap::coupling_matrix(geom, modes, params);

  ionsim::evolution::RampSpec ramp;
  ramp.j_khz = coup.j_khz;
  ramp.b0_angular = ionsim::units::angular(10.0 * coup.j0_khz);
  ramp.tau_ms = 0.85 / ionsim::units::angular(coup.j0_khz);
  const double bt = ionsim::units::angular(0.35 * coup.j0_khz);
  const double t1 = ionsim::evolution::ramp_duration(ramp.b0_angular, bt, ramp.tau_ms);
  const StateVector psi0 = ionsim::spin::initial_state(params.n_ions);

  const StateVector ref = ionsim::evolution::evolve_ramp_fixed(ramp, 0.0, t1, 512, psi0);
  const double e1 = (ionsim::evolution::evolve_ramp_fixed(ramp, 0.0, t1, 64, psi0) - ref).norm();
  const double e2 = (ionsim::evolution::evolve_ramp_fixed(ramp, 0.0, t1, 128, psi0) - ref).norm();
  const double ratio = (e2 > 0.0) ? e1 / e2 : 0.0;

  const StateVector adaptive = ionsim::evolution::evolve_ramp(ramp, 0.0, t1, psi0);
  const double drift = std::abs(adaptive.norm() - 1.0);

  const bool ok = e2 > 1e-14 && ratio > 13.0 && ratio < 19.0 && drift < 1e-10;
  return {ok, strfmt("N=4 chain ramp: halving ratio = %.2f (want 13..19), norm drift = %.2e",
                     ratio, drift)};
}

// ---------------------------------------------------------------------------
// 6. Spectral moments: sum rules, the field-linear first moment, and the
//    analytic/derivative third-moment ratio shared by every pair.

CheckResult check_moment_structure() {
  const int n = 5;
  const Eigen::MatrixXd j = power_law_couplings(n, 1.0, 1.0);
  const double b0 = ionsim::units::angular(10.0);
  const double tau = 0.85 / ionsim::units::angular(1.0);
  const double bt = ionsim::units::angular(0.94);
  const StateVector psi = ramp_to(j, b0, tau, bt);
  const auto dec = ionsim::spin::diagonalize(ionsim::spin::build_hamiltonian(j, bt));

  double worst_even = 0.0;       // mu0 and mu2 on both routes
  double worst_offdiag_mu1 = 0.0;
  double worst_prop = 0.0;       // relative spread of mu1 / (B <sy_i>)
  std::vector<double> mu1_over_bsy;
  std::vector<double> mu3_ratio;
  double max_mu3 = 0.0;

  const double espread = dec.energy(dec.energy.size() - 1) - dec.energy(0);
  const double h = ionsim::moments::suggested_step(espread);
  std::vector<ionsim::moments::MomentReport> reports;
  for (int i = 0; i < n; ++i)
    for (int jj = 0; jj < n; ++jj) {
      reports.push_back(ionsim::moments::moment_report(dec, psi, j, bt, i, jj, h));
      max_mu3 = std::max(max_mu3, std::abs(reports.back().analytic[3]));
    }

  for (const auto& rep : reports) {
    worst_even = std::max({worst_even, std::abs(rep.analytic[0]), std::abs(rep.analytic[2]),
                           std::abs(rep.numeric[0]), std::abs(rep.numeric[2])});
    if (rep.i != rep.j) {
      worst_offdiag_mu1 =
          std::max({worst_offdiag_mu1, std::abs(rep.analytic[1]), std::abs(rep.numeric[1])});
      if (std::abs(rep.analytic[3]) > 1e-2 * max_mu3) mu3_ratio.push_back(rep.ratio[3]);
    } else {
      const double sy =
          ionsim::spin::expectation(psi, {{rep.i, ionsim::spin::Axis::y}});
      if (std::abs(sy) > 1e-3) mu1_over_bsy.push_back(rep.analytic[1] / (bt * sy));
    }
  }

  const auto spread = [](const std::vector<double>& v) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return (*hi - *lo) / std::abs(0.5 * (*hi + *lo));
  };
  worst_prop = mu1_over_bsy.size() >= 2 ? spread(mu1_over_bsy) : 1.0;
  const double mu3_spread = mu3_ratio.size() >= 2 ? spread(mu3_ratio) : 1.0;

  const bool ok = worst_even < 1e-8 && worst_offdiag_mu1 < 1e-8 && worst_prop < 1e-6 &&
                  mu3_spread < 1e-6;
  return {ok, strfmt("mu0/mu2 max %.1e; offdiag mu1 max %.1e; mu1/(B<sy>) spread %.1e; "
                     "mu3 ratio spread %.1e over %zu pairs",
                     worst_even, worst_offdiag_mu1, worst_prop, mu3_spread, mu3_ratio.size())};
}

// ---------------------------------------------------------------------------
// 7. Off-diagonal response rises as t^3 at short times.

CheckResult check_short_time_onset() {
  const int n = 5;
  const Eigen::MatrixXd j = power_law_couplings(n, 1.0, 1.0);
  const double bt = ionsim::units::angular(0.94);
  const StateVector psi = ramp_to(j, ionsim::units::angular(10.0),
                                  0.85 / ionsim::units::angular(1.0), bt);
  const auto dec = ionsim::spin::diagonalize(ionsim::spin::build_hamiltonian(j, bt));

  const double unit = ionsim::units::angular(1.0);  // J0 = 1 kHz in rad/ms
  double worst_dev = 0.0;
  for (int jj : {1, 2, 4}) {
    std::vector<double> lt, lg;
    for (int k = 0; k < 12; ++k) {
      const double t = (1e-4 / unit) * std::pow(1e2, k / 11.0);
      const double g = ionsim::ramsey::green_direct(dec, psi, 0, jj, t);
      lt.push_back(std::log(t));
      lg.push_back(std::log(std::abs(g)));
    }
    worst_dev = std::max(worst_dev, std::abs(fit_slope(lt, lg) - 3.0));
  }
  return {worst_dev <= 0.1,
          strfmt("N=5, pairs (0,1),(0,2),(0,4): max |slope - 3| = %.3f", worst_dev)};
}

// ---------------------------------------------------------------------------
// 8. The trap produces ferromagnetic power-law couplings in the expected
//    range, and the axial frequency tunes the decay exponent: the sweep over
//    the tuning bracket moves the fitted exponent monotonically across at
//    least [0.78, 1.20], and every working target tunes to within 0.01.

CheckResult check_trap_couplings() {
  ionsim::trap::TrapParams params;  // 10 ions, stock drive settings
  const auto geom = ionsim::trap::solve_equilibrium(params.n_ions);
  const auto modes = ionsim::trap::transverse_modes(geom, params);
  const auto coup = ionsim::trap::coupling_matrix(geom, modes, params);

  double min_j = std::numeric_limits<double>::infinity();
  for (int a = 0; a < params.n_ions; ++a)
    for (int b = 0; b < params.n_ions; ++b)
      if (a != b) min_j = std::min(min_j, coup.j_khz(a, b));
  const double mu_ratio = coup.mu_khz / modes.freq_khz(0);

  bool ok = min_j > 0.0 && coup.j0_khz >= 0.5 && coup.j0_khz <= 2.0 &&
            std::abs(mu_ratio - 1.0233) <= 0.0005;

  const auto alpha_at = [&](double axial) {
    auto q = params;
    q.axial_khz = axial;
    const auto m2 = ionsim::trap::transverse_modes(geom, q);
    const auto c2 = ionsim::trap::coupling_matrix(geom, m2, q);
    return ionsim::trap::fit_alpha(c2, geom).alpha;
  };

  // Monotone sweep over the axial bracket spanning the working exponent range.
  double prev = std::numeric_limits<double>::infinity();
  bool monotone = true;
  for (int k = 0; k <= 6; ++k) {
    const double a = alpha_at(620.0 + (950.0 - 620.0) * k / 6.0);
    monotone = monotone && a < prev;
    prev = a;
  }
  const double hi = alpha_at(620.0), lo = alpha_at(950.0);
  ok = ok && monotone && lo <= 0.78 && hi >= 1.20;

  double worst_tune = 0.0;
  for (const double target : {0.8, 0.9, 1.0, 1.12, 1.2}) {
    const auto tuned = ionsim::trap::tune_axial(params, target);
    const double fitted = alpha_at(tuned.axial_khz);
    ok = ok && tuned.axial_khz >= 620.0 && tuned.axial_khz <= 950.0;
    worst_tune = std::max(worst_tune, std::abs(fitted - target));
  }
  ok = ok && worst_tune <= 0.01;

  return {ok, strfmt("min J = %.3f kHz, J0 = %.3f kHz, mu/com = %.5f; sweep alpha "
                     "[%.3f, %.3f] monotone, 5 targets tuned within %.4f",
                     min_j, coup.j0_khz, mu_ratio, lo, hi, worst_tune)};
}

// ---------------------------------------------------------------------------
// 9. Location of the minimum gap between the ground state and the excited
//    states reachable through the total-sigma^y coupling, swept over field.

CheckResult check_gap_location() {
  ionsim::trap::TrapParams params;
  params = ionsim::trap::tune_axial(params, 1.00);
  const auto geom = ionsim::trap::solve_equilibrium(params.n_ions);
  const auto modes = ionsim::trap::transverse_modes(geom, params);
  const auto coup = ionsim::trap::coupling_matrix(geom, modes, params);
  const auto fit = ionsim::trap::fit_alpha(coup, geom);

  double mean_row = 0.0;
  for (int a = 0; a < params.n_ions; ++a)
    for (int b = 0; b < params.n_ions; ++b)
      if (a != b) mean_row += coup.j_khz(a, b);
  mean_row /= params.n_ions;

  const int points = 50;
  double best_r = 0.0, best_gap = std::numeric_limits<double>::infinity();
  for (int k = 0; k < points; ++k) {
    const double r = 0.1 + (4.0 - 0.1) * k / (points - 1);
    const double b = ionsim::units::angular(r * coup.j0_khz);
    const auto dec = ionsim::spin::diagonalize(ionsim::spin::build_hamiltonian(coup.j_khz, b));
    const double gap = ionsim::pipeline::coupled_gap(dec);
    if (std::isfinite(gap) && gap < best_gap) {
      best_gap = gap;
      best_r = r;
    }
  }

  const bool ok = best_r >= 0.60 && best_r <= 0.90;
  return {ok, strfmt("N=10 alpha=%.2f: min gap %.3f rad/ms at B/J0 = %.2f "
                     "(B/mean-coupling = %.2f); required window [0.60, 0.90]",
                     fit.alpha, best_gap, best_r, best_r * coup.j0_khz / mean_row)};
}

// ---------------------------------------------------------------------------
// 10. Sparse recovery: an exactly sparse on-grid spectrum is reconstructed
//     line for line, and on small instances the iterative solver lands on
//     the same optimum as exhaustive LP vertex enumeration.

CheckResult check_sparse_recovery() {
  const auto prob = ionsim::cs::build_problem(64, 1024, 6.0, 2024);
  Eigen::VectorXcd x0 = Eigen::VectorXcd::Zero(prob.n_step);
  x0(37) = cplx(1.0, 0.4);
  x0(1024 - 37) = std::conj(x0(37));
  x0(214) = cplx(-0.35, 0.8);
  x0(1024 - 214) = std::conj(x0(214));
  x0(512) = cplx(0.6, 0.0);  // self-conjugate bin

  const Eigen::VectorXcd z = prob.finv * x0;
  if (z.imag().cwiseAbs().maxCoeff() > 1e-12)
    return {false, "planted spectrum did not produce real samples"};
  const Eigen::VectorXd samples = z.real();

  const auto spec = ionsim::cs::basis_pursuit(prob, samples);
  const auto peaks = ionsim::cs::extract_peaks(spec, 0.01);

  ionsim::cs::LehmannPeaks ref;
  for (int bin : {37, 214, 512, 1024 - 214, 1024 - 37}) {
    ref.freq.push_back(prob.omega(bin));
    ref.weight.push_back(x0(bin));
  }
  const auto report = ionsim::cs::match_peaks(peaks, ref, prob.bin_width(), prob.period());

  double amp_err = 0.0;
  for (int bin : {37, 214, 512, 1024 - 214, 1024 - 37})
    amp_err = std::max(amp_err, std::abs(spec.amplitude(bin) - x0(bin)));

  bool ok = report.matched.size() == 5 && report.spurious.empty() &&
            report.unmatched_reference.empty();
  for (const auto& m : report.matched) ok = ok && m.distance <= prob.bin_width();

  // Independent route: exhaustive vertex enumeration on small real instances.
  double l1_dev = 0.0, x_dev = 0.0, imag_max = 0.0;
  std::mt19937 rng(77);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int sizes[2][2] = {{5, 12}, {6, 14}};
  for (const auto& mn : sizes) {
    Eigen::MatrixXd d(mn[0], mn[1]);
    for (int r = 0; r < mn[0]; ++r)
      for (int c = 0; c < mn[1]; ++c) d(r, c) = gauss(rng);
    Eigen::VectorXd xs = Eigen::VectorXd::Zero(mn[1]);
    xs(2) = 1.1;
    xs(mn[1] - 3) = -0.6;
    const Eigen::VectorXd b = d * xs;

    const auto lp = enumerate_vertices(d, b);
    const auto sol = ionsim::cs::basis_pursuit_matrix(d.cast<cplx>(), b.cast<cplx>());
    l1_dev = std::max(l1_dev, std::abs(sol.l1 - lp.objective));
    imag_max = std::max(imag_max, sol.amplitude.imag().cwiseAbs().maxCoeff());
    x_dev = std::max(x_dev, (sol.amplitude.real() - lp.x).cwiseAbs().maxCoeff());
  }
  ok = ok && l1_dev <= 1e-6 && imag_max < 1e-7 && x_dev < 1e-5;

  return {ok, strfmt("5 planted lines: %zu matched, %zu spurious, amp err %.1e; "
                     "vs enumeration: l1 dev %.1e, x dev %.1e",
                     report.matched.size(), report.spurious.size(), amp_err, l1_dev, x_dev)};
}

// ---------------------------------------------------------------------------
// 11. Recovered spectrum of a simulated chain is explained by the spectral
//     lines of the generating decomposition.

CheckResult check_chain_spectrum() {
  ionsim::trap::TrapParams params;
  params = ionsim::trap::tune_axial(params, 1.00);
  const auto geom = ionsim::trap::solve_equilibrium(params.n_ions);
  const auto modes = ionsim::trap::transverse_modes(geom, params);
  const auto coup = ionsim::trap::coupling_matrix(geom, modes, params);

  const double b0 = ionsim::units::angular(10.0 * coup.j0_khz);
  const double tau = 0.85 / ionsim::units::angular(coup.j0_khz);
  const double bt = ionsim::units::angular(0.94 * coup.j0_khz);
  const StateVector psi = ramp_to(coup.j_khz, b0, tau, bt);
  const auto dec = ionsim::spin::diagonalize(ionsim::spin::build_hamiltonian(coup.j_khz, bt));
  const auto terms = ionsim::ramsey::lehmann_terms(dec, psi, 0, 0);

  const auto prob = ionsim::cs::build_problem(64, 1024, 6.0, 1);
  Eigen::VectorXd samples(prob.m);
  for (int m = 0; m < prob.m; ++m)
    samples(m) = ionsim::ramsey::green_lehmann(terms, prob.times(m));

  const auto spec = ionsim::cs::basis_pursuit(prob, samples);
  const auto peaks = ionsim::cs::extract_peaks(spec, 0.01);
  const auto ref = ionsim::cs::lehmann_reference(terms);
  const auto report = ionsim::cs::match_peaks(peaks, ref, prob.bin_width(), prob.period());

  std::vector<double> matched_freqs;
  for (const auto& m : report.matched) {
    bool fresh = true;
    for (double f : matched_freqs)
      if (std::abs(f - m.ref_freq) < 1e-9) fresh = false;
    if (fresh) matched_freqs.push_back(m.ref_freq);
  }

  bool ok = report.matched.size() + report.spurious.size() == peaks.size();
  ok = ok && matched_freqs.size() >= 3;
  for (const auto& m : report.matched) ok = ok && m.distance <= prob.bin_width();

  return {ok, strfmt("N=10 trace, %zu peaks: %zu matched to %zu distinct lines, %zu spurious",
                     peaks.size(), report.matched.size(), matched_freqs.size(),
                     report.spurious.size())};
}

// ---------------------------------------------------------------------------
// 12. Light-cone exponents: longer-ranged couplings flatten the power-law
//     arrival-time fronts.

CheckResult check_lightcone_trend() {
  const double alphas[3] = {0.90, 1.00, 1.12};
  double gamma[3] = {0.0, 0.0, 0.0};

  for (int a = 0; a < 3; ++a) {
    ionsim::trap::TrapParams params;
    params = ionsim::trap::tune_axial(params, alphas[a]);
    const auto geom = ionsim::trap::solve_equilibrium(params.n_ions);
    const auto modes = ionsim::trap::transverse_modes(geom, params);
    const auto coup = ionsim::trap::coupling_matrix(geom, modes, params);

    const double b0 = ionsim::units::angular(10.0 * coup.j0_khz);
    const double tau = 0.85 / ionsim::units::angular(coup.j0_khz);
    const double bt = ionsim::units::angular(0.94 * coup.j0_khz);
    const StateVector psi = ramp_to(coup.j_khz, b0, tau, bt);
    const auto dec = ionsim::spin::diagonalize(ionsim::spin::build_hamiltonian(coup.j_khz, bt));

    std::vector<ionsim::ramsey::RamseyTrace> traces;
    std::vector<double> distances;
    for (int jj = 1; jj < params.n_ions; ++jj) {
      traces.push_back(ionsim::ramsey::scan_trace(dec, psi, 0, jj, 6.0, 1201,
                                                  ionsim::ramsey::TraceMethod::lehmann));
      distances.push_back(std::abs(geom.positions(jj) - geom.positions(0)));
    }

    ionsim::lr::FeatureOptions opts;
    opts.intercepts = {-0.0002};
    opts.absolute_intercepts = true;
    const auto feats = ionsim::lr::family_features(traces, opts);
    const auto row = ionsim::lr::fit_family(feats, distances);
    if (row.intercept_fits.empty() || row.intercept_fits[0].status != ionsim::lr::FitStatus::ok)
      return {false, strfmt("arrival-time fit failed at alpha %.2f", alphas[a])};
    gamma[a] = row.intercept_fits[0].gamma;
  }

  const bool ok = gamma[1] >= 1.5 && gamma[1] <= 2.3 && gamma[0] > gamma[1] && gamma[1] > gamma[2];
  return {ok, strfmt("gamma(0.90) = %.3f, gamma(1.00) = %.3f, gamma(1.12) = %.3f", gamma[0],
                     gamma[1], gamma[2])};
}

// ---------------------------------------------------------------------------
// 13. A full pipeline run is reproducible byte for byte.

CheckResult check_determinism() {
  const fs::path root = fs::temp_directory_path() /
                        ("ionsim_accept_" + std::to_string(::getpid()));
  ionsim::pipeline::RunConfig cfg;
  cfg.n = 4;
  cfg.omega_ax_khz = 700.0;
  cfg.b_targets = {0.94, 0.49};
  cfg.trace_t_max_ms = 1.5;
  cfg.trace_samples = 121;
  cfg.moment_sites = {0, 1, 3};
  cfg.cs_m = 12;
  cfg.cs_n_step = 48;
  cfg.gap_points = 5;
  cfg.seed = 7;
  cfg.outdir = (root / "run").string();

  ionsim::pipeline::Runner(cfg).run();
  const auto first = snapshot_tree(root / "run");
  fs::remove_all(root / "run");
  ionsim::pipeline::Runner(cfg).run();
  const auto second = snapshot_tree(root / "run");
  fs::remove_all(root);

  bool identical = first.size() == second.size();
  std::string mismatch = "none";
  if (identical) {
    for (const auto& [path, body] : first) {
      const auto it = second.find(path);
      if (it == second.end() || it->second != body) {
        identical = false;
        mismatch = path;
        break;
      }
    }
  } else {
    mismatch = "file count";
  }
  return {identical, strfmt("%zu files compared across wipe-and-rerun, first mismatch: %s",
                            first.size(), mismatch.c_str())};
}

}  // namespace

int main() {
  std::vector<Check> checks = {
      {"protocol measurement equals half the response function", 30.0, check_protocol_identity},
      {"direct, spectral, and echo routes agree", 60.0, check_three_routes},
      {"single spin matches the closed form", 0.0, check_single_spin},
      {"zero transverse field gives zero response", 0.0, check_zero_field_null},
      {"ramp integrator is fourth order and unitary", 0.0, check_integrator_order},
      {"moment sum rules and cross-route ratios hold", 0.0, check_moment_structure},
      {"cross-site response onsets cubically", 0.0, check_short_time_onset},
      {"trap couplings are ferromagnetic and tunable", 1.0, check_trap_couplings},
      {"coupled excitation gap bottoms out in the expected field window", 120.0,
       check_gap_location},
      {"sparse recovery is exact and matches vertex enumeration", 0.0, check_sparse_recovery},
      {"chain spectrum peaks are explained by spectral lines", 0.0, check_chain_spectrum},
      {"arrival-front exponent shrinks with interaction range", 0.0, check_lightcone_trend},
      {"pipeline reruns are byte-identical", 0.0, check_determinism},
  };

  int failures = 0;
  for (std::size_t k = 0; k < checks.size(); ++k) {
    const auto start = std::chrono::steady_clock::now();
    CheckResult result;
    try {
      result = checks[k].run();
    } catch (const std::exception& e) {
      result = {false, strfmt("exception: %s", e.what())};
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (result.pass && checks[k].limit_s > 0.0 && elapsed > checks[k].limit_s) {
      result.pass = false;
      result.detail += strfmt("; exceeded %.0fs budget", checks[k].limit_s);
    }
    if (!result.pass) ++failures;
    std::printf("[%2zu] %s  %s (%s; %.1fs)\n", k + 1, result.pass ? "PASS" : "FAIL",
                checks[k].name.c_str(), result.detail.c_str(), elapsed);
    std::fflush(stdout);
  }

  std::printf("%zu of %zu checks passed\n", checks.size() - failures, checks.size());
  return failures;
}
