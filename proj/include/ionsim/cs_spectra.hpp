#pragma once

#include "ionsim/ramsey.hpp"

#include <Eigen/Dense>

#include <complex>
#include <vector>

// Sparse-spectrum recovery from few time samples. The sensing chain is
// A * Finv, with Finv the first M rows of the scaled inverse DFT on an
// N_step-point frequency grid and A a seeded random orthogonal measurement
// matrix. Basis pursuit (minimize the summed moduli subject to the sensing
// equality) is solved by an operator-splitting iteration that alternates
// projection onto the affine constraint with complex soft-thresholding.
// Recovered peaks are compared against the exact spectral lines of the
// eigen-decomposition, folded onto the finite grid.

namespace ionsim::cs {

using cplx = std::complex<double>;

struct CsProblem {
  int m = 64;                 // time samples
  int n_step = 1024;          // frequency bins
  double dt = 0.0;            // ms between samples (= T / M)
  unsigned seed = 0;
  Eigen::MatrixXd a;          // M x M random orthogonal
  Eigen::MatrixXcd finv;      // M x N_step, (1/N_step) e^{-i w_n t_m}
  Eigen::VectorXd omega;      // w_n = 2 pi n / (N_step dt), rad/ms
  Eigen::VectorXd times;      // t_m = m dt

  double bin_width() const { return omega(1) - omega(0); }
  double period() const { return n_step * bin_width(); }
};

// A is drawn i.i.d. standard normal from the seed, then column-orthonormalized
// with deterministic sign fixing.
CsProblem build_problem(int m, int n_step, double t_total, unsigned seed);

struct SolverOptions {
  double rho = 1.0;          // splitting penalty (soft threshold = 1/rho)
  double relax = 1.8;        // over-relaxation
  double eps_feas = 1e-8;    // equality-constraint tolerance on the result
  double tol_change = 1e-9;  // relative splitting-gap / iterate-change target
  int max_iter = 50000;
};

struct Spectrum {
  Eigen::VectorXd omega;
  Eigen::VectorXcd amplitude;
  int iterations = 0;
  double residual = 0.0;  // ||phi x - b||_2 of the returned iterate
  double l1 = 0.0;        // sum of moduli
};

// Generic-core splitting solver: min sum |x_n| s.t. phi x = b. Requires phi
// with full row rank. The returned iterate is always feasible; reaching the
// iteration cap returns it with iterations == max_iter (the L1 value may not
// be fully settled when lines crowd below the sampling resolution). Throws a
// runtime error carrying the residual only if feasibility itself fails.
Spectrum basis_pursuit_matrix(const Eigen::MatrixXcd& phi, const Eigen::VectorXcd& b,
                              const SolverOptions& opts = {});

// Convenience wrapper: phi = a * finv, b = a * samples, grid from the problem.
Spectrum basis_pursuit(const CsProblem& prob, const Eigen::VectorXd& samples,
                       const SolverOptions& opts = {});

struct Peak {
  int bin = 0;
  double freq = 0.0;       // grid frequency in [0, period)
  double magnitude = 0.0;  // |amplitude|
  bool unresolved = false; // merged with an adjacent-bin candidate
};

// Local maxima of |amplitude| above threshold_fraction * max, candidates
// within one bin merged (largest kept, flagged unresolved).
std::vector<Peak> extract_peaks(const Spectrum& s, double threshold_fraction);

// Signed spectral lines of G(t) = -i z(t) + i conj(z(t)): each z-line
// (f, w) emits (+f, -i w) and (-f, +i conj w); lines sharing a frequency
// within 1e-9 are combined and negligible weights dropped.
struct LehmannPeaks {
  std::vector<double> freq;   // signed, rad/ms
  std::vector<cplx> weight;
  std::size_t size() const { return freq.size(); }
};

LehmannPeaks lehmann_reference(const ramsey::LehmannTerms& terms);

// Reduce a signed frequency onto the grid's principal window [0, period).
double fold_frequency(double freq, double period);

struct MatchedLine {
  double ref_freq = 0.0;     // signed reference frequency
  double folded_freq = 0.0;  // its grid alias
  double rec_freq = 0.0;     // matched recovered peak
  double distance = 0.0;     // circular distance, rad/ms
  double ref_magnitude = 0.0;
  double rec_magnitude = 0.0;
};

struct MatchReport {
  std::vector<MatchedLine> matched;
  std::vector<std::pair<double, double>> unmatched_reference;  // (freq, |weight|)
  std::vector<Peak> spurious;                                  // unexplained peaks
};

// Matching between recovered peaks and folded reference lines: references in
// descending weight order greedily claim the nearest free peak within one bin
// (circular distance), so clustered weak lines cannot shadow strong ones.
MatchReport match_peaks(const std::vector<Peak>& recovered, const LehmannPeaks& reference,
                        double bin_width, double period);

}  // namespace ionsim::cs
