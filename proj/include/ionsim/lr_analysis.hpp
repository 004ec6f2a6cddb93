#pragma once

#include <optional>
#include <vector>

#include "ionsim/ramsey.hpp"

// Feature extraction and power-law fits for signal arrival times.
//
// A response trace G_{0j}(t) carries a causal front: the time at which the
// signal at site j first becomes "visible" grows with the distance from the
// source site.  Visibility is operationalised three ways, following common
// practice for long-range interacting chains:
//   * the first local extremum of the trace (minimum and maximum tracked
//     separately),
//   * the first zero crossing after the trace has left a dead band around
//     zero (a bare crossing at t ~ 0 would just be noise),
//   * the first time the trace reaches a small threshold value c (an
//     "intercept"; c < 0 probes the leading negative lobe).
// Plotting feature time against distance and fitting t ~ d^(1/gamma), or
// equivalently d ~ t^gamma, gives the front exponent gamma reported here.
namespace ionsim::lr {

// Feature times for a single trace, in the trace's own time units.  A
// feature that never occurs inside the sampled window is absent; absence is
// data (the front has not arrived), not an error.
struct FeatureTimes {
  std::optional<double> first_local_min;
  std::optional<double> first_local_max;
  std::optional<double> first_zero;
  // Aligned with the intercept list the caller supplied (see
  // family_features); empty when features came from detect_features alone.
  std::vector<std::optional<double>> intercepts;
};

// Locates the first strict local minimum and maximum of the sampled trace
// and the first zero crossing. Extrema are grid extrema refined by fitting a
// parabola through the three surrounding samples. The zero crossing is the
// first sign change occurring after |G| has exceeded dead_band, located by
// linear interpolation between the bracketing samples.
//
// Requires at least five samples and a strictly increasing time grid.
FeatureTimes detect_features(const ramsey::RamseyTrace& trace, double dead_band = 1e-5);

// First time the trace reaches the level c: the first t with G(t) <= c when
// c < 0, or G(t) >= c when c > 0, linearly interpolated between samples.
// c must be nonzero (a zero threshold is the zero-crossing feature, which
// needs the dead-band logic above). Absent if the level is never reached.
std::optional<double> intercept_time(const ramsey::RamseyTrace& trace, double c);

enum class FitStatus {
  ok,                 // >= 4 usable points and gamma > 0
  insufficient,       // fewer than 4 usable points
  rejected_negative,  // fit produced gamma <= 0; value kept for diagnostics
};

// Least-squares fit of log(distance) against log(time): d = a * t^gamma.
struct LrFit {
  double gamma = 0.0;
  double prefactor = 0.0;  // a, in distance units
  double residual = 0.0;   // rms residual of the fit in log space
  int points = 0;          // pairs that entered the fit
  FitStatus status = FitStatus::insufficient;
};

// Fits d ~ t^gamma through the (distance, time) pairs. The two vectors must
// have equal length; pairs where either entry is nonpositive or nonfinite
// are dropped (a feature absent at some site simply contributes no point;
// encode absence as NaN). Fewer than four surviving points gives status
// insufficient; a nonpositive exponent gives rejected_negative.
LrFit fit_power_law(const std::vector<double>& distances, const std::vector<double>& times);

struct FeatureOptions {
  // Threshold levels for the intercept feature. By default each c is a
  // fraction of the family's global amplitude max_j max_t |G_j(t)|, so the
  // same option set is meaningful across parameter regimes; set
  // absolute_intercepts to interpret them as raw trace values instead.
  std::vector<double> intercepts{-0.0002, -0.0005, -0.001, -0.0015, -0.002};
  bool absolute_intercepts = false;
  double dead_band = 1e-5;
};

// Features for a family of traces (one source site probed at several target
// sites under identical dynamics).
struct FamilyFeatures {
  std::vector<FeatureTimes> per_site;      // aligned with the input traces
  std::vector<double> scaled_intercepts;   // the c values actually applied
};

FamilyFeatures family_features(const std::vector<ramsey::RamseyTrace>& traces,
                               const FeatureOptions& opts = {});

// One table row: a power-law fit per feature, intercept columns first in the
// order of FeatureOptions::intercepts, then first minimum, first maximum,
// first zero.
struct LrRow {
  std::vector<LrFit> intercept_fits;
  LrFit min_fit;
  LrFit max_fit;
  LrFit zero_fit;
};

// Fits every feature of a trace family against the site distances
// (distances[k] belongs to traces[k]; typically |R_0 - R_j| from the chain
// geometry). Sites where a feature is absent drop out of that feature's fit.
LrRow fit_family(const FamilyFeatures& features, const std::vector<double>& distances);

}  // namespace ionsim::lr
