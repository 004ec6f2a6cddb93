#include "ionsim/lr_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace ionsim::lr {
namespace {

void check_trace(const ramsey::RamseyTrace& trace, int min_samples) {
  const auto n = trace.times.size();
  if (n != trace.values.size())
    throw std::invalid_argument("trace time and value grids differ in length");
  if (n < min_samples) throw std::invalid_argument("trace has too few samples");
  for (Eigen::Index k = 1; k < n; ++k)
    if (!(trace.times[k] > trace.times[k - 1]))
      throw std::invalid_argument("trace time grid must be strictly increasing");
}

// Vertex of the parabola through three samples around a grid extremum.
// Divided differences keep it valid on non-uniform grids; the vertex is
// clamped to the bracketing interval so a nearly flat triple cannot throw
// the refined time outside the data.
double parabolic_vertex(double t0, double v0, double t1, double v1, double t2, double v2) {
  const double d1 = (v1 - v0) / (t1 - t0);
  const double d2 = (v2 - v1) / (t2 - t1);
  const double curv = (d2 - d1) / (t2 - t0);
  if (curv == 0.0) return t1;
  const double vertex = 0.5 * (t0 + t1) - d1 / (2.0 * curv);
  return std::clamp(vertex, t0, t2);
}

}  // namespace

FeatureTimes detect_features(const ramsey::RamseyTrace& trace, double dead_band) {
  check_trace(trace, 5);
  if (!(dead_band >= 0.0)) throw std::invalid_argument("dead_band must be nonnegative");
  const auto& t = trace.times;
  const auto& v = trace.values;
  const auto n = t.size();

  FeatureTimes out;
  for (Eigen::Index k = 1; k + 1 < n; ++k) {
    if (!out.first_local_min && v[k] < v[k - 1] && v[k] < v[k + 1])
      out.first_local_min = parabolic_vertex(t[k - 1], v[k - 1], t[k], v[k], t[k + 1], v[k + 1]);
    if (!out.first_local_max && v[k] > v[k - 1] && v[k] > v[k + 1])
      out.first_local_max = parabolic_vertex(t[k - 1], v[k - 1], t[k], v[k], t[k + 1], v[k + 1]);
    if (out.first_local_min && out.first_local_max) break;
  }

  // The trace starts at zero, so the very first sign changes are dominated
  // by rounding noise. Only a crossing after the signal has visibly departed
  // from zero counts.
  Eigen::Index armed = -1;
  for (Eigen::Index k = 0; k < n; ++k) {
    if (std::abs(v[k]) > dead_band) {
      armed = k;
      break;
    }
  }
  if (armed >= 0) {
    for (Eigen::Index k = armed; k + 1 < n; ++k) {
      if (v[k + 1] == 0.0) {
        out.first_zero = t[k + 1];
        break;
      }
      if ((v[k] > 0.0) != (v[k + 1] > 0.0)) {
        out.first_zero = t[k] + (t[k + 1] - t[k]) * v[k] / (v[k] - v[k + 1]);
        break;
      }
    }
  }
  return out;
}

std::optional<double> intercept_time(const ramsey::RamseyTrace& trace, double c) {
  check_trace(trace, 2);
  if (c == 0.0) throw std::invalid_argument("intercept level must be nonzero");
  const auto& t = trace.times;
  const auto& v = trace.values;
  const auto n = t.size();
  const bool below = c < 0.0;  // negative level: first G(t) <= c
  for (Eigen::Index k = 0; k < n; ++k) {
    const bool reached = below ? v[k] <= c : v[k] >= c;
    if (!reached) continue;
    if (k == 0) return t[0];
    return t[k - 1] + (t[k] - t[k - 1]) * (c - v[k - 1]) / (v[k] - v[k - 1]);
  }
  return std::nullopt;
}

LrFit fit_power_law(const std::vector<double>& distances, const std::vector<double>& times) {
  if (distances.size() != times.size())
    throw std::invalid_argument("distance and time lists differ in length");
  std::vector<double> x, y;  // log time, log distance
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (!std::isfinite(times[k]) || !std::isfinite(distances[k])) continue;
    if (times[k] <= 0.0 || distances[k] <= 0.0) continue;
    x.push_back(std::log(times[k]));
    y.push_back(std::log(distances[k]));
  }

  LrFit fit;
  fit.points = static_cast<int>(x.size());
  if (fit.points < 4) return fit;

  const double n = static_cast<double>(fit.points);
  double mx = 0.0, my = 0.0;
  for (int k = 0; k < fit.points; ++k) {
    mx += x[k];
    my += y[k];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (int k = 0; k < fit.points; ++k) {
    sxx += (x[k] - mx) * (x[k] - mx);
    sxy += (x[k] - mx) * (y[k] - my);
  }
  if (sxx == 0.0) return fit;  // all feature times identical: exponent undefined

  fit.gamma = sxy / sxx;
  fit.prefactor = std::exp(my - fit.gamma * mx);
  double ss = 0.0;
  for (int k = 0; k < fit.points; ++k) {
    const double r = y[k] - (my + fit.gamma * (x[k] - mx));
    ss += r * r;
  }
  fit.residual = std::sqrt(ss / n);
  fit.status = fit.gamma > 0.0 ? FitStatus::ok : FitStatus::rejected_negative;
  return fit;
}

FamilyFeatures family_features(const std::vector<ramsey::RamseyTrace>& traces,
                               const FeatureOptions& opts) {
  FamilyFeatures out;
  double amplitude = 0.0;
  for (const auto& trace : traces) {
    check_trace(trace, 5);
    amplitude = std::max(amplitude, trace.values.cwiseAbs().maxCoeff());
  }
  for (double c : opts.intercepts)
    out.scaled_intercepts.push_back(opts.absolute_intercepts ? c : c * amplitude);

  out.per_site.reserve(traces.size());
  for (const auto& trace : traces) {
    FeatureTimes features = detect_features(trace, opts.dead_band);
    for (double c : out.scaled_intercepts) {
      // A fractional level collapses to zero when the whole family is flat;
      // the threshold is then never meaningfully reached.
      if (c == 0.0)
        features.intercepts.emplace_back(std::nullopt);
      else
        features.intercepts.push_back(intercept_time(trace, c));
    }
    out.per_site.push_back(std::move(features));
  }
  return out;
}

LrRow fit_family(const FamilyFeatures& features, const std::vector<double>& distances) {
  if (features.per_site.size() != distances.size())
    throw std::invalid_argument("one distance per trace is required");
  constexpr double absent = std::numeric_limits<double>::quiet_NaN();
  const auto pick = [&](auto&& get) {
    std::vector<double> times;
    times.reserve(features.per_site.size());
    for (const auto& site : features.per_site) {
      const std::optional<double> t = get(site);
      times.push_back(t ? *t : absent);
    }
    return fit_power_law(distances, times);
  };

  LrRow row;
  const std::size_t n_c = features.scaled_intercepts.size();
  for (std::size_t k = 0; k < n_c; ++k)
    row.intercept_fits.push_back(pick([&](const FeatureTimes& f) {
      return k < f.intercepts.size() ? f.intercepts[k] : std::nullopt;
    }));
  row.min_fit = pick([](const FeatureTimes& f) { return f.first_local_min; });
  row.max_fit = pick([](const FeatureTimes& f) { return f.first_local_max; });
  row.zero_fit = pick([](const FeatureTimes& f) { return f.first_zero; });
  return row;
}

}  // namespace ionsim::lr
