#pragma once

// Frequency conventions.
//
// All user-facing frequencies (trap parameters, couplings, field strengths in
// configuration files and CSV output) are conventional frequencies in kHz.
// Dynamics code works with angular frequencies in rad/ms so that phases are
// plain products E*t with t in ms.  The conversion lives here and nowhere
// else: angular(f) = 2*pi*f maps kHz to rad/ms, and 1 kHz * 1 ms = 1 cycle.

namespace ionsim::units {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

constexpr double angular(double f_khz) { return kTwoPi * f_khz; }

constexpr double conventional(double w_rad_per_ms) { return w_rad_per_ms / kTwoPi; }

}  // namespace ionsim::units
