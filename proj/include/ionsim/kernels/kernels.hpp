#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>

// Hot-loop kernels over complex<double> arrays.
//
// Every operation has a scalar reference implementation and, on x86 with
// AVX2+FMA, a vectorized variant.  The backend is picked once at startup by
// CPU detection; tests pin it explicitly and check the variants against each
// other.  Higher-level code (state propagation, basis pursuit, oscillator
// traces) calls these entry points and never touches intrinsics.

namespace ionsim::kernels {

using cplx = std::complex<double>;

enum class Backend { scalar, avx2 };

// Backend currently used by the dispatch table.
Backend active_backend();

// True if the requested backend can run on this machine.
bool backend_available(Backend b);

// Pin the dispatch table to one backend (tests). Throws std::runtime_error
// if the backend is not available.
void force_backend(Backend b);

// Reset to the detected default.
void reset_backend();

// y += a * x
void axpy(cplx a, const cplx* x, cplx* y, std::size_t n);

// y += a * conj(x)
void axpy_conj(cplx a, const cplx* x, cplx* y, std::size_t n);

// x *= a
void scale(cplx a, cplx* x, std::size_t n);

// sum_i conj(x_i) * y_i
cplx dotc(const cplx* x, const cplx* y, std::size_t n);

// sum_i |x_i|^2
double norm_sq(const cplx* x, std::size_t n);

// x_i *= p_i  (elementwise product, e.g. applying phase factors)
void hadamard(const cplx* p, cplx* x, std::size_t n);

// Complex soft threshold: x_i <- x_i * max(1 - k/|x_i|, 0), k >= 0.
void soft_threshold(cplx* x, double k, std::size_t n);

// Oscillator bank accumulation over a uniform time grid.
// For t = 0..nt-1:  out[t] += sum_p weight[p] * phase[p],  then phase[p] *= step[p].
// phase[] is updated in place so the bank can be resumed.
void oscillator_sum(cplx* phase, const cplx* step, const cplx* weight,
                    std::size_t np, cplx* out, std::size_t nt);

// Bit-flip coupled accumulation (core of the spin-chain H*psi apply):
//   y[s] += c(s) * x[s ^ mask],   c(s) = popcount(s & mask) odd ? c_odd : c_even
// n must be a power of two and mask < n.
void flip_axpy(cplx c_even, cplx c_odd, std::uint64_t mask,
               const cplx* x, cplx* y, std::size_t n);

// Diagonal signed accumulation:
//   y[s] += c * (popcount(s & mask) odd ? -1 : +1) * x[s]
// n must be a power of two and mask < n.
void masked_sign_axpy(cplx c, std::uint64_t mask,
                      const cplx* x, cplx* y, std::size_t n);

}  // namespace ionsim::kernels
