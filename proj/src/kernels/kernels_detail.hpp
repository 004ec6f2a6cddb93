#pragma once

#include "ionsim/kernels/kernels.hpp"

// Internal: per-backend entry points. The public API in kernels.hpp routes
// through a dispatch table; tests may call these directly for equivalence
// checks via force_backend().

namespace ionsim::kernels::scalar {
void axpy(cplx a, const cplx* x, cplx* y, std::size_t n);
void axpy_conj(cplx a, const cplx* x, cplx* y, std::size_t n);
void scale(cplx a, cplx* x, std::size_t n);
cplx dotc(const cplx* x, const cplx* y, std::size_t n);
double norm_sq(const cplx* x, std::size_t n);
void hadamard(const cplx* p, cplx* x, std::size_t n);
void soft_threshold(cplx* x, double k, std::size_t n);
void oscillator_sum(cplx* phase, const cplx* step, const cplx* weight,
                    std::size_t np, cplx* out, std::size_t nt);
void flip_axpy(cplx c_even, cplx c_odd, std::uint64_t mask,
               const cplx* x, cplx* y, std::size_t n);
void masked_sign_axpy(cplx c, std::uint64_t mask,
                      const cplx* x, cplx* y, std::size_t n);
}  // namespace ionsim::kernels::scalar

#if defined(__x86_64__) || defined(__i386__)
#define IONSIM_HAVE_AVX2_TU 1
namespace ionsim::kernels::avx2 {
void axpy(cplx a, const cplx* x, cplx* y, std::size_t n);
void axpy_conj(cplx a, const cplx* x, cplx* y, std::size_t n);
void scale(cplx a, cplx* x, std::size_t n);
cplx dotc(const cplx* x, const cplx* y, std::size_t n);
double norm_sq(const cplx* x, std::size_t n);
void hadamard(const cplx* p, cplx* x, std::size_t n);
void soft_threshold(cplx* x, double k, std::size_t n);
void oscillator_sum(cplx* phase, const cplx* step, const cplx* weight,
                    std::size_t np, cplx* out, std::size_t nt);
void flip_axpy(cplx c_even, cplx c_odd, std::uint64_t mask,
               const cplx* x, cplx* y, std::size_t n);
void masked_sign_axpy(cplx c, std::uint64_t mask,
                      const cplx* x, cplx* y, std::size_t n);
}  // namespace ionsim::kernels::avx2
#endif
