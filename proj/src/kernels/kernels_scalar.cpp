#include "kernels_detail.hpp"

#include <bit>
#include <cmath>

namespace ionsim::kernels::scalar {

void axpy(cplx a, const cplx* x, cplx* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void axpy_conj(cplx a, const cplx* x, cplx* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * std::conj(x[i]);
}

void scale(cplx a, cplx* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

cplx dotc(const cplx* x, const cplx* y, std::size_t n) {
  double re = 0.0, im = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const cplx t = std::conj(x[i]) * y[i];
    re += t.real();
    im += t.imag();
  }
  return {re, im};
}

double norm_sq(const cplx* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::norm(x[i]);
  return s;
}

void hadamard(const cplx* p, cplx* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= p[i];
}

void soft_threshold(cplx* x, double k, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double m = std::sqrt(std::norm(x[i]));
    x[i] = (m > k) ? x[i] * (1.0 - k / m) : cplx(0.0, 0.0);
  }
}

void oscillator_sum(cplx* phase, const cplx* step, const cplx* weight,
                    std::size_t np, cplx* out, std::size_t nt) {
  // Blocked over oscillators so the out[] accumulator stays cache resident.
  constexpr std::size_t kBlock = 8;
  for (std::size_t p0 = 0; p0 < np; p0 += kBlock) {
    const std::size_t p1 = (p0 + kBlock < np) ? p0 + kBlock : np;
    for (std::size_t t = 0; t < nt; ++t) {
      cplx acc(0.0, 0.0);
      for (std::size_t p = p0; p < p1; ++p) {
        acc += weight[p] * phase[p];
        phase[p] *= step[p];
      }
      out[t] += acc;
    }
  }
}

void flip_axpy(cplx c_even, cplx c_odd, std::uint64_t mask,
               const cplx* x, cplx* y, std::size_t n) {
  if (mask == 0) {
    axpy(c_even, x, y, n);
    return;
  }
  // Within a run of length lowbit(mask) the partner indices s^mask are
  // contiguous and popcount(s & mask) is constant.
  const std::size_t run = std::size_t(mask & (~mask + 1));
  for (std::size_t base = 0; base < n; base += run) {
    const cplx c = (std::popcount(std::uint64_t(base) & mask) & 1) ? c_odd : c_even;
    const cplx* xs = x + (base ^ mask);
    cplx* ys = y + base;
    for (std::size_t i = 0; i < run; ++i) ys[i] += c * xs[i];
  }
}

void masked_sign_axpy(cplx c, std::uint64_t mask,
                      const cplx* x, cplx* y, std::size_t n) {
  if (mask == 0) {
    axpy(c, x, y, n);
    return;
  }
  const std::size_t run = std::size_t(mask & (~mask + 1));
  for (std::size_t base = 0; base < n; base += run) {
    const cplx cs = (std::popcount(std::uint64_t(base) & mask) & 1) ? -c : c;
    const cplx* xs = x + base;
    cplx* ys = y + base;
    for (std::size_t i = 0; i < run; ++i) ys[i] += cs * xs[i];
  }
}

}  // namespace ionsim::kernels::scalar
