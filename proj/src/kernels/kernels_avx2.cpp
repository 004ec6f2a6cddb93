#include "kernels_detail.hpp"

#if defined(IONSIM_HAVE_AVX2_TU)

#include <immintrin.h>

#include <bit>
#include <cmath>

// AVX2+FMA variants. One __m256d holds two complex<double> values laid out
// [re0 im0 re1 im1]. This translation unit is compiled with -mavx2 -mfma and
// is only entered through the dispatch table after a CPU check.

namespace ionsim::kernels::avx2 {

namespace {

// (a0*b0, a1*b1) complex products per 128-bit lane.
inline __m256d cmul(__m256d a, __m256d b) {
  const __m256d are = _mm256_movedup_pd(a);
  const __m256d aim = _mm256_permute_pd(a, 0xF);
  const __m256d bsw = _mm256_permute_pd(b, 0x5);
  return _mm256_fmaddsub_pd(are, b, _mm256_mul_pd(aim, bsw));
}

// (conj(a0)*b0, conj(a1)*b1)
inline __m256d cmul_conj(__m256d a, __m256d b) {
  const __m256d are = _mm256_movedup_pd(a);
  const __m256d aim = _mm256_permute_pd(a, 0xF);
  const __m256d bsw = _mm256_permute_pd(b, 0x5);
  return _mm256_fmsubadd_pd(are, b, _mm256_mul_pd(aim, bsw));
}

inline __m256d broadcast(cplx a) {
  return _mm256_setr_pd(a.real(), a.imag(), a.real(), a.imag());
}

inline cplx reduce_lanes(__m256d v) {
  // (lane0 + lane1) as one complex number
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  alignas(16) double buf[2];
  _mm_store_pd(buf, s);
  return {buf[0], buf[1]};
}

}  // namespace

void axpy(cplx a, const cplx* x, cplx* y, std::size_t n) {
  const __m256d av = broadcast(a);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const __m256d xv = _mm256_loadu_pd(reinterpret_cast<const double*>(x + i));
    __m256d yv = _mm256_loadu_pd(reinterpret_cast<double*>(y + i));
    yv = _mm256_add_pd(yv, cmul(av, xv));
    _mm256_storeu_pd(reinterpret_cast<double*>(y + i), yv);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void axpy_conj(cplx a, const cplx* x, cplx* y, std::size_t n) {
  const __m256d av = broadcast(a);
  const __m256d conj_mask = _mm256_setr_pd(0.0, -0.0, 0.0, -0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    __m256d xv = _mm256_loadu_pd(reinterpret_cast<const double*>(x + i));
    xv = _mm256_xor_pd(xv, conj_mask);
    __m256d yv = _mm256_loadu_pd(reinterpret_cast<double*>(y + i));
    yv = _mm256_add_pd(yv, cmul(av, xv));
    _mm256_storeu_pd(reinterpret_cast<double*>(y + i), yv);
  }
  for (; i < n; ++i) y[i] += a * std::conj(x[i]);
}

void scale(cplx a, cplx* x, std::size_t n) {
  const __m256d av = broadcast(a);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const __m256d xv = _mm256_loadu_pd(reinterpret_cast<const double*>(x + i));
    _mm256_storeu_pd(reinterpret_cast<double*>(x + i), cmul(av, xv));
  }
  for (; i < n; ++i) x[i] *= a;
}

cplx dotc(const cplx* x, const cplx* y, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const __m256d xv = _mm256_loadu_pd(reinterpret_cast<const double*>(x + i));
    const __m256d yv = _mm256_loadu_pd(reinterpret_cast<const double*>(y + i));
    acc = _mm256_add_pd(acc, cmul_conj(xv, yv));
  }
  cplx r = reduce_lanes(acc);
  for (; i < n; ++i) r += std::conj(x[i]) * y[i];
  return r;
}

double norm_sq(const cplx* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const __m256d xv = _mm256_loadu_pd(reinterpret_cast<const double*>(x + i));
    acc = _mm256_fmadd_pd(xv, xv, acc);
  }
  alignas(32) double buf[4];
  _mm256_store_pd(buf, acc);
  double s = buf[0] + buf[1] + buf[2] + buf[3];
  for (; i < n; ++i) s += std::norm(x[i]);
  return s;
}

void hadamard(const cplx* p, cplx* x, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const __m256d pv = _mm256_loadu_pd(reinterpret_cast<const double*>(p + i));
    const __m256d xv = _mm256_loadu_pd(reinterpret_cast<const double*>(x + i));
    _mm256_storeu_pd(reinterpret_cast<double*>(x + i), cmul(pv, xv));
  }
  for (; i < n; ++i) x[i] *= p[i];
}

void soft_threshold(cplx* x, double k, std::size_t n) {
  const __m256d kv = _mm256_set1_pd(k);
  const __m256d one = _mm256_set1_pd(1.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const __m256d xv = _mm256_loadu_pd(reinterpret_cast<const double*>(x + i));
    const __m256d sq = _mm256_mul_pd(xv, xv);
    const __m256d mag2 = _mm256_hadd_pd(sq, sq);  // [m0 m0 m1 m1]
    const __m256d mag = _mm256_sqrt_pd(mag2);
    const __m256d keep = _mm256_cmp_pd(mag, kv, _CMP_GT_OQ);
    const __m256d f = _mm256_sub_pd(one, _mm256_div_pd(kv, mag));
    const __m256d fv = _mm256_and_pd(keep, f);
    _mm256_storeu_pd(reinterpret_cast<double*>(x + i), _mm256_mul_pd(xv, fv));
  }
  for (; i < n; ++i) {
    const double m = std::sqrt(std::norm(x[i]));
    x[i] = (m > k) ? x[i] * (1.0 - k / m) : cplx(0.0, 0.0);
  }
}

void oscillator_sum(cplx* phase, const cplx* step, const cplx* weight,
                    std::size_t np, cplx* out, std::size_t nt) {
  std::size_t p = 0;
  for (; p + 4 <= np; p += 4) {
    __m256d ph0 = _mm256_loadu_pd(reinterpret_cast<double*>(phase + p));
    __m256d ph1 = _mm256_loadu_pd(reinterpret_cast<double*>(phase + p + 2));
    const __m256d st0 = _mm256_loadu_pd(reinterpret_cast<const double*>(step + p));
    const __m256d st1 = _mm256_loadu_pd(reinterpret_cast<const double*>(step + p + 2));
    const __m256d w0 = _mm256_loadu_pd(reinterpret_cast<const double*>(weight + p));
    const __m256d w1 = _mm256_loadu_pd(reinterpret_cast<const double*>(weight + p + 2));
    for (std::size_t t = 0; t < nt; ++t) {
      const __m256d acc = _mm256_add_pd(cmul(w0, ph0), cmul(w1, ph1));
      out[t] += reduce_lanes(acc);
      ph0 = cmul(ph0, st0);
      ph1 = cmul(ph1, st1);
    }
    _mm256_storeu_pd(reinterpret_cast<double*>(phase + p), ph0);
    _mm256_storeu_pd(reinterpret_cast<double*>(phase + p + 2), ph1);
  }
  if (p < np) scalar::oscillator_sum(phase + p, step + p, weight + p, np - p, out, nt);
}

void flip_axpy(cplx c_even, cplx c_odd, std::uint64_t mask,
               const cplx* x, cplx* y, std::size_t n) {
  if (mask == 0) {
    axpy(c_even, x, y, n);
    return;
  }
  const std::size_t run = std::size_t(mask & (~mask + 1));
  if (run < 2) {
    scalar::flip_axpy(c_even, c_odd, mask, x, y, n);
    return;
  }
  const __m256d ce = broadcast(c_even);
  const __m256d co = broadcast(c_odd);
  for (std::size_t base = 0; base < n; base += run) {
    const __m256d cv = (std::popcount(std::uint64_t(base) & mask) & 1) ? co : ce;
    const cplx* xs = x + (base ^ std::size_t(mask));
    cplx* ys = y + base;
    for (std::size_t i = 0; i < run; i += 2) {
      const __m256d xv = _mm256_loadu_pd(reinterpret_cast<const double*>(xs + i));
      __m256d yv = _mm256_loadu_pd(reinterpret_cast<double*>(ys + i));
      yv = _mm256_add_pd(yv, cmul(cv, xv));
      _mm256_storeu_pd(reinterpret_cast<double*>(ys + i), yv);
    }
  }
}

void masked_sign_axpy(cplx c, std::uint64_t mask,
                      const cplx* x, cplx* y, std::size_t n) {
  if (mask == 0) {
    axpy(c, x, y, n);
    return;
  }
  const std::size_t run = std::size_t(mask & (~mask + 1));
  if (run < 2) {
    scalar::masked_sign_axpy(c, mask, x, y, n);
    return;
  }
  const __m256d cp = broadcast(c);
  const __m256d cm = broadcast(-c);
  for (std::size_t base = 0; base < n; base += run) {
    const __m256d cv = (std::popcount(std::uint64_t(base) & mask) & 1) ? cm : cp;
    const cplx* xs = x + base;
    cplx* ys = y + base;
    for (std::size_t i = 0; i < run; i += 2) {
      const __m256d xv = _mm256_loadu_pd(reinterpret_cast<const double*>(xs + i));
      __m256d yv = _mm256_loadu_pd(reinterpret_cast<double*>(ys + i));
      yv = _mm256_add_pd(yv, cmul(cv, xv));
      _mm256_storeu_pd(reinterpret_cast<double*>(ys + i), yv);
    }
  }
}

}  // namespace ionsim::kernels::avx2

#endif  // IONSIM_HAVE_AVX2_TU
