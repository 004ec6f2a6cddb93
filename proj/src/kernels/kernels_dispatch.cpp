#include "kernels_detail.hpp"

#include <stdexcept>

namespace ionsim::kernels {

namespace {

struct Table {
  void (*axpy)(cplx, const cplx*, cplx*, std::size_t);
  void (*axpy_conj)(cplx, const cplx*, cplx*, std::size_t);
  void (*scale)(cplx, cplx*, std::size_t);
  cplx (*dotc)(const cplx*, const cplx*, std::size_t);
  double (*norm_sq)(const cplx*, std::size_t);
  void (*hadamard)(const cplx*, cplx*, std::size_t);
  void (*soft_threshold)(cplx*, double, std::size_t);
  void (*oscillator_sum)(cplx*, const cplx*, const cplx*, std::size_t, cplx*, std::size_t);
  void (*flip_axpy)(cplx, cplx, std::uint64_t, const cplx*, cplx*, std::size_t);
  void (*masked_sign_axpy)(cplx, std::uint64_t, const cplx*, cplx*, std::size_t);
  Backend which;
};

constexpr Table kScalarTable = {
    scalar::axpy,          scalar::axpy_conj,      scalar::scale,
    scalar::dotc,          scalar::norm_sq,        scalar::hadamard,
    scalar::soft_threshold, scalar::oscillator_sum, scalar::flip_axpy,
    scalar::masked_sign_axpy, Backend::scalar};

#if defined(IONSIM_HAVE_AVX2_TU)
constexpr Table kAvx2Table = {
    avx2::axpy,          avx2::axpy_conj,      avx2::scale,
    avx2::dotc,          avx2::norm_sq,        avx2::hadamard,
    avx2::soft_threshold, avx2::oscillator_sum, avx2::flip_axpy,
    avx2::masked_sign_axpy, Backend::avx2};
#endif

bool cpu_has_avx2() {
#if defined(IONSIM_HAVE_AVX2_TU)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const Table* detect() {
#if defined(IONSIM_HAVE_AVX2_TU)
  if (cpu_has_avx2()) return &kAvx2Table;
#endif
  return &kScalarTable;
}

const Table*& table() {
  static const Table* t = detect();
  return t;
}

}  // namespace

Backend active_backend() { return table()->which; }

bool backend_available(Backend b) {
  if (b == Backend::scalar) return true;
  return cpu_has_avx2();
}

void force_backend(Backend b) {
  if (!backend_available(b)) throw std::runtime_error("kernel backend not available on this CPU");
  if (b == Backend::scalar) {
    table() = &kScalarTable;
    return;
  }
#if defined(IONSIM_HAVE_AVX2_TU)
  table() = &kAvx2Table;
#endif
}

void reset_backend() { table() = detect(); }

void axpy(cplx a, const cplx* x, cplx* y, std::size_t n) { table()->axpy(a, x, y, n); }
void axpy_conj(cplx a, const cplx* x, cplx* y, std::size_t n) { table()->axpy_conj(a, x, y, n); }
void scale(cplx a, cplx* x, std::size_t n) { table()->scale(a, x, n); }
cplx dotc(const cplx* x, const cplx* y, std::size_t n) { return table()->dotc(x, y, n); }
double norm_sq(const cplx* x, std::size_t n) { return table()->norm_sq(x, n); }
void hadamard(const cplx* p, cplx* x, std::size_t n) { table()->hadamard(p, x, n); }
void soft_threshold(cplx* x, double k, std::size_t n) { table()->soft_threshold(x, k, n); }
void oscillator_sum(cplx* phase, const cplx* step, const cplx* weight,
                    std::size_t np, cplx* out, std::size_t nt) {
  table()->oscillator_sum(phase, step, weight, np, out, nt);
}
void flip_axpy(cplx c_even, cplx c_odd, std::uint64_t mask,
               const cplx* x, cplx* y, std::size_t n) {
  table()->flip_axpy(c_even, c_odd, mask, x, y, n);
}
void masked_sign_axpy(cplx c, std::uint64_t mask, const cplx* x, cplx* y, std::size_t n) {
  table()->masked_sign_axpy(c, mask, x, y, n);
}

}  // namespace ionsim::kernels
