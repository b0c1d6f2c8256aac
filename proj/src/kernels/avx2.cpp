// Compiled with -mavx2 (and without -mfma); only reached after a CPUID check.
#include "kernels_internal.hpp"

#if defined(__AVX2__)

#include <immintrin.h>

#include <cmath>

namespace activelex::kernels {

namespace {

inline double fold(__m256d a0, __m256d a1, __m256d a2, __m256d a3) {
  const __m256d v = _mm256_add_pd(_mm256_add_pd(a0, a1), _mm256_add_pd(a2, a3));
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d pair = _mm_add_pd(lo, hi);  // [l0 + l2, l1 + l3]
  return _mm_cvtsd_f64(pair) + _mm_cvtsd_f64(_mm_unpackhi_pd(pair, pair));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d s0 = _mm256_setzero_pd(), s1 = s0, s2 = s0, s3 = s0;
  std::size_t i = 0;
  for (; i + kStripes <= n; i += kStripes) {
    s0 = _mm256_add_pd(s0, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    s1 = _mm256_add_pd(s1, _mm256_mul_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4)));
    s2 = _mm256_add_pd(s2, _mm256_mul_pd(_mm256_loadu_pd(a + i + 8), _mm256_loadu_pd(b + i + 8)));
    s3 = _mm256_add_pd(s3, _mm256_mul_pd(_mm256_loadu_pd(a + i + 12), _mm256_loadu_pd(b + i + 12)));
  }
  double r = fold(s0, s1, s2, s3);
  for (; i < n; ++i) r += a[i] * b[i];
  return r;
}

double sum_squares_avx2(const double* a, std::size_t n) { return dot_avx2(a, a, n); }

double max_abs_avx2(const double* a, std::size_t n) {
  const __m256d sign = _mm256_set1_pd(-0.0);
  __m256d m = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) m = _mm256_max_pd(m, _mm256_andnot_pd(sign, _mm256_loadu_pd(a + i)));
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, m);
  double r = 0.0;
  for (double v : lanes)
    if (v > r) r = v;
  for (; i < n; ++i) {
    const double v = std::fabs(a[i]);
    if (v > r) r = v;
  }
  return r;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), _mm256_mul_pd(va, _mm256_loadu_pd(x + i))));
    _mm256_storeu_pd(y + i + 4,
                     _mm256_add_pd(_mm256_loadu_pd(y + i + 4), _mm256_mul_pd(va, _mm256_loadu_pd(x + i + 4))));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale_avx2(double alpha, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(y + i, _mm256_mul_pd(_mm256_loadu_pd(y + i), va));
  for (; i < n; ++i) y[i] *= alpha;
}

inline __m256d gather4(const double* dense, const std::uint32_t* idx) {
  const __m128i vi = _mm_loadu_si128(reinterpret_cast<const __m128i*>(idx));
  return _mm256_i32gather_pd(dense, vi, 8);
}

double sparse_dot_avx2(const std::uint32_t* indices, const double* values, std::size_t nnz, const double* dense) {
  __m256d s0 = _mm256_setzero_pd(), s1 = s0, s2 = s0, s3 = s0;
  std::size_t i = 0;
  for (; i + kStripes <= nnz; i += kStripes) {
    s0 = _mm256_add_pd(s0, _mm256_mul_pd(_mm256_loadu_pd(values + i), gather4(dense, indices + i)));
    s1 = _mm256_add_pd(s1, _mm256_mul_pd(_mm256_loadu_pd(values + i + 4), gather4(dense, indices + i + 4)));
    s2 = _mm256_add_pd(s2, _mm256_mul_pd(_mm256_loadu_pd(values + i + 8), gather4(dense, indices + i + 8)));
    s3 = _mm256_add_pd(s3, _mm256_mul_pd(_mm256_loadu_pd(values + i + 12), gather4(dense, indices + i + 12)));
  }
  double r = fold(s0, s1, s2, s3);
  for (; i < nnz; ++i) r += values[i] * dense[indices[i]];
  return r;
}

}  // namespace

const KernelTable* avx2_table_compiled() {
  static const KernelTable table{Isa::avx2, dot_avx2,   sum_squares_avx2, max_abs_avx2,
                                 axpy_avx2, scale_avx2, sparse_dot_avx2};
  return &table;
}

}  // namespace activelex::kernels

#else

namespace activelex::kernels {
const KernelTable* avx2_table_compiled() { return nullptr; }
}  // namespace activelex::kernels

#endif
