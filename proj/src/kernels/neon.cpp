// AArch64 variant. Each 4-lane accumulator of the reference tree is held as a
// pair of float64x2 registers (lo = lanes 0-1, hi = lanes 2-3).
#include "kernels_internal.hpp"

#if defined(__aarch64__) && defined(__ARM_NEON)

#include <arm_neon.h>

#include <cmath>

namespace activelex::kernels {

namespace {

struct Acc4 {
  float64x2_t lo = vdupq_n_f64(0.0);
  float64x2_t hi = vdupq_n_f64(0.0);
};

inline double fold(const Acc4& a0, const Acc4& a1, const Acc4& a2, const Acc4& a3) {
  const float64x2_t lo = vaddq_f64(vaddq_f64(a0.lo, a1.lo), vaddq_f64(a2.lo, a3.lo));  // lanes 0,1
  const float64x2_t hi = vaddq_f64(vaddq_f64(a0.hi, a1.hi), vaddq_f64(a2.hi, a3.hi));  // lanes 2,3
  const float64x2_t pair = vaddq_f64(lo, hi);                                          // [l0+l2, l1+l3]
  return vgetq_lane_f64(pair, 0) + vgetq_lane_f64(pair, 1);
}

inline void step(Acc4& acc, const double* a, const double* b) {
  acc.lo = vaddq_f64(acc.lo, vmulq_f64(vld1q_f64(a), vld1q_f64(b)));
  acc.hi = vaddq_f64(acc.hi, vmulq_f64(vld1q_f64(a + 2), vld1q_f64(b + 2)));
}

double dot_neon(const double* a, const double* b, std::size_t n) {
  Acc4 s0, s1, s2, s3;
  std::size_t i = 0;
  for (; i + kStripes <= n; i += kStripes) {
    step(s0, a + i, b + i);
    step(s1, a + i + 4, b + i + 4);
    step(s2, a + i + 8, b + i + 8);
    step(s3, a + i + 12, b + i + 12);
  }
  double r = fold(s0, s1, s2, s3);
  for (; i < n; ++i) r += a[i] * b[i];
  return r;
}

double sum_squares_neon(const double* a, std::size_t n) { return dot_neon(a, a, n); }

double max_abs_neon(const double* a, std::size_t n) {
  float64x2_t m = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) m = vmaxq_f64(m, vabsq_f64(vld1q_f64(a + i)));
  double r = vmaxvq_f64(m);
  for (; i < n; ++i) {
    const double v = std::fabs(a[i]);
    if (v > r) r = v;
  }
  return r;
}

void axpy_neon(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), vmulq_f64(va, vld1q_f64(x + i))));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale_neon(double alpha, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vmulq_f64(vld1q_f64(y + i), va));
  for (; i < n; ++i) y[i] *= alpha;
}

double sparse_dot_neon(const std::uint32_t* indices, const double* values, std::size_t nnz, const double* dense) {
  Acc4 s[4];
  std::size_t i = 0;
  for (; i + kStripes <= nnz; i += kStripes) {
    for (int q = 0; q < 4; ++q) {
      const std::size_t base = i + 4 * static_cast<std::size_t>(q);
      const double g[4] = {dense[indices[base]], dense[indices[base + 1]], dense[indices[base + 2]],
                           dense[indices[base + 3]]};
      step(s[q], values + base, g);
    }
  }
  double r = fold(s[0], s[1], s[2], s[3]);
  for (; i < nnz; ++i) r += values[i] * dense[indices[i]];
  return r;
}

}  // namespace

const KernelTable* neon_table_compiled() {
  static const KernelTable table{Isa::neon, dot_neon,   sum_squares_neon, max_abs_neon,
                                 axpy_neon, scale_neon, sparse_dot_neon};
  return &table;
}

}  // namespace activelex::kernels

#else

namespace activelex::kernels {
const KernelTable* neon_table_compiled() { return nullptr; }
}  // namespace activelex::kernels

#endif
