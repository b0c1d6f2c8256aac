#include <cmath>

#include "activelex/kernels/kernels.hpp"
#include "kernels_internal.hpp"

namespace activelex::kernels {

namespace {

// Folds sixteen stripes exactly as the 4x4-lane SIMD variants do.
inline double fold16(const double (&s)[16]) {
  double lane[4];
  for (int l = 0; l < 4; ++l) lane[l] = (s[l] + s[4 + l]) + (s[8 + l] + s[12 + l]);
  return (lane[0] + lane[2]) + (lane[1] + lane[3]);
}

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s[16] = {};
  std::size_t i = 0;
  for (; i + kStripes <= n; i += kStripes)
    for (std::size_t k = 0; k < kStripes; ++k) s[k] += a[i + k] * b[i + k];
  double r = fold16(s);
  for (; i < n; ++i) r += a[i] * b[i];
  return r;
}

double sum_squares_scalar(const double* a, std::size_t n) { return dot_scalar(a, a, n); }

double max_abs_scalar(const double* a, std::size_t n) {
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = std::fabs(a[i]);
    if (v > m) m = v;
  }
  return m;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale_scalar(double alpha, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] *= alpha;
}

double sparse_dot_scalar(const std::uint32_t* indices, const double* values, std::size_t nnz, const double* dense) {
  double s[16] = {};
  std::size_t i = 0;
  for (; i + kStripes <= nnz; i += kStripes)
    for (std::size_t k = 0; k < kStripes; ++k) s[k] += values[i + k] * dense[indices[i + k]];
  double r = fold16(s);
  for (; i < nnz; ++i) r += values[i] * dense[indices[i]];
  return r;
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{Isa::scalar,  dot_scalar,   sum_squares_scalar, max_abs_scalar,
                                 axpy_scalar,  scale_scalar, sparse_dot_scalar};
  return table;
}

}  // namespace activelex::kernels
