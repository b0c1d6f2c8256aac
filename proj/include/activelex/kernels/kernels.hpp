#pragma once

// Dense and sparse-dense arithmetic used by the classifier's inner loops.
//
// Every reduction uses the same fixed summation tree in every variant: sixteen
// interleaved partial sums (four 4-lane accumulators), combined pairwise, then
// the n % 16 tail added in order. The scalar reference spells that tree out
// explicitly, so SIMD and scalar results agree bit for bit as long as nothing
// contracts multiplies into FMAs.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace activelex::kernels {

enum class Isa { scalar, avx2, neon };

std::string_view to_string(Isa isa);

struct KernelTable {
  Isa isa;
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*sum_squares)(const double* a, std::size_t n);
  double (*max_abs)(const double* a, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y *= alpha
  void (*scale)(double alpha, double* y, std::size_t n);
  double (*sparse_dot)(const std::uint32_t* indices, const double* values, std::size_t nnz, const double* dense);
};

const KernelTable& scalar_table();
/// nullptr when not compiled in or not supported by this CPU.
const KernelTable* avx2_table();
const KernelTable* neon_table();

/// Best table for this machine, chosen once. The environment variable
/// ACTIVELEX_SIMD=scalar forces the reference kernels.
const KernelTable& active();

double dot(std::span<const double> a, std::span<const double> b);
double sum_squares(std::span<const double> a);
double max_abs(std::span<const double> a);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
void scale(double alpha, std::span<double> y);
double sparse_dot(std::span<const std::uint32_t> indices, std::span<const double> values,
                  std::span<const double> dense);

}  // namespace activelex::kernels
