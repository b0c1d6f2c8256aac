#include <cassert>
#include <cstdlib>
#include <string>

#include "activelex/error.hpp"
#include "kernels_internal.hpp"

namespace activelex::kernels {

std::string_view to_string(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    case Isa::neon: return "neon";
  }
  return "scalar";
}

const KernelTable* avx2_table() {
#if defined(__x86_64__) || defined(__i386__)
  static const bool supported = __builtin_cpu_supports("avx2");
  return supported ? avx2_table_compiled() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable* neon_table() { return neon_table_compiled(); }

namespace {

const KernelTable& choose() {
  const char* forced = std::getenv("ACTIVELEX_SIMD");
  if (forced != nullptr && std::string(forced) == "scalar") return scalar_table();
  if (const auto* t = avx2_table()) return *t;
  if (const auto* t = neon_table()) return *t;
  return scalar_table();
}

void check_same_size(std::size_t a, std::size_t b) {
  if (a != b) throw DimensionMismatch("kernel operands differ in length: " + std::to_string(a) + " vs " +
                                      std::to_string(b));
}

}  // namespace

const KernelTable& active() {
  static const KernelTable& table = choose();
  return table;
}

double dot(std::span<const double> a, std::span<const double> b) {
  check_same_size(a.size(), b.size());
  return active().dot(a.data(), b.data(), a.size());
}

double sum_squares(std::span<const double> a) { return active().sum_squares(a.data(), a.size()); }

double max_abs(std::span<const double> a) { return active().max_abs(a.data(), a.size()); }

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  check_same_size(x.size(), y.size());
  active().axpy(alpha, x.data(), y.data(), x.size());
}

void scale(double alpha, std::span<double> y) { active().scale(alpha, y.data(), y.size()); }

double sparse_dot(std::span<const std::uint32_t> indices, std::span<const double> values,
                  std::span<const double> dense) {
  check_same_size(indices.size(), values.size());
  assert(indices.empty() || indices.back() < dense.size());
  return active().sparse_dot(indices.data(), values.data(), indices.size(), dense.data());
}

}  // namespace activelex::kernels
