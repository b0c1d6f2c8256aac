#pragma once

#include <cstddef>

#include "activelex/kernels/kernels.hpp"

namespace activelex::kernels {

inline constexpr std::size_t kStripes = 16;

// Defined in the per-ISA translation units; null when the ISA is not compiled in.
const KernelTable* avx2_table_compiled();
const KernelTable* neon_table_compiled();

}  // namespace activelex::kernels
