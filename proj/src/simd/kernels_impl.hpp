#pragma once

// Internal: the raw per-ISA tables. Kept free of inline code so it can be
// included from translation units built with different target flags.

#include "pt/simd/kernels.hpp"

namespace pt::simd::detail {

extern const KernelTable kScalarTable;

#if defined(PT_HAVE_AVX2)
extern const KernelTable kAvx2Table;
#endif

}  // namespace pt::simd::detail
