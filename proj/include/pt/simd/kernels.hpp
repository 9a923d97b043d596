#pragma once

// Double-precision inner-loop kernels used by the tensor engine.
//
// Every kernel has a portable scalar reference implementation. On x86-64 an
// AVX2+FMA variant is compiled separately and selected at runtime when the CPU
// supports it. Setting PT_SIMD=scalar in the environment forces the reference
// path. All matrices are dense row-major.

#include <cstddef>
#include <string_view>

namespace pt::simd {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa) noexcept;

struct KernelTable {
  Isa isa;
  // sum_i x[i] * y[i]
  double (*dot)(const double* x, const double* y, std::size_t n);
  // sum_i x[i]
  double (*sum)(const double* x, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // out = x + y, out = x - y, out = x * y  (out may alias x or y)
  void (*add)(const double* x, const double* y, double* out, std::size_t n);
  void (*sub)(const double* x, const double* y, double* out, std::size_t n);
  void (*mul)(const double* x, const double* y, double* out, std::size_t n);
  // c[m x n] += a[m x k] * b[k x n]
  void (*gemm_nn)(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                  std::size_t n);
  // c[m x n] += a[m x k] * b[n x k]^T
  void (*gemm_nt)(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                  std::size_t n);
  // c[m x n] += a[k x m]^T * b[k x n]
  void (*gemm_tn)(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                  std::size_t n);
};

const KernelTable& scalar_kernels() noexcept;

// nullptr when the variant was not compiled in or the running CPU lacks it.
const KernelTable* avx2_kernels() noexcept;

// The table currently used by the tensor engine.
const KernelTable& kernels() noexcept;

Isa active_isa() noexcept;

// Switches the engine-wide table. Throws std::invalid_argument when the
// requested variant is unavailable. Not safe to call while another thread is
// running tensor operations.
void select_isa(Isa isa);

}  // namespace pt::simd
