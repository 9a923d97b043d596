#include <doctest.h>

#include <array>
#include <cmath>
#include <stdexcept>
#include <random>
#include <vector>

#include "pt/simd/kernels.hpp"

using pt::simd::KernelTable;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

void check_close(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::abs(a[i] - b[i]) <= tol * (1.0 + std::abs(a[i])));
  }
}

// Runs every kernel of `fast` against the scalar reference on ragged sizes
// that exercise both vector bodies and scalar tails.
void compare_tables(const KernelTable& ref, const KernelTable& fast) {
  std::mt19937_64 rng(42);
  for (std::size_t n : {0u, 1u, 3u, 4u, 5u, 15u, 16u, 17u, 33u, 67u, 256u}) {
    const auto x = random_vec(n, rng);
    const auto y = random_vec(n, rng);
    CHECK(std::abs(ref.dot(x.data(), y.data(), n) - fast.dot(x.data(), y.data(), n)) <=
          1e-12 * (1.0 + n));
    CHECK(std::abs(ref.sum(x.data(), n) - fast.sum(x.data(), n)) <= 1e-12 * (1.0 + n));

    auto y1 = y, y2 = y;
    ref.axpy(0.37, x.data(), y1.data(), n);
    fast.axpy(0.37, x.data(), y2.data(), n);
    check_close(y1, y2, 1e-14);

    std::vector<double> o1(n), o2(n);
    ref.add(x.data(), y.data(), o1.data(), n);
    fast.add(x.data(), y.data(), o2.data(), n);
    CHECK(o1 == o2);
    ref.sub(x.data(), y.data(), o1.data(), n);
    fast.sub(x.data(), y.data(), o2.data(), n);
    CHECK(o1 == o2);
    ref.mul(x.data(), y.data(), o1.data(), n);
    fast.mul(x.data(), y.data(), o2.data(), n);
    CHECK(o1 == o2);
  }

  using Dims = std::array<std::size_t, 3>;
  for (const Dims& d : {Dims{1, 1, 1}, Dims{2, 3, 4}, Dims{5, 7, 9}, Dims{8, 8, 8},
                        Dims{3, 17, 6}, Dims{13, 4, 21}}) {
    const auto [m, k, n] = d;
    const auto a = random_vec(m * k, rng);
    const auto b = random_vec(k * n, rng);
    const auto bt = random_vec(n * k, rng);
    const auto at = random_vec(k * m, rng);
    const auto c0 = random_vec(m * n, rng);

    auto c1 = c0, c2 = c0;
    ref.gemm_nn(a.data(), b.data(), c1.data(), m, k, n);
    fast.gemm_nn(a.data(), b.data(), c2.data(), m, k, n);
    check_close(c1, c2, 1e-12);

    c1 = c0, c2 = c0;
    ref.gemm_nt(a.data(), bt.data(), c1.data(), m, k, n);
    fast.gemm_nt(a.data(), bt.data(), c2.data(), m, k, n);
    check_close(c1, c2, 1e-12);

    c1 = c0, c2 = c0;
    ref.gemm_tn(at.data(), b.data(), c1.data(), m, k, n);
    fast.gemm_tn(at.data(), b.data(), c2.data(), m, k, n);
    check_close(c1, c2, 1e-12);
  }
}

}  // namespace

TEST_CASE("scalar gemm matches the textbook triple loop") {
  const auto& k = pt::simd::scalar_kernels();
  // [[1,2],[3,4]] x [[5,6],[7,8]] = [[19,22],[43,50]]
  const std::vector<double> a{1, 2, 3, 4}, b{5, 6, 7, 8};
  std::vector<double> c(4, 0.0);
  k.gemm_nn(a.data(), b.data(), c.data(), 2, 2, 2);
  CHECK(c == std::vector<double>{19, 22, 43, 50});

  // a * b^T with b^T = [[5,7],[6,8]] stored as b = [[5,6],[7,8]] rows.
  std::fill(c.begin(), c.end(), 0.0);
  k.gemm_nt(a.data(), b.data(), c.data(), 2, 2, 2);
  CHECK(c == std::vector<double>{17, 23, 39, 53});

  // a^T * b
  std::fill(c.begin(), c.end(), 0.0);
  k.gemm_tn(a.data(), b.data(), c.data(), 2, 2, 2);
  CHECK(c == std::vector<double>{26, 30, 38, 44});
}

TEST_CASE("avx2 kernels agree with the scalar reference") {
  const KernelTable* avx2 = pt::simd::avx2_kernels();
  if (avx2 == nullptr) {
    MESSAGE("AVX2 variant unavailable on this machine; equivalence skipped");
    return;
  }
  compare_tables(pt::simd::scalar_kernels(), *avx2);
}

TEST_CASE("isa selection switches the active table") {
  const auto before = pt::simd::active_isa();
  pt::simd::select_isa(pt::simd::Isa::scalar);
  CHECK(pt::simd::active_isa() == pt::simd::Isa::scalar);
  CHECK(&pt::simd::kernels() == &pt::simd::scalar_kernels());
  if (pt::simd::avx2_kernels() != nullptr) {
    pt::simd::select_isa(pt::simd::Isa::avx2);
    CHECK(pt::simd::active_isa() == pt::simd::Isa::avx2);
  } else {
    CHECK_THROWS_AS(pt::simd::select_isa(pt::simd::Isa::avx2), std::invalid_argument);
  }
  pt::simd::select_isa(before);
}
