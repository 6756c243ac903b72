#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "incepto/rng.hpp"
#include "incepto/simd.hpp"

using namespace incepto;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

// Triple loop with explicit index arithmetic; independent of the packing and
// tiling done by simd::gemm.
std::vector<double> naive_gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k,
                               const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      long double acc = 0.0L;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = ta ? a[p * m + i] : a[i * k + p];
        const double bv = tb ? b[j * k + p] : b[p * n + j];
        acc += static_cast<long double>(av) * bv;
      }
      c[i * n + j] = static_cast<double>(acc);
    }
  return c;
}

std::vector<const simd::KernelTable*> tables() {
  std::vector<const simd::KernelTable*> out{&simd::scalar_table()};
  if (auto* t = simd::avx2_table()) out.push_back(t);
  if (auto* t = simd::neon_table()) out.push_back(t);
  return out;
}

}  // namespace

TEST_CASE("isa names parse and the active table is available") {
  CHECK(simd::parse_isa("scalar") == simd::Isa::Scalar);
  CHECK(simd::parse_isa("avx2") == simd::Isa::Avx2);
  CHECK_FALSE(simd::parse_isa("sse9").has_value());
  CHECK(simd::set_isa(simd::Isa::Scalar));
  CHECK(simd::active_isa() == simd::Isa::Scalar);
  const simd::Isa best = simd::avx2_table() ? simd::Isa::Avx2 : simd::neon_table() ? simd::Isa::Neon : simd::Isa::Scalar;
  CHECK(simd::set_isa(best));
}

TEST_CASE("vector kernels agree with the scalar reference") {
  Rng rng(7);
  const auto& ref = simd::scalar_table();
  for (const auto* table : tables()) {
    CAPTURE(table->name);
    for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 9u, 31u, 100u, 1001u}) {
      CAPTURE(n);
      const auto a = random_vec(rng, n);
      const auto b = random_vec(rng, n);
      const double scale = 1.0 + std::sqrt(static_cast<double>(n));
      CHECK(table->dot(a.data(), b.data(), n) == doctest::Approx(ref.dot(a.data(), b.data(), n)).epsilon(1e-12 * scale).scale(scale));
      CHECK(table->sum(a.data(), n) == doctest::Approx(ref.sum(a.data(), n)).epsilon(1e-12 * scale).scale(scale));
      auto y1 = b;
      auto y2 = b;
      table->axpy(0.37, a.data(), y1.data(), n);
      ref.axpy(0.37, a.data(), y2.data(), n);
      for (std::size_t i = 0; i < n; ++i) CHECK(y1[i] == doctest::Approx(y2[i]).epsilon(1e-14));
    }
  }
}

TEST_CASE("gemm matches a naive oracle for every transpose combination and kernel") {
  Rng rng(11);
  const std::size_t dims[][3] = {{1, 1, 1}, {3, 5, 2}, {4, 8, 3}, {5, 13, 7}, {9, 100, 27}, {64, 12, 48}, {12, 48, 640}, {100, 3, 100}, {7, 2, 33}, {5, 7, 16}};
  for (const auto* table : tables()) {
    CAPTURE(table->name);
    for (const auto& d : dims) {
      const std::size_t m = d[0], n = d[1], k = d[2];
      for (int ta = 0; ta < 2; ++ta)
        for (int tb = 0; tb < 2; ++tb) {
          CAPTURE(m);
          CAPTURE(n);
          CAPTURE(k);
          const auto a = random_vec(rng, m * k);
          const auto b = random_vec(rng, k * n);
          const auto expect = naive_gemm(ta, tb, m, n, k, a, b);
          std::vector<double> c(m * n, 0.5);
          simd::gemm_with(*table, ta, tb, m, n, k, a.data(), b.data(), c.data());
          double worst = 0.0;
          for (std::size_t i = 0; i < c.size(); ++i) worst = std::max(worst, std::abs(c[i] - 0.5 - expect[i]));
          CHECK(worst < 1e-12 * static_cast<double>(k + 1));
        }
    }
  }
}

TEST_CASE("exp_shift agrees with std::exp for every kernel") {
  Rng rng(13);
  for (const auto* table : tables()) {
    CAPTURE(table->name);
    for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 100u, 1001u}) {
      std::vector<double> x(n);
      for (double& v : x) v = (rng.uniform() * 2.0 - 1.0) * 350.0;
      if (n > 2) x[1] = 0.0;
      const double shift = n > 0 ? x[0] * 0.5 : 0.0;
      std::vector<double> y(n);
      const double total = table->exp_shift(x.data(), shift, y.data(), n);
      double expect_total = 0.0, worst = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double e = std::exp(x[i] - shift);
        expect_total += e;
        if (e > 1e-300) worst = std::max(worst, std::abs(y[i] - e) / e);
      }
      CHECK(worst < 1e-15);
      CHECK(total == doctest::Approx(expect_total).epsilon(1e-13));
    }
    // in place, and tiny values flush to zero rather than garbage
    std::vector<double> z{0.0, -1.0, -750.0, -2000.0, 1.0};
    table->exp_shift(z.data(), 0.0, z.data(), z.size());
    CHECK(z[0] == 1.0);
    CHECK(z[1] == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
    CHECK(z[2] < 1e-300);
    CHECK(z[3] == 0.0);
    CHECK(z[4] == doctest::Approx(std::exp(1.0)).epsilon(1e-15));
  }
}
