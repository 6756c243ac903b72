// Compiled with -mavx2 -mfma; only reached after a CPUID check.
#include "incepto/simd.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cmath>
#include <vector>

namespace incepto::simd {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

double sum_avx2(const double* a, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(a + i));
    acc1 = _mm256_add_pd(acc1, _mm256_loadu_pd(a + i + 4));
  }
  for (; i + 4 <= n; i += 4) acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(a + i));
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i];
  return acc;
}

// exp(x - shift) with Cody-Waite reduction to |r| <= ln2/2 and a degree-13
// Taylor polynomial (truncation below 2e-16 relative). Results below
// exp(-708) flush to zero.
double exp_shift_avx2(const double* x, double shift, double* y, std::size_t n) {
  const __m256d vshift = _mm256_set1_pd(shift);
  const __m256d log2e = _mm256_set1_pd(1.4426950408889634);
  const __m256d ln2_hi = _mm256_set1_pd(6.93145751953125e-1);
  const __m256d ln2_lo = _mm256_set1_pd(1.42860682030941723212e-6);
  const __m256d lo = _mm256_set1_pd(-708.0), hi = _mm256_set1_pd(709.0);
  static constexpr double kInvFact[] = {1.0 / 6227020800.0, 1.0 / 479001600.0, 1.0 / 39916800.0, 1.0 / 3628800.0,
                                        1.0 / 362880.0,     1.0 / 40320.0,     1.0 / 5040.0,      1.0 / 720.0,
                                        1.0 / 120.0,        1.0 / 24.0,        1.0 / 6.0,         0.5,
                                        1.0,                1.0};
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d t = _mm256_sub_pd(_mm256_loadu_pd(x + i), vshift);
    const __m256d underflow = _mm256_cmp_pd(t, lo, _CMP_LT_OQ);
    const __m256d v = _mm256_min_pd(_mm256_max_pd(t, lo), hi);
    const __m256d k = _mm256_round_pd(_mm256_mul_pd(v, log2e), _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    __m256d r = _mm256_fnmadd_pd(k, ln2_hi, v);
    r = _mm256_fnmadd_pd(k, ln2_lo, r);
    __m256d p = _mm256_set1_pd(kInvFact[0]);
    for (std::size_t c = 1; c < 14; ++c) p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(kInvFact[c]));
    // 2^k through the exponent field
    const __m128i ki = _mm256_cvtpd_epi32(k);
    const __m256i e = _mm256_slli_epi64(_mm256_add_epi64(_mm256_cvtepi32_epi64(ki), _mm256_set1_epi64x(1023)), 52);
    __m256d out = _mm256_mul_pd(p, _mm256_castsi256_pd(e));
    out = _mm256_andnot_pd(underflow, out);
    _mm256_storeu_pd(y + i, out);
    acc = _mm256_add_pd(acc, out);
  }
  double total = hsum(acc);
  for (; i < n; ++i) {
    y[i] = std::exp(x[i] - shift);
    total += y[i];
  }
  return total;
}

// 4 x 8 register tile: 8 accumulators, 4 broadcasts and 2 loads per k step.
inline void tile_4x8(std::size_t k, const double* a, std::size_t lda, const double* b, std::size_t ldb,
                     double* c, std::size_t ldc) {
  __m256d c00 = _mm256_loadu_pd(c), c01 = _mm256_loadu_pd(c + 4);
  __m256d c10 = _mm256_loadu_pd(c + ldc), c11 = _mm256_loadu_pd(c + ldc + 4);
  __m256d c20 = _mm256_loadu_pd(c + 2 * ldc), c21 = _mm256_loadu_pd(c + 2 * ldc + 4);
  __m256d c30 = _mm256_loadu_pd(c + 3 * ldc), c31 = _mm256_loadu_pd(c + 3 * ldc + 4);
  for (std::size_t p = 0; p < k; ++p) {
    const __m256d b0 = _mm256_loadu_pd(b + p * ldb);
    const __m256d b1 = _mm256_loadu_pd(b + p * ldb + 4);
    __m256d av = _mm256_broadcast_sd(a + p);
    c00 = _mm256_fmadd_pd(av, b0, c00);
    c01 = _mm256_fmadd_pd(av, b1, c01);
    av = _mm256_broadcast_sd(a + lda + p);
    c10 = _mm256_fmadd_pd(av, b0, c10);
    c11 = _mm256_fmadd_pd(av, b1, c11);
    av = _mm256_broadcast_sd(a + 2 * lda + p);
    c20 = _mm256_fmadd_pd(av, b0, c20);
    c21 = _mm256_fmadd_pd(av, b1, c21);
    av = _mm256_broadcast_sd(a + 3 * lda + p);
    c30 = _mm256_fmadd_pd(av, b0, c30);
    c31 = _mm256_fmadd_pd(av, b1, c31);
  }
  _mm256_storeu_pd(c, c00);
  _mm256_storeu_pd(c + 4, c01);
  _mm256_storeu_pd(c + ldc, c10);
  _mm256_storeu_pd(c + ldc + 4, c11);
  _mm256_storeu_pd(c + 2 * ldc, c20);
  _mm256_storeu_pd(c + 2 * ldc + 4, c21);
  _mm256_storeu_pd(c + 3 * ldc, c30);
  _mm256_storeu_pd(c + 3 * ldc + 4, c31);
}

// One row of C against columns [j, n): 4-wide vectors then a scalar tail.
inline void row_tail(std::size_t j0, std::size_t n, std::size_t k, const double* arow, const double* b,
                     std::size_t ldb, double* crow) {
  std::size_t j = j0;
  // four independent column blocks hide the FMA latency; each element still
  // accumulates in k order
  for (; j + 16 <= n; j += 16) {
    __m256d a0 = _mm256_loadu_pd(crow + j), a1 = _mm256_loadu_pd(crow + j + 4);
    __m256d a2 = _mm256_loadu_pd(crow + j + 8), a3 = _mm256_loadu_pd(crow + j + 12);
    for (std::size_t p = 0; p < k; ++p) {
      const __m256d av = _mm256_broadcast_sd(arow + p);
      const double* bp = b + p * ldb + j;
      a0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(bp), a0);
      a1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(bp + 4), a1);
      a2 = _mm256_fmadd_pd(av, _mm256_loadu_pd(bp + 8), a2);
      a3 = _mm256_fmadd_pd(av, _mm256_loadu_pd(bp + 12), a3);
    }
    _mm256_storeu_pd(crow + j, a0);
    _mm256_storeu_pd(crow + j + 4, a1);
    _mm256_storeu_pd(crow + j + 8, a2);
    _mm256_storeu_pd(crow + j + 12, a3);
  }
  for (; j + 4 <= n; j += 4) {
    __m256d acc = _mm256_loadu_pd(crow + j);
    for (std::size_t p = 0; p < k; ++p) {
      acc = _mm256_fmadd_pd(_mm256_broadcast_sd(arow + p), _mm256_loadu_pd(b + p * ldb + j), acc);
    }
    _mm256_storeu_pd(crow + j, acc);
  }
  for (; j < n; ++j) {
    double acc = crow[j];
    for (std::size_t p = 0; p < k; ++p) acc = std::fma(arow[p], b[p * ldb + j], acc);
    crow[j] = acc;
  }
}

void gemm_nn_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                  const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  if (n < 8 && k >= 16) {
    // Narrow outputs (attention heads): vectorize along k instead, one dot per
    // element against a transposed copy of B.
    thread_local std::vector<double> bt;
    bt.resize(n * k);
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = b[p * ldb + j];
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) c[i * ldc + j] += dot_avx2(a + i * lda, bt.data() + j * k, k);
    return;
  }
  const std::size_t n8 = n - n % 8;
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    for (std::size_t j = 0; j < n8; j += 8) {
      tile_4x8(k, a + i * lda, lda, b + j, ldb, c + i * ldc + j, ldc);
    }
    for (std::size_t r = 0; r < 4; ++r) {
      row_tail(n8, n, k, a + (i + r) * lda, b, ldb, c + (i + r) * ldc);
    }
  }
  for (; i < m; ++i) row_tail(0, n, k, a + i * lda, b, ldb, c + i * ldc);
}

constexpr KernelTable kAvx2{Isa::Avx2, "avx2", dot_avx2, axpy_avx2, sum_avx2, gemm_nn_avx2, exp_shift_avx2};

}  // namespace

namespace detail {
const KernelTable* avx2_compiled() { return &kAvx2; }
}  // namespace detail

}  // namespace incepto::simd

#else

namespace incepto::simd {
namespace detail {
const KernelTable* avx2_compiled() { return nullptr; }
}  // namespace detail
}  // namespace incepto::simd

#endif
