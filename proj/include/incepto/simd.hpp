#pragma once

#include <cstddef>
#include <optional>
#include <string_view>

// Data-parallel inner loops used by the tensor ops. Every kernel has a
// scalar reference implementation; vector variants (AVX2+FMA on x86-64,
// NEON on AArch64) are selected once at startup and can be overridden with
// INCEPTO_ISA=scalar|avx2|neon or set_isa().

namespace incepto::simd {

enum class Isa { Scalar, Avx2, Neon };

struct KernelTable {
  Isa isa;
  const char* name;
  double (*dot)(const double* a, const double* b, std::size_t n);
  /// y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  double (*sum)(const double* a, std::size_t n);
  /// C[M x N] += A[M x K] * B[K x N]; row-major with leading dimensions.
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                  const double* b, std::size_t ldb, double* c, std::size_t ldc);
  /// y = exp(x - shift), returning sum(y). x and y may alias.
  double (*exp_shift)(const double* x, double shift, double* y, std::size_t n);
};

const KernelTable& scalar_table();
/// nullptr when the variant was not compiled in or the CPU lacks it.
const KernelTable* avx2_table();
const KernelTable* neon_table();

const KernelTable& active();
Isa active_isa();
/// Returns false (and leaves the selection alone) if `isa` is unavailable.
bool set_isa(Isa isa);
std::optional<Isa> parse_isa(std::string_view name);
std::string_view isa_name(Isa isa);

inline double dot(const double* a, const double* b, std::size_t n) { return active().dot(a, b, n); }
inline void axpy(double alpha, const double* x, double* y, std::size_t n) { active().axpy(alpha, x, y, n); }
inline double sum(const double* a, std::size_t n) { return active().sum(a, n); }
inline double exp_shift(const double* x, double shift, double* y, std::size_t n) {
  return active().exp_shift(x, shift, y, n);
}

/// C[M x N] += op(A) * op(B) where op transposes when the flag is set.
/// A is stored M x K (or K x M when trans_a), B is K x N (or N x K when trans_b);
/// all operands contiguous.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c);

/// Same contract as gemm(), evaluated with an explicit kernel table.
void gemm_with(const KernelTable& table, bool trans_a, bool trans_b, std::size_t m, std::size_t n,
               std::size_t k, const double* a, const double* b, double* c);

}  // namespace incepto::simd
