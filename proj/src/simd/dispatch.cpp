#include <atomic>
#include <cstdlib>
#include <string>
#include <vector>

#include "incepto/simd.hpp"

namespace incepto::simd {

namespace detail {
const KernelTable* avx2_compiled();
}  // namespace detail

const KernelTable* avx2_table() {
#if defined(__x86_64__) || defined(_M_X64)
  static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? detail::avx2_compiled() : nullptr;
#else
  return nullptr;
#endif
}

namespace {

const KernelTable* table_for(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return &scalar_table();
    case Isa::Avx2:
      return avx2_table();
    case Isa::Neon:
      return neon_table();
  }
  return nullptr;
}

const KernelTable* initial_table() {
  if (const char* env = std::getenv("INCEPTO_ISA")) {
    if (auto isa = parse_isa(env)) {
      if (const KernelTable* t = table_for(*isa)) return t;
    }
  }
  if (const KernelTable* t = avx2_table()) return t;
  if (const KernelTable* t = neon_table()) return t;
  return &scalar_table();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{initial_table()};
  return table;
}

}  // namespace

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

Isa active_isa() { return active().isa; }

bool set_isa(Isa isa) {
  const KernelTable* t = table_for(isa);
  if (t == nullptr) return false;
  current().store(t, std::memory_order_release);
  return true;
}

std::optional<Isa> parse_isa(std::string_view name) {
  if (name == "scalar") return Isa::Scalar;
  if (name == "avx2") return Isa::Avx2;
  if (name == "neon") return Isa::Neon;
  return std::nullopt;
}

std::string_view isa_name(Isa isa) { return table_for(isa) ? table_for(isa)->name : "unavailable"; }

void gemm_with(const KernelTable& table, bool trans_a, bool trans_b, std::size_t m, std::size_t n,
               std::size_t k, const double* a, const double* b, double* c) {
  if (m == 0 || n == 0 || k == 0) return;
  // Transposed operands are packed into row-major scratch so the kernel only
  // ever sees the C += A * B form.
  thread_local std::vector<double> pack_a, pack_b;
  const double* pa = a;
  const double* pb = b;
  if (trans_a) {
    pack_a.resize(m * k);
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t i = 0; i < m; ++i) pack_a[i * k + p] = a[p * m + i];
    pa = pack_a.data();
  }
  if (trans_b) {
    pack_b.resize(k * n);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) pack_b[p * n + j] = b[j * k + p];
    pb = pack_b.data();
  }
  table.gemm_nn(m, n, k, pa, k, pb, n, c, n);
}

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c) {
  gemm_with(active(), trans_a, trans_b, m, n, k, a, b, c);
}

}  // namespace incepto::simd
