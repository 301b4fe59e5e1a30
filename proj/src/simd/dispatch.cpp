#include "salad/simd/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace salad::simd {

namespace {

constexpr KernelTable kScalar{Isa::scalar,       scalar::gemm,
                              scalar::dot,       scalar::axpy,
                              scalar::squared_distance, scalar::adam};

#if defined(SALAD_HAVE_AVX2)
constexpr KernelTable kAvx2{Isa::avx2,       avx2::gemm, avx2::dot, avx2::axpy,
                            avx2::squared_distance, avx2::adam};
#endif

bool cpu_has_avx2() {
#if defined(SALAD_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* pick_default() {
  if (const char* env = std::getenv("SALAD_ISA")) {
    if (std::string(env) == "scalar") return &kScalar;
  }
#if defined(SALAD_HAVE_AVX2)
  if (cpu_has_avx2()) return &kAvx2;
#endif
  return &kScalar;
}

std::atomic<const KernelTable*>& active() {
  static std::atomic<const KernelTable*> table{pick_default()};
  return table;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
  }
  return "unknown";
}

bool isa_available(Isa isa) {
  switch (isa) {
    case Isa::scalar: return true;
    case Isa::avx2: return cpu_has_avx2();
  }
  return false;
}

const KernelTable& kernel_table(Isa isa) {
  if (!isa_available(isa)) {
    throw std::runtime_error("kernel ISA not available on this CPU: " + std::string(isa_name(isa)));
  }
#if defined(SALAD_HAVE_AVX2)
  if (isa == Isa::avx2) return kAvx2;
#endif
  return kScalar;
}

const KernelTable& kernels() { return *active().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) { active().store(&kernel_table(isa), std::memory_order_relaxed); }

}  // namespace salad::simd
