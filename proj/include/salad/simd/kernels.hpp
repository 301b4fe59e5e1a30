#pragma once

// Data-parallel inner loops used by the network engine, k-means and the
// optimizers. Every kernel has a scalar reference implementation; wider
// variants are compiled in separate translation units and picked once at
// startup from the CPU feature bits. SALAD_ISA=scalar forces the reference
// path (useful for bisecting numeric differences).

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace salad::simd {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

/// Row-major GEMM: C = alpha * op(A) * op(B) + beta * C, op(A) is m x k, op(B) is k x n.
using GemmFn = void (*)(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
                        const float* a, int lda, const float* b, int ldb, float beta, float* c,
                        int ldc);
using DotFn = float (*)(const float* x, const float* y, std::size_t n);
using AxpyFn = void (*)(float alpha, const float* x, float* y, std::size_t n);
using SquaredDistanceFn = float (*)(const float* x, const float* y, std::size_t n);

/// One Adam/AdamW step over a flat parameter block. `bias1`/`bias2` are the
/// bias-correction denominators 1 - beta^t.
struct AdamStep {
  float lr;
  float beta1;
  float beta2;
  float eps;
  float weight_decay;  // decoupled (AdamW); 0 gives plain Adam
  float bias1;
  float bias2;
};
using AdamFn = void (*)(const AdamStep& step, float* param, const float* grad, float* m, float* v,
                        std::size_t n);

struct KernelTable {
  Isa isa;
  GemmFn gemm;
  DotFn dot;
  AxpyFn axpy;
  SquaredDistanceFn squared_distance;
  AdamFn adam;
};

bool isa_available(Isa isa);

/// Table for a specific ISA. Throws if the CPU (or the build) lacks it.
const KernelTable& kernel_table(Isa isa);

/// Table selected at startup.
const KernelTable& kernels();

/// Override the active table (tests, benchmarks). Throws if unavailable.
void set_active_isa(Isa isa);

// Convenience wrappers over the active table.
inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a,
                 int lda, const float* b, int ldb, float beta, float* c, int ldc) {
  kernels().gemm(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}
inline float dot(const float* x, const float* y, std::size_t n) { return kernels().dot(x, y, n); }
inline void axpy(float alpha, const float* x, float* y, std::size_t n) {
  kernels().axpy(alpha, x, y, n);
}
inline float squared_distance(const float* x, const float* y, std::size_t n) {
  return kernels().squared_distance(x, y, n);
}

namespace scalar {
void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, int lda,
          const float* b, int ldb, float beta, float* c, int ldc);
float dot(const float* x, const float* y, std::size_t n);
void axpy(float alpha, const float* x, float* y, std::size_t n);
float squared_distance(const float* x, const float* y, std::size_t n);
void adam(const AdamStep& step, float* param, const float* grad, float* m, float* v,
          std::size_t n);
}  // namespace scalar

#if defined(SALAD_HAVE_AVX2)
namespace avx2 {
void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, int lda,
          const float* b, int ldb, float beta, float* c, int ldc);
float dot(const float* x, const float* y, std::size_t n);
void axpy(float alpha, const float* x, float* y, std::size_t n);
float squared_distance(const float* x, const float* y, std::size_t n);
void adam(const AdamStep& step, float* param, const float* grad, float* m, float* v,
          std::size_t n);
}  // namespace avx2
#endif

}  // namespace salad::simd
