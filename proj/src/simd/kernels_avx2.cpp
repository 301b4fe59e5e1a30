// Compiled with -mavx2 -mfma; only reached when the dispatcher has confirmed
// both feature bits at runtime.
#include "salad/simd/kernels.hpp"

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <vector>

namespace salad::simd::avx2 {

namespace {

constexpr int kPanel = 16;  // columns per packed B panel (two ymm registers)

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 shuf = _mm_movehdup_ps(lo);
  __m128 sums = _mm_add_ps(lo, shuf);
  shuf = _mm_movehl_ps(shuf, sums);
  sums = _mm_add_ss(sums, shuf);
  return _mm_cvtss_f32(sums);
}

// Packs columns [j0, j0 + width) of op(B) into a k x kPanel block, zero padded.
void pack_panel(bool trans_b, const float* b, int ldb, int k, int j0, int width, float* out) {
  for (int p = 0; p < k; ++p) {
    float* dst = out + static_cast<std::ptrdiff_t>(p) * kPanel;
    if (!trans_b) {
      const float* src = b + static_cast<std::ptrdiff_t>(p) * ldb + j0;
      int jj = 0;
      for (; jj < width; ++jj) dst[jj] = src[jj];
      for (; jj < kPanel; ++jj) dst[jj] = 0.0f;
    } else {
      int jj = 0;
      for (; jj < width; ++jj) dst[jj] = b[static_cast<std::ptrdiff_t>(j0 + jj) * ldb + p];
      for (; jj < kPanel; ++jj) dst[jj] = 0.0f;
    }
  }
}

template <int MR>
void micro(bool trans_a, const float* a, int lda, int i0, int k, const float* panel, float* acc) {
  __m256 c0[MR];
  __m256 c1[MR];
  for (int r = 0; r < MR; ++r) {
    c0[r] = _mm256_setzero_ps();
    c1[r] = _mm256_setzero_ps();
  }
  const float* arow[MR];
  if (!trans_a) {
    for (int r = 0; r < MR; ++r) arow[r] = a + static_cast<std::ptrdiff_t>(i0 + r) * lda;
  }
  for (int p = 0; p < k; ++p) {
    const __m256 b0 = _mm256_loadu_ps(panel + static_cast<std::ptrdiff_t>(p) * kPanel);
    const __m256 b1 = _mm256_loadu_ps(panel + static_cast<std::ptrdiff_t>(p) * kPanel + 8);
    for (int r = 0; r < MR; ++r) {
      const float av = trans_a ? a[static_cast<std::ptrdiff_t>(p) * lda + i0 + r] : arow[r][p];
      const __m256 va = _mm256_set1_ps(av);
      c0[r] = _mm256_fmadd_ps(va, b0, c0[r]);
      c1[r] = _mm256_fmadd_ps(va, b1, c1[r]);
    }
  }
  for (int r = 0; r < MR; ++r) {
    _mm256_storeu_ps(acc + r * kPanel, c0[r]);
    _mm256_storeu_ps(acc + r * kPanel + 8, c1[r]);
  }
}

}  // namespace

void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, int lda,
          const float* b, int ldb, float beta, float* c, int ldc) {
  if (m <= 0 || n <= 0) return;
  if (alpha == 0.0f || k == 0) {
    for (int i = 0; i < m; ++i) {
      float* crow = c + static_cast<std::ptrdiff_t>(i) * ldc;
      for (int j = 0; j < n; ++j) crow[j] = beta == 0.0f ? 0.0f : beta * crow[j];
    }
    return;
  }

  thread_local std::vector<float> panel;
  panel.resize(static_cast<std::size_t>(k) * kPanel);
  alignas(32) float acc[4 * kPanel];

  for (int j0 = 0; j0 < n; j0 += kPanel) {
    const int width = std::min(kPanel, n - j0);
    pack_panel(trans_b, b, ldb, k, j0, width, panel.data());
    int i0 = 0;
    auto flush = [&](int rows) {
      for (int r = 0; r < rows; ++r) {
        float* crow = c + static_cast<std::ptrdiff_t>(i0 + r) * ldc + j0;
        const float* arow = acc + r * kPanel;
        for (int jj = 0; jj < width; ++jj) {
          const float v = alpha * arow[jj];
          crow[jj] = beta == 0.0f ? v : v + beta * crow[jj];
        }
      }
    };
    for (; i0 + 4 <= m; i0 += 4) {
      micro<4>(trans_a, a, lda, i0, k, panel.data(), acc);
      flush(4);
    }
    for (; i0 < m; ++i0) {
      micro<1>(trans_a, a, lda, i0, k, panel.data(), acc);
      flush(1);
    }
  }
}

float dot(const float* x, const float* y, std::size_t n) {
  __m256 s0 = _mm256_setzero_ps();
  __m256 s1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    s0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), s0);
    s1 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i + 8), _mm256_loadu_ps(y + i + 8), s1);
  }
  for (; i + 8 <= n; i += 8) s0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), s0);
  float s = hsum(_mm256_add_ps(s0, s1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy(float alpha, const float* x, float* y, std::size_t n) {
  const __m256 va = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

float squared_distance(const float* x, const float* y, std::size_t n) {
  __m256 s = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 d = _mm256_sub_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i));
    s = _mm256_fmadd_ps(d, d, s);
  }
  float r = hsum(s);
  for (; i < n; ++i) {
    const float d = x[i] - y[i];
    r += d * d;
  }
  return r;
}

void adam(const AdamStep& st, float* param, const float* grad, float* m, float* v,
          std::size_t n) {
  const __m256 b1 = _mm256_set1_ps(st.beta1);
  const __m256 b2 = _mm256_set1_ps(st.beta2);
  const __m256 ob1 = _mm256_set1_ps(1.0f - st.beta1);
  const __m256 ob2 = _mm256_set1_ps(1.0f - st.beta2);
  const __m256 inv_bias1 = _mm256_set1_ps(1.0f / st.bias1);
  const __m256 inv_bias2 = _mm256_set1_ps(1.0f / st.bias2);
  const __m256 lr = _mm256_set1_ps(st.lr);
  const __m256 eps = _mm256_set1_ps(st.eps);
  const __m256 decay = _mm256_set1_ps(1.0f - st.lr * st.weight_decay);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 g = _mm256_loadu_ps(grad + i);
    const __m256 mi = _mm256_fmadd_ps(b1, _mm256_loadu_ps(m + i), _mm256_mul_ps(ob1, g));
    const __m256 vi =
        _mm256_fmadd_ps(b2, _mm256_loadu_ps(v + i), _mm256_mul_ps(ob2, _mm256_mul_ps(g, g)));
    _mm256_storeu_ps(m + i, mi);
    _mm256_storeu_ps(v + i, vi);
    const __m256 mhat = _mm256_mul_ps(mi, inv_bias1);
    const __m256 vhat = _mm256_mul_ps(vi, inv_bias2);
    const __m256 denom = _mm256_add_ps(_mm256_sqrt_ps(vhat), eps);
    const __m256 p = _mm256_mul_ps(_mm256_loadu_ps(param + i), decay);
    _mm256_storeu_ps(param + i, _mm256_sub_ps(p, _mm256_div_ps(_mm256_mul_ps(lr, mhat), denom)));
  }
  if (i < n) scalar::adam(st, param + i, grad + i, m + i, v + i, n - i);
}

}  // namespace salad::simd::avx2
