#include "salad/simd/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace salad::simd::scalar {

void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, int lda,
          const float* b, int ldb, float beta, float* c, int ldc) {
  for (int i = 0; i < m; ++i) {
    float* crow = c + static_cast<std::ptrdiff_t>(i) * ldc;
    if (beta == 0.0f) {
      for (int j = 0; j < n; ++j) crow[j] = 0.0f;
    } else if (beta != 1.0f) {
      for (int j = 0; j < n; ++j) crow[j] *= beta;
    }
  }
  if (alpha == 0.0f || k == 0) return;

  std::vector<float> acc(static_cast<std::size_t>(n));
  for (int i = 0; i < m; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0f);
    for (int p = 0; p < k; ++p) {
      const float av = trans_a ? a[static_cast<std::ptrdiff_t>(p) * lda + i]
                               : a[static_cast<std::ptrdiff_t>(i) * lda + p];
      if (av == 0.0f) continue;
      if (!trans_b) {
        const float* brow = b + static_cast<std::ptrdiff_t>(p) * ldb;
        for (int j = 0; j < n; ++j) acc[j] += av * brow[j];
      } else {
        for (int j = 0; j < n; ++j) acc[j] += av * b[static_cast<std::ptrdiff_t>(j) * ldb + p];
      }
    }
    float* crow = c + static_cast<std::ptrdiff_t>(i) * ldc;
    for (int j = 0; j < n; ++j) crow[j] += alpha * acc[j];
  }
}

float dot(const float* x, const float* y, std::size_t n) {
  float s = 0.0f;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy(float alpha, const float* x, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

float squared_distance(const float* x, const float* y, std::size_t n) {
  float s = 0.0f;
  for (std::size_t i = 0; i < n; ++i) {
    const float d = x[i] - y[i];
    s += d * d;
  }
  return s;
}

void adam(const AdamStep& st, float* param, const float* grad, float* m, float* v,
          std::size_t n) {
  const float decay = 1.0f - st.lr * st.weight_decay;
  for (std::size_t i = 0; i < n; ++i) {
    const float g = grad[i];
    m[i] = st.beta1 * m[i] + (1.0f - st.beta1) * g;
    v[i] = st.beta2 * v[i] + (1.0f - st.beta2) * g * g;
    const float mhat = m[i] / st.bias1;
    const float vhat = v[i] / st.bias2;
    param[i] = param[i] * decay - st.lr * mhat / (std::sqrt(vhat) + st.eps);
  }
}

}  // namespace salad::simd::scalar
