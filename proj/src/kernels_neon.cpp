// NEON variants for aarch64 (2 doubles per vector). Same layout rule as the
// AVX2 file: vectorize across independent outputs, mul+add only, bit-identical
// to the scalar reference.

#if defined(__aarch64__)

#include <arm_neon.h>

#include <cstring>

#include "kernel_table.hpp"

namespace priorlane::kernels::neon {

static void matmul(const double* a, const double* b, double* c, int m, int k,
                   int n, bool accumulate) {
  if (!accumulate) std::memset(c, 0, sizeof(double) * size_t(m) * size_t(n));
  const int n2 = n & ~1;
  for (int i = 0; i < m; ++i) {
    double* crow = c + size_t(i) * n;
    const double* arow = a + size_t(i) * k;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + size_t(p) * n;
      const float64x2_t va = vdupq_n_f64(av);
      int j = 0;
      for (; j < n2; j += 2) {
        float64x2_t vc = vld1q_f64(crow + j);
        vc = vaddq_f64(vc, vmulq_f64(va, vld1q_f64(brow + j)));
        vst1q_f64(crow + j, vc);
      }
      for (; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

static void axpy(int n, double alpha, const double* x, double* y) {
  const float64x2_t va = vdupq_n_f64(alpha);
  const int n2 = n & ~1;
  int i = 0;
  for (; i < n2; i += 2) {
    float64x2_t vy = vld1q_f64(y + i);
    vy = vaddq_f64(vy, vmulq_f64(va, vld1q_f64(x + i)));
    vst1q_f64(y + i, vy);
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

static void vadd(int n, const double* x, const double* y, double* out) {
  const int n2 = n & ~1;
  int i = 0;
  for (; i < n2; i += 2)
    vst1q_f64(out + i, vaddq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
  for (; i < n; ++i) out[i] = x[i] + y[i];
}

static void vsub(int n, const double* x, const double* y, double* out) {
  const int n2 = n & ~1;
  int i = 0;
  for (; i < n2; i += 2)
    vst1q_f64(out + i, vsubq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
  for (; i < n; ++i) out[i] = x[i] - y[i];
}

static void vmul(int n, const double* x, const double* y, double* out) {
  const int n2 = n & ~1;
  int i = 0;
  for (; i < n2; i += 2)
    vst1q_f64(out + i, vmulq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
  for (; i < n; ++i) out[i] = x[i] * y[i];
}

static void vmul_acc(int n, const double* x, const double* y, double* out) {
  const int n2 = n & ~1;
  int i = 0;
  for (; i < n2; i += 2) {
    float64x2_t vo = vld1q_f64(out + i);
    vo = vaddq_f64(vo, vmulq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
    vst1q_f64(out + i, vo);
  }
  for (; i < n; ++i) out[i] += x[i] * y[i];
}

static void vscale(int n, double alpha, const double* x, double* out) {
  const float64x2_t va = vdupq_n_f64(alpha);
  const int n2 = n & ~1;
  int i = 0;
  for (; i < n2; i += 2)
    vst1q_f64(out + i, vmulq_f64(va, vld1q_f64(x + i)));
  for (; i < n; ++i) out[i] = alpha * x[i];
}

extern const KernelTable table = {matmul, axpy, vadd, vsub, vmul, vmul_acc, vscale};

}  // namespace priorlane::kernels::neon

#endif
