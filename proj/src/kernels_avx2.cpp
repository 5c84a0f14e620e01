// AVX2 variants. Compiled with -mavx2 and only entered after a runtime CPU
// check in kernels.cpp. Vectorization is across independent output elements
// (4 doubles per lane group) with mul+add, never FMA, so each element sees
// the exact scalar accumulation order and results match the reference
// kernels bit for bit.

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cstring>

#include "kernel_table.hpp"

namespace priorlane::kernels::avx2 {

static void matmul(const double* a, const double* b, double* c, int m, int k,
                   int n, bool accumulate) {
  if (!accumulate) std::memset(c, 0, sizeof(double) * size_t(m) * size_t(n));
  const int n4 = n & ~3;
  for (int i = 0; i < m; ++i) {
    double* crow = c + size_t(i) * n;
    const double* arow = a + size_t(i) * k;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + size_t(p) * n;
      const __m256d va = _mm256_set1_pd(av);
      int j = 0;
      for (; j < n4; j += 4) {
        __m256d vb = _mm256_loadu_pd(brow + j);
        __m256d vc = _mm256_loadu_pd(crow + j);
        vc = _mm256_add_pd(vc, _mm256_mul_pd(va, vb));
        _mm256_storeu_pd(crow + j, vc);
      }
      for (; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

static void axpy(int n, double alpha, const double* x, double* y) {
  const __m256d va = _mm256_set1_pd(alpha);
  const int n4 = n & ~3;
  int i = 0;
  for (; i < n4; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    __m256d vx = _mm256_loadu_pd(x + i);
    vy = _mm256_add_pd(vy, _mm256_mul_pd(va, vx));
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

static void vadd(int n, const double* x, const double* y, double* out) {
  const int n4 = n & ~3;
  int i = 0;
  for (; i < n4; i += 4)
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(x + i),
                                            _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) out[i] = x[i] + y[i];
}

static void vsub(int n, const double* x, const double* y, double* out) {
  const int n4 = n & ~3;
  int i = 0;
  for (; i < n4; i += 4)
    _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(x + i),
                                            _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) out[i] = x[i] - y[i];
}

static void vmul(int n, const double* x, const double* y, double* out) {
  const int n4 = n & ~3;
  int i = 0;
  for (; i < n4; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(x + i),
                                            _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) out[i] = x[i] * y[i];
}

static void vmul_acc(int n, const double* x, const double* y, double* out) {
  const int n4 = n & ~3;
  int i = 0;
  for (; i < n4; i += 4) {
    __m256d vo = _mm256_loadu_pd(out + i);
    vo = _mm256_add_pd(vo, _mm256_mul_pd(_mm256_loadu_pd(x + i),
                                         _mm256_loadu_pd(y + i)));
    _mm256_storeu_pd(out + i, vo);
  }
  for (; i < n; ++i) out[i] += x[i] * y[i];
}

static void vscale(int n, double alpha, const double* x, double* out) {
  const __m256d va = _mm256_set1_pd(alpha);
  const int n4 = n & ~3;
  int i = 0;
  for (; i < n4; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = alpha * x[i];
}

extern const KernelTable table = {matmul, axpy, vadd, vsub, vmul, vmul_acc, vscale};

}  // namespace priorlane::kernels::avx2

#endif
