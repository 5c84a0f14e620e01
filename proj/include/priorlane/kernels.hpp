#pragma once

// Dense f64 inner loops used by the tensor engine. Every kernel exists as a
// scalar reference and, where the hardware supports it, a SIMD variant
// (AVX2 on x86-64, NEON on aarch64) selected at runtime. The SIMD variants
// vectorize across independent output elements only, so each element is
// accumulated in the same order as the scalar kernel and the two paths
// produce bit-identical results.

#include <cstddef>

namespace priorlane::kernels {

enum class Backend { scalar, avx2, neon };

// Currently active backend. Chosen automatically on first use: the widest
// SIMD variant the CPU reports, unless the PRIORLANE_KERNELS environment
// variable ("scalar", "avx2", "neon", "auto") says otherwise.
Backend active_backend();
const char* backend_name(Backend b);
bool backend_supported(Backend b);

// Force a backend. Returns false (and leaves the selection unchanged) if the
// host cannot run it.
bool set_backend(Backend b);
// Back to automatic selection.
void reset_backend();

// c[m x n] = a[m x k] * b[k x n], row-major. accumulate adds into c.
void matmul(const double* a, const double* b, double* c, int m, int k, int n,
            bool accumulate = false);

// y[i] += alpha * x[i]
void axpy(int n, double alpha, const double* x, double* y);

// out[i] = x[i] op y[i]
void vadd(int n, const double* x, const double* y, double* out);
void vsub(int n, const double* x, const double* y, double* out);
void vmul(int n, const double* x, const double* y, double* out);
// out[i] += x[i] * y[i]
void vmul_acc(int n, const double* x, const double* y, double* out);
// out[i] = alpha * x[i]
void vscale(int n, double alpha, const double* x, double* out);

}  // namespace priorlane::kernels
