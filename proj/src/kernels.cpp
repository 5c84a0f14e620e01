#include "priorlane/kernels.hpp"

#include <cstdlib>
#include <cstring>
#include <string>

#include "kernel_table.hpp"

namespace priorlane::kernels {

namespace scalar {

void matmul(const double* a, const double* b, double* c, int m, int k, int n,
            bool accumulate) {
  if (!accumulate) std::memset(c, 0, sizeof(double) * size_t(m) * size_t(n));
  for (int i = 0; i < m; ++i) {
    double* crow = c + size_t(i) * n;
    const double* arow = a + size_t(i) * k;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + size_t(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void axpy(int n, double alpha, const double* x, double* y) {
  for (int i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void vadd(int n, const double* x, const double* y, double* out) {
  for (int i = 0; i < n; ++i) out[i] = x[i] + y[i];
}

void vsub(int n, const double* x, const double* y, double* out) {
  for (int i = 0; i < n; ++i) out[i] = x[i] - y[i];
}

void vmul(int n, const double* x, const double* y, double* out) {
  for (int i = 0; i < n; ++i) out[i] = x[i] * y[i];
}

void vmul_acc(int n, const double* x, const double* y, double* out) {
  for (int i = 0; i < n; ++i) out[i] += x[i] * y[i];
}

void vscale(int n, double alpha, const double* x, double* out) {
  for (int i = 0; i < n; ++i) out[i] = alpha * x[i];
}

}  // namespace scalar

static const KernelTable kScalarTable = {
    scalar::matmul, scalar::axpy, scalar::vadd, scalar::vsub,
    scalar::vmul,   scalar::vmul_acc, scalar::vscale};

#if defined(__x86_64__) || defined(_M_X64)
namespace avx2 {
extern const KernelTable table;
}
static bool host_has_avx2() { return __builtin_cpu_supports("avx2"); }
#else
static bool host_has_avx2() { return false; }
#endif

#if defined(__aarch64__)
namespace neon {
extern const KernelTable table;
}
static bool host_has_neon() { return true; }
#else
static bool host_has_neon() { return false; }
#endif

bool backend_supported(Backend b) {
  switch (b) {
    case Backend::scalar: return true;
    case Backend::avx2: return host_has_avx2();
    case Backend::neon: return host_has_neon();
  }
  return false;
}

static const KernelTable* table_for(Backend b) {
  switch (b) {
    case Backend::scalar: return &kScalarTable;
#if defined(__x86_64__) || defined(_M_X64)
    case Backend::avx2: return &avx2::table;
#endif
#if defined(__aarch64__)
    case Backend::neon: return &neon::table;
#endif
    default: return &kScalarTable;
  }
}

static Backend auto_backend() {
  if (const char* env = std::getenv("PRIORLANE_KERNELS")) {
    std::string s(env);
    if (s == "scalar") return Backend::scalar;
    if (s == "avx2" && host_has_avx2()) return Backend::avx2;
    if (s == "neon" && host_has_neon()) return Backend::neon;
    // "auto" or an unusable request falls through to detection.
  }
  if (host_has_avx2()) return Backend::avx2;
  if (host_has_neon()) return Backend::neon;
  return Backend::scalar;
}

namespace {
struct Dispatch {
  Backend backend;
  const KernelTable* table;
  Dispatch() : backend(auto_backend()), table(table_for(backend)) {}
};
Dispatch& dispatch() {
  static Dispatch d;
  return d;
}
}  // namespace

Backend active_backend() { return dispatch().backend; }

const char* backend_name(Backend b) {
  switch (b) {
    case Backend::scalar: return "scalar";
    case Backend::avx2: return "avx2";
    case Backend::neon: return "neon";
  }
  return "?";
}

bool set_backend(Backend b) {
  if (!backend_supported(b)) return false;
  dispatch().backend = b;
  dispatch().table = table_for(b);
  return true;
}

void reset_backend() {
  dispatch().backend = auto_backend();
  dispatch().table = table_for(dispatch().backend);
}

void matmul(const double* a, const double* b, double* c, int m, int k, int n,
            bool accumulate) {
  dispatch().table->matmul(a, b, c, m, k, n, accumulate);
}
void axpy(int n, double alpha, const double* x, double* y) {
  dispatch().table->axpy(n, alpha, x, y);
}
void vadd(int n, const double* x, const double* y, double* out) {
  dispatch().table->vadd(n, x, y, out);
}
void vsub(int n, const double* x, const double* y, double* out) {
  dispatch().table->vsub(n, x, y, out);
}
void vmul(int n, const double* x, const double* y, double* out) {
  dispatch().table->vmul(n, x, y, out);
}
void vmul_acc(int n, const double* x, const double* y, double* out) {
  dispatch().table->vmul_acc(n, x, y, out);
}
void vscale(int n, double alpha, const double* x, double* out) {
  dispatch().table->vscale(n, alpha, x, out);
}

}  // namespace priorlane::kernels
