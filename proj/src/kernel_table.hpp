#pragma once

// Internal: per-backend function table. Each backend translation unit
// defines one of these; dispatch lives in kernels.cpp.

namespace priorlane::kernels {

struct KernelTable {
  void (*matmul)(const double*, const double*, double*, int, int, int, bool);
  void (*axpy)(int, double, const double*, double*);
  void (*vadd)(int, const double*, const double*, double*);
  void (*vsub)(int, const double*, const double*, double*);
  void (*vmul)(int, const double*, const double*, double*);
  void (*vmul_acc)(int, const double*, const double*, double*);
  void (*vscale)(int, double, const double*, double*);
};

}  // namespace priorlane::kernels
