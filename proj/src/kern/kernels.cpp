#include "vidyn/kern/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace vidyn::kern {

namespace {

void matvec_scalar(double* y, const double* W, const double* x,
                   std::size_t rows, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double* row = W + i * cols;
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) acc += row[j] * x[j];
    y[i] = acc;
  }
}

void matvec_t_acc_scalar(double* y, const double* W, const double* a,
                         std::size_t rows, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double* row = W + i * cols;
    const double ai = a[i];
    for (std::size_t j = 0; j < cols; ++j) y[j] += ai * row[j];
  }
}

void ger_acc_scalar(double* A, const double* a, const double* x,
                    std::size_t rows, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) {
    double* row = A + i * cols;
    const double ai = a[i];
    for (std::size_t j = 0; j < cols; ++j) row[j] += ai * x[j];
  }
}

double dot_scalar(const double* x, const double* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void axpy_scalar(double* y, double alpha, const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void add_acc_scalar(double* y, const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += x[i];
}

void mul_scalar(double* z, const double* x, const double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) z[i] = x[i] * y[i];
}

void mul_acc_scalar(double* z, const double* x, const double* y,
                    std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) z[i] += x[i] * y[i];
}

void scale_scalar(double* x, double alpha, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

void gru_blend_scalar(double* h_out, const double* p, const double* h,
                      const double* r, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    h_out[i] = (1.0 - p[i]) * h[i] + p[i] * r[i];
}

const KernelTable kScalarTable = {
    matvec_scalar, matvec_t_acc_scalar, ger_acc_scalar, dot_scalar,
    axpy_scalar,   add_acc_scalar,      mul_scalar,     mul_acc_scalar,
    scale_scalar,  gru_blend_scalar,
};

bool cpu_has_avx2_fma() {
#ifdef VIDYN_HAVE_AVX2_LANE
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

struct Dispatch {
  Backend backend;
  const KernelTable* tab;

  Dispatch() {
    backend = Backend::kScalar;
    tab = &kScalarTable;
#ifdef VIDYN_HAVE_AVX2_LANE
    if (cpu_has_avx2_fma()) {
      backend = Backend::kAvx2;
      tab = &avx2_table();
    }
#endif
    if (const char* env = std::getenv("VIDYN_KERNEL")) {
      if (std::strcmp(env, "scalar") == 0) {
        backend = Backend::kScalar;
        tab = &kScalarTable;
      }
#ifdef VIDYN_HAVE_AVX2_LANE
      else if (std::strcmp(env, "avx2") == 0 && cpu_has_avx2_fma()) {
        backend = Backend::kAvx2;
        tab = &avx2_table();
      }
#endif
    }
  }
};

Dispatch& dispatch() {
  static Dispatch d;
  return d;
}

}  // namespace

Backend active_backend() { return dispatch().backend; }

bool backend_supported(Backend b) {
  if (b == Backend::kScalar) return true;
  return cpu_has_avx2_fma();
}

bool set_backend(Backend b) {
  if (!backend_supported(b)) return false;
  Dispatch& d = dispatch();
  d.backend = b;
  if (b == Backend::kScalar) {
    d.tab = &kScalarTable;
  }
#ifdef VIDYN_HAVE_AVX2_LANE
  else {
    d.tab = &avx2_table();
  }
#endif
  return true;
}

const char* backend_name(Backend b) {
  return b == Backend::kScalar ? "scalar" : "avx2";
}

const KernelTable& table() { return *dispatch().tab; }

const KernelTable& scalar_table() { return kScalarTable; }

}  // namespace vidyn::kern
