#pragma once

#include <cstddef>

// Dense level-2 kernels behind the network forward/backward passes. Two lanes
// share one signature table: a portable scalar lane and an AVX2+FMA lane with
// scalar tails. The lane is chosen once at startup from CPU capabilities and
// can be overridden (env VIDYN_KERNEL=scalar|avx2, or set_backend).
//
// Elementwise transcendentals (exp, tanh) are deliberately not part of this
// table; they go through libm in all lanes so only reduction order differs
// between lanes.
namespace vidyn::kern {

enum class Backend { kScalar, kAvx2 };

// Lane active for subsequent kernel calls.
Backend active_backend();
// Selects a lane; returns false (and leaves the lane unchanged) if the CPU
// cannot run it.
bool set_backend(Backend b);
bool backend_supported(Backend b);
const char* backend_name(Backend b);

struct KernelTable {
  // y = W x, W row-major rows x cols.
  void (*matvec)(double* y, const double* W, const double* x, std::size_t rows,
                 std::size_t cols);
  // y += W^T a, W row-major rows x cols, a[rows], y[cols].
  void (*matvec_t_acc)(double* y, const double* W, const double* a,
                       std::size_t rows, std::size_t cols);
  // A += a x^T, A row-major rows x cols.
  void (*ger_acc)(double* A, const double* a, const double* x,
                  std::size_t rows, std::size_t cols);
  double (*dot)(const double* x, const double* y, std::size_t n);
  // y += alpha * x.
  void (*axpy)(double* y, double alpha, const double* x, std::size_t n);
  // y += x.
  void (*add_acc)(double* y, const double* x, std::size_t n);
  // z = x .* y.
  void (*mul)(double* z, const double* x, const double* y, std::size_t n);
  // z += x .* y.
  void (*mul_acc)(double* z, const double* x, const double* y, std::size_t n);
  // x *= alpha.
  void (*scale)(double* x, double alpha, std::size_t n);
  // h_out = (1 - p) .* h + p .* r  (gate blend of the recurrent update).
  void (*gru_blend)(double* h_out, const double* p, const double* h,
                    const double* r, std::size_t n);
};

const KernelTable& table();

inline void matvec(double* y, const double* W, const double* x,
                   std::size_t rows, std::size_t cols) {
  table().matvec(y, W, x, rows, cols);
}
inline void matvec_t_acc(double* y, const double* W, const double* a,
                         std::size_t rows, std::size_t cols) {
  table().matvec_t_acc(y, W, a, rows, cols);
}
inline void ger_acc(double* A, const double* a, const double* x,
                    std::size_t rows, std::size_t cols) {
  table().ger_acc(A, a, x, rows, cols);
}
inline double dot(const double* x, const double* y, std::size_t n) {
  return table().dot(x, y, n);
}
inline void axpy(double* y, double alpha, const double* x, std::size_t n) {
  table().axpy(y, alpha, x, n);
}
inline void add_acc(double* y, const double* x, std::size_t n) {
  table().add_acc(y, x, n);
}
inline void mul(double* z, const double* x, const double* y, std::size_t n) {
  table().mul(z, x, y, n);
}
inline void mul_acc(double* z, const double* x, const double* y,
                    std::size_t n) {
  table().mul_acc(z, x, y, n);
}
inline void scale(double* x, double alpha, std::size_t n) {
  table().scale(x, alpha, n);
}
inline void gru_blend(double* h_out, const double* p, const double* h,
                      const double* r, std::size_t n) {
  table().gru_blend(h_out, p, h, r, n);
}

// Lane tables, exposed for equivalence tests.
const KernelTable& scalar_table();
#ifdef VIDYN_HAVE_AVX2_LANE
const KernelTable& avx2_table();
#endif

}  // namespace vidyn::kern
