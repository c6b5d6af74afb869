// AVX2+FMA lane. Compiled with -mavx2 -mfma; only reached after a runtime
// CPU check, so the unguarded intrinsics here are safe.
//
// FMA appears only inside the two reductions (matvec, dot), whose summation
// order already differs from the scalar lane. Elementwise updates use separate
// mul+add so they round exactly like the scalar lane and stay bit-identical.
#include "vidyn/kern/kernels.hpp"

#ifdef VIDYN_HAVE_AVX2_LANE

#include <immintrin.h>

namespace vidyn::kern {

namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d swapped = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, swapped));
}

void matvec_avx2(double* y, const double* W, const double* x, std::size_t rows,
                 std::size_t cols) {
  const std::size_t tail = cols & 3;
  const std::size_t main = cols - tail;
  for (std::size_t i = 0; i < rows; ++i) {
    const double* row = W + i * cols;
    __m256d acc = _mm256_setzero_pd();
    for (std::size_t j = 0; j < main; j += 4)
      acc = _mm256_fmadd_pd(_mm256_loadu_pd(row + j), _mm256_loadu_pd(x + j),
                            acc);
    double s = hsum(acc);
    for (std::size_t j = main; j < cols; ++j) s += row[j] * x[j];
    y[i] = s;
  }
}

void matvec_t_acc_avx2(double* y, const double* W, const double* a,
                       std::size_t rows, std::size_t cols) {
  const std::size_t tail = cols & 3;
  const std::size_t main = cols - tail;
  for (std::size_t i = 0; i < rows; ++i) {
    const double* row = W + i * cols;
    const __m256d ai = _mm256_set1_pd(a[i]);
    for (std::size_t j = 0; j < main; j += 4) {
      __m256d yj = _mm256_loadu_pd(y + j);
      yj = _mm256_add_pd(yj, _mm256_mul_pd(ai, _mm256_loadu_pd(row + j)));
      _mm256_storeu_pd(y + j, yj);
    }
    for (std::size_t j = main; j < cols; ++j) y[j] += a[i] * row[j];
  }
}

void ger_acc_avx2(double* A, const double* a, const double* x,
                  std::size_t rows, std::size_t cols) {
  const std::size_t tail = cols & 3;
  const std::size_t main = cols - tail;
  for (std::size_t i = 0; i < rows; ++i) {
    double* row = A + i * cols;
    const __m256d ai = _mm256_set1_pd(a[i]);
    for (std::size_t j = 0; j < main; j += 4) {
      __m256d rj = _mm256_loadu_pd(row + j);
      rj = _mm256_add_pd(rj, _mm256_mul_pd(ai, _mm256_loadu_pd(x + j)));
      _mm256_storeu_pd(row + j, rj);
    }
    for (std::size_t j = main; j < cols; ++j) row[j] += a[i] * x[j];
  }
}

double dot_avx2(const double* x, const double* y, std::size_t n) {
  const std::size_t tail = n & 3;
  const std::size_t main = n - tail;
  __m256d acc = _mm256_setzero_pd();
  for (std::size_t i = 0; i < main; i += 4)
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc);
  double s = hsum(acc);
  for (std::size_t i = main; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy_avx2(double* y, double alpha, const double* x, std::size_t n) {
  const std::size_t tail = n & 3;
  const std::size_t main = n - tail;
  const __m256d va = _mm256_set1_pd(alpha);
  for (std::size_t i = 0; i < main; i += 4) {
    __m256d yi = _mm256_loadu_pd(y + i);
    yi = _mm256_add_pd(yi, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
    _mm256_storeu_pd(y + i, yi);
  }
  for (std::size_t i = main; i < n; ++i) y[i] += alpha * x[i];
}

void add_acc_avx2(double* y, const double* x, std::size_t n) {
  const std::size_t tail = n & 3;
  const std::size_t main = n - tail;
  for (std::size_t i = 0; i < main; i += 4) {
    const __m256d yi =
        _mm256_add_pd(_mm256_loadu_pd(y + i), _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(y + i, yi);
  }
  for (std::size_t i = main; i < n; ++i) y[i] += x[i];
}

void mul_avx2(double* z, const double* x, const double* y, std::size_t n) {
  const std::size_t tail = n & 3;
  const std::size_t main = n - tail;
  for (std::size_t i = 0; i < main; i += 4)
    _mm256_storeu_pd(
        z + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (std::size_t i = main; i < n; ++i) z[i] = x[i] * y[i];
}

void mul_acc_avx2(double* z, const double* x, const double* y, std::size_t n) {
  const std::size_t tail = n & 3;
  const std::size_t main = n - tail;
  for (std::size_t i = 0; i < main; i += 4) {
    __m256d zi = _mm256_loadu_pd(z + i);
    zi = _mm256_add_pd(zi, _mm256_mul_pd(_mm256_loadu_pd(x + i),
                                         _mm256_loadu_pd(y + i)));
    _mm256_storeu_pd(z + i, zi);
  }
  for (std::size_t i = main; i < n; ++i) z[i] += x[i] * y[i];
}

void scale_avx2(double* x, double alpha, std::size_t n) {
  const std::size_t tail = n & 3;
  const std::size_t main = n - tail;
  const __m256d va = _mm256_set1_pd(alpha);
  for (std::size_t i = 0; i < main; i += 4)
    _mm256_storeu_pd(x + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  for (std::size_t i = main; i < n; ++i) x[i] *= alpha;
}

void gru_blend_avx2(double* h_out, const double* p, const double* h,
                    const double* r, std::size_t n) {
  const std::size_t tail = n & 3;
  const std::size_t main = n - tail;
  const __m256d one = _mm256_set1_pd(1.0);
  for (std::size_t i = 0; i < main; i += 4) {
    const __m256d pi = _mm256_loadu_pd(p + i);
    const __m256d keep = _mm256_mul_pd(_mm256_sub_pd(one, pi),
                                       _mm256_loadu_pd(h + i));
    const __m256d out =
        _mm256_add_pd(keep, _mm256_mul_pd(pi, _mm256_loadu_pd(r + i)));
    _mm256_storeu_pd(h_out + i, out);
  }
  for (std::size_t i = main; i < n; ++i)
    h_out[i] = (1.0 - p[i]) * h[i] + p[i] * r[i];
}

const KernelTable kAvx2Table = {
    matvec_avx2, matvec_t_acc_avx2, ger_acc_avx2, dot_avx2,     axpy_avx2,
    add_acc_avx2, mul_avx2,         mul_acc_avx2, scale_avx2,   gru_blend_avx2,
};

}  // namespace

const KernelTable& avx2_table() { return kAvx2Table; }

}  // namespace vidyn::kern

#endif  // VIDYN_HAVE_AVX2_LANE
