// Compiled with -mavx2 -mfma. Nothing here may run before the dispatcher has
// confirmed CPU support.

#include "dialnav/simd/kernels.hpp"

#if defined(__x86_64__) && defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

namespace dialnav::simd {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

// 4 x 8 register tile of C, streaming over k.
inline void tile_nn_4x8(int k, const double* a, int lda, const double* b, int ldb, double* c,
                        int ldc, bool accumulate) {
  __m256d c00, c01, c10, c11, c20, c21, c30, c31;
  if (accumulate) {
    c00 = _mm256_loadu_pd(c);               c01 = _mm256_loadu_pd(c + 4);
    c10 = _mm256_loadu_pd(c + ldc);         c11 = _mm256_loadu_pd(c + ldc + 4);
    c20 = _mm256_loadu_pd(c + 2 * ldc);     c21 = _mm256_loadu_pd(c + 2 * ldc + 4);
    c30 = _mm256_loadu_pd(c + 3 * ldc);     c31 = _mm256_loadu_pd(c + 3 * ldc + 4);
  } else {
    c00 = c01 = c10 = c11 = c20 = c21 = c30 = c31 = _mm256_setzero_pd();
  }
  for (int p = 0; p < k; ++p) {
    const double* brow = b + static_cast<std::ptrdiff_t>(p) * ldb;
    const __m256d b0 = _mm256_loadu_pd(brow);
    const __m256d b1 = _mm256_loadu_pd(brow + 4);
    __m256d av = _mm256_broadcast_sd(a + p);
    c00 = _mm256_fmadd_pd(av, b0, c00); c01 = _mm256_fmadd_pd(av, b1, c01);
    av = _mm256_broadcast_sd(a + lda + p);
    c10 = _mm256_fmadd_pd(av, b0, c10); c11 = _mm256_fmadd_pd(av, b1, c11);
    av = _mm256_broadcast_sd(a + 2 * lda + p);
    c20 = _mm256_fmadd_pd(av, b0, c20); c21 = _mm256_fmadd_pd(av, b1, c21);
    av = _mm256_broadcast_sd(a + 3 * lda + p);
    c30 = _mm256_fmadd_pd(av, b0, c30); c31 = _mm256_fmadd_pd(av, b1, c31);
  }
  _mm256_storeu_pd(c, c00);               _mm256_storeu_pd(c + 4, c01);
  _mm256_storeu_pd(c + ldc, c10);         _mm256_storeu_pd(c + ldc + 4, c11);
  _mm256_storeu_pd(c + 2 * ldc, c20);     _mm256_storeu_pd(c + 2 * ldc + 4, c21);
  _mm256_storeu_pd(c + 3 * ldc, c30);     _mm256_storeu_pd(c + 3 * ldc + 4, c31);
}

// One row of C over columns [j0, n), vector body plus scalar tail.
inline void row_nn(int j0, int n, int k, const double* arow, const double* b, int ldb, double* crow,
                   bool accumulate) {
  int j = j0;
  for (; j + 4 <= n; j += 4) {
    __m256d acc = accumulate ? _mm256_loadu_pd(crow + j) : _mm256_setzero_pd();
    for (int p = 0; p < k; ++p)
      acc = _mm256_fmadd_pd(_mm256_broadcast_sd(arow + p),
                            _mm256_loadu_pd(b + static_cast<std::ptrdiff_t>(p) * ldb + j), acc);
    _mm256_storeu_pd(crow + j, acc);
  }
  for (; j < n; ++j) {
    double acc = accumulate ? crow[j] : 0.0;
    for (int p = 0; p < k; ++p) acc += arow[p] * b[static_cast<std::ptrdiff_t>(p) * ldb + j];
    crow[j] = acc;
  }
}

void gemm_nn_avx2(int m, int n, int k, const double* a, int lda, const double* b, int ldb,
                  double* c, int ldc, bool accumulate) {
  const int n8 = n - n % 8;
  int i = 0;
  for (; i + 4 <= m; i += 4) {
    const double* ablk = a + static_cast<std::ptrdiff_t>(i) * lda;
    double* cblk = c + static_cast<std::ptrdiff_t>(i) * ldc;
    for (int j = 0; j < n8; j += 8) tile_nn_4x8(k, ablk, lda, b + j, ldb, cblk + j, ldc, accumulate);
    if (n8 < n)
      for (int r = 0; r < 4; ++r)
        row_nn(n8, n, k, ablk + static_cast<std::ptrdiff_t>(r) * lda, b, ldb,
               cblk + static_cast<std::ptrdiff_t>(r) * ldc, accumulate);
  }
  for (; i < m; ++i)
    row_nn(0, n, k, a + static_cast<std::ptrdiff_t>(i) * lda, b, ldb,
           c + static_cast<std::ptrdiff_t>(i) * ldc, accumulate);
}

void gemm_nt_avx2(int m, int n, int k, const double* a, int lda, const double* b, int ldb,
                  double* c, int ldc, bool accumulate) {
  const int k4 = k - k % 4;
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<std::ptrdiff_t>(i) * lda;
    double* crow = c + static_cast<std::ptrdiff_t>(i) * ldc;
    int j = 0;
    for (; j + 4 <= n; j += 4) {
      const double* b0 = b + static_cast<std::ptrdiff_t>(j) * ldb;
      const double* b1 = b0 + ldb;
      const double* b2 = b1 + ldb;
      const double* b3 = b2 + ldb;
      __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
      __m256d s2 = _mm256_setzero_pd(), s3 = _mm256_setzero_pd();
      for (int p = 0; p < k4; p += 4) {
        const __m256d av = _mm256_loadu_pd(arow + p);
        s0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b0 + p), s0);
        s1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b1 + p), s1);
        s2 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b2 + p), s2);
        s3 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b3 + p), s3);
      }
      double r0 = hsum(s0), r1 = hsum(s1), r2 = hsum(s2), r3 = hsum(s3);
      for (int p = k4; p < k; ++p) {
        r0 += arow[p] * b0[p];
        r1 += arow[p] * b1[p];
        r2 += arow[p] * b2[p];
        r3 += arow[p] * b3[p];
      }
      if (accumulate) {
        crow[j] += r0; crow[j + 1] += r1; crow[j + 2] += r2; crow[j + 3] += r3;
      } else {
        crow[j] = r0; crow[j + 1] = r1; crow[j + 2] = r2; crow[j + 3] = r3;
      }
    }
    for (; j < n; ++j) {
      const double s = dot_avx2(arow, b + static_cast<std::ptrdiff_t>(j) * ldb, static_cast<std::size_t>(k));
      crow[j] = accumulate ? crow[j] + s : s;
    }
  }
}

void gemm_tn_avx2(int m, int n, int k, const double* a, int lda, const double* b, int ldb,
                  double* c, int ldc, bool accumulate) {
  if (!accumulate)
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) c[static_cast<std::ptrdiff_t>(i) * ldc + j] = 0.0;
  // Rows of C are updated with axpy over k; four k-rows at a time keeps C hot.
  int p = 0;
  for (; p + 4 <= k; p += 4) {
    const double* a0 = a + static_cast<std::ptrdiff_t>(p) * lda;
    const double* bp = b + static_cast<std::ptrdiff_t>(p) * ldb;
    for (int i = 0; i < m; ++i) {
      const __m256d x0 = _mm256_set1_pd(a0[i]);
      const __m256d x1 = _mm256_set1_pd(a0[lda + i]);
      const __m256d x2 = _mm256_set1_pd(a0[2 * lda + i]);
      const __m256d x3 = _mm256_set1_pd(a0[3 * lda + i]);
      double* crow = c + static_cast<std::ptrdiff_t>(i) * ldc;
      int j = 0;
      for (; j + 4 <= n; j += 4) {
        __m256d acc = _mm256_loadu_pd(crow + j);
        acc = _mm256_fmadd_pd(x0, _mm256_loadu_pd(bp + j), acc);
        acc = _mm256_fmadd_pd(x1, _mm256_loadu_pd(bp + ldb + j), acc);
        acc = _mm256_fmadd_pd(x2, _mm256_loadu_pd(bp + 2 * ldb + j), acc);
        acc = _mm256_fmadd_pd(x3, _mm256_loadu_pd(bp + 3 * ldb + j), acc);
        _mm256_storeu_pd(crow + j, acc);
      }
      for (; j < n; ++j) {
        double acc = crow[j];
        acc += a0[i] * bp[j];
        acc += a0[lda + i] * bp[ldb + j];
        acc += a0[2 * lda + i] * bp[2 * ldb + j];
        acc += a0[3 * lda + i] * bp[3 * ldb + j];
        crow[j] = acc;
      }
    }
  }
  for (; p < k; ++p) {
    const double* arow = a + static_cast<std::ptrdiff_t>(p) * lda;
    const double* brow = b + static_cast<std::ptrdiff_t>(p) * ldb;
    for (int i = 0; i < m; ++i)
      axpy_avx2(arow[i], brow, c + static_cast<std::ptrdiff_t>(i) * ldc, static_cast<std::size_t>(n));
  }
}

}  // namespace

const KernelTable* avx2_kernels_impl() {
  static const KernelTable table{Isa::avx2, dot_avx2, axpy_avx2, gemm_nn_avx2, gemm_nt_avx2,
                                 gemm_tn_avx2};
  return &table;
}

}  // namespace dialnav::simd

#else

namespace dialnav::simd {
const KernelTable* avx2_kernels_impl() { return nullptr; }
}  // namespace dialnav::simd

#endif
