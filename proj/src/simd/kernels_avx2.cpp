#include "qmri/simd/kernels.hpp"

#include <algorithm>

#if defined(__x86_64__) || defined(_M_X64)
#define QMRI_HAVE_X86 1
#include <immintrin.h>
#else
#define QMRI_HAVE_X86 0
#endif

namespace qmri::simd {

#if QMRI_HAVE_X86

#define QMRI_AVX2 __attribute__((target("avx2,fma")))

namespace {

constexpr std::size_t kPanelCols = 256;

QMRI_AVX2 inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

// 4 rows × 8 columns of C, streaming over k.
QMRI_AVX2 inline void micro_4x8(std::size_t k, const double* a, std::size_t lda, const double* b,
                                std::size_t ldb, double* c, std::size_t ldc) {
  __m256d c00 = _mm256_loadu_pd(c), c01 = _mm256_loadu_pd(c + 4);
  __m256d c10 = _mm256_loadu_pd(c + ldc), c11 = _mm256_loadu_pd(c + ldc + 4);
  __m256d c20 = _mm256_loadu_pd(c + 2 * ldc), c21 = _mm256_loadu_pd(c + 2 * ldc + 4);
  __m256d c30 = _mm256_loadu_pd(c + 3 * ldc), c31 = _mm256_loadu_pd(c + 3 * ldc + 4);
  for (std::size_t p = 0; p < k; ++p) {
    const __m256d b0 = _mm256_loadu_pd(b + p * ldb);
    const __m256d b1 = _mm256_loadu_pd(b + p * ldb + 4);
    __m256d av = _mm256_broadcast_sd(a + p);
    c00 = _mm256_fmadd_pd(av, b0, c00);
    c01 = _mm256_fmadd_pd(av, b1, c01);
    av = _mm256_broadcast_sd(a + lda + p);
    c10 = _mm256_fmadd_pd(av, b0, c10);
    c11 = _mm256_fmadd_pd(av, b1, c11);
    av = _mm256_broadcast_sd(a + 2 * lda + p);
    c20 = _mm256_fmadd_pd(av, b0, c20);
    c21 = _mm256_fmadd_pd(av, b1, c21);
    av = _mm256_broadcast_sd(a + 3 * lda + p);
    c30 = _mm256_fmadd_pd(av, b0, c30);
    c31 = _mm256_fmadd_pd(av, b1, c31);
  }
  _mm256_storeu_pd(c, c00);
  _mm256_storeu_pd(c + 4, c01);
  _mm256_storeu_pd(c + ldc, c10);
  _mm256_storeu_pd(c + ldc + 4, c11);
  _mm256_storeu_pd(c + 2 * ldc, c20);
  _mm256_storeu_pd(c + 2 * ldc + 4, c21);
  _mm256_storeu_pd(c + 3 * ldc, c30);
  _mm256_storeu_pd(c + 3 * ldc + 4, c31);
}

QMRI_AVX2 inline void micro_1x8(std::size_t k, const double* a, const double* b, std::size_t ldb,
                                double* c) {
  __m256d c0 = _mm256_loadu_pd(c), c1 = _mm256_loadu_pd(c + 4);
  for (std::size_t p = 0; p < k; ++p) {
    const __m256d av = _mm256_broadcast_sd(a + p);
    c0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b + p * ldb), c0);
    c1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b + p * ldb + 4), c1);
  }
  _mm256_storeu_pd(c, c0);
  _mm256_storeu_pd(c + 4, c1);
}

QMRI_AVX2 void gemm_nn_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a,
                            std::size_t lda, const double* b, std::size_t ldb, double* c,
                            std::size_t ldc) {
  for (std::size_t j0 = 0; j0 < n; j0 += kPanelCols) {
    const std::size_t jn = std::min(n, j0 + kPanelCols);
    const std::size_t jv = j0 + ((jn - j0) / 8) * 8;
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
      for (std::size_t j = j0; j < jv; j += 8) micro_4x8(k, a + i * lda, lda, b + j, ldb, c + i * ldc + j, ldc);
    }
    for (; i < m; ++i) {
      for (std::size_t j = j0; j < jv; j += 8) micro_1x8(k, a + i * lda, b + j, ldb, c + i * ldc + j);
    }
    if (jv < jn) {
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t p = 0; p < k; ++p) {
          const double arp = a[r * lda + p];
          for (std::size_t j = jv; j < jn; ++j) c[r * ldc + j] += arp * b[p * ldb + j];
        }
    }
  }
}

QMRI_AVX2 double dot_avx2(std::size_t n, const double* x, const double* y) {
  __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), s1);
  }
  double s = hsum(_mm256_add_pd(s0, s1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

// C[i][j] += <A_i, B_j>; 2 rows of A against 4 rows of B at a time.
QMRI_AVX2 void gemm_nt_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a,
                            std::size_t lda, const double* b, std::size_t ldb, double* c,
                            std::size_t ldc) {
  const std::size_t kv = (k / 4) * 4;
  std::size_t i = 0;
  for (; i + 2 <= m; i += 2) {
    const double* a0 = a + i * lda;
    const double* a1 = a0 + lda;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      const double* b0 = b + j * ldb;
      const double* b1 = b0 + ldb;
      const double* b2 = b1 + ldb;
      const double* b3 = b2 + ldb;
      __m256d s00 = _mm256_setzero_pd(), s01 = _mm256_setzero_pd(), s02 = _mm256_setzero_pd(),
              s03 = _mm256_setzero_pd(), s10 = _mm256_setzero_pd(), s11 = _mm256_setzero_pd(),
              s12 = _mm256_setzero_pd(), s13 = _mm256_setzero_pd();
      for (std::size_t p = 0; p < kv; p += 4) {
        const __m256d va0 = _mm256_loadu_pd(a0 + p), va1 = _mm256_loadu_pd(a1 + p);
        __m256d vb = _mm256_loadu_pd(b0 + p);
        s00 = _mm256_fmadd_pd(va0, vb, s00);
        s10 = _mm256_fmadd_pd(va1, vb, s10);
        vb = _mm256_loadu_pd(b1 + p);
        s01 = _mm256_fmadd_pd(va0, vb, s01);
        s11 = _mm256_fmadd_pd(va1, vb, s11);
        vb = _mm256_loadu_pd(b2 + p);
        s02 = _mm256_fmadd_pd(va0, vb, s02);
        s12 = _mm256_fmadd_pd(va1, vb, s12);
        vb = _mm256_loadu_pd(b3 + p);
        s03 = _mm256_fmadd_pd(va0, vb, s03);
        s13 = _mm256_fmadd_pd(va1, vb, s13);
      }
      double r[2][4] = {{hsum(s00), hsum(s01), hsum(s02), hsum(s03)},
                        {hsum(s10), hsum(s11), hsum(s12), hsum(s13)}};
      for (std::size_t p = kv; p < k; ++p) {
        for (int q = 0; q < 4; ++q) {
          r[0][q] += a0[p] * b[(j + q) * ldb + p];
          r[1][q] += a1[p] * b[(j + q) * ldb + p];
        }
      }
      for (int q = 0; q < 4; ++q) {
        c[i * ldc + j + q] += r[0][q];
        c[(i + 1) * ldc + j + q] += r[1][q];
      }
    }
    for (; j < n; ++j) {
      c[i * ldc + j] += dot_avx2(k, a0, b + j * ldb);
      c[(i + 1) * ldc + j] += dot_avx2(k, a1, b + j * ldb);
    }
  }
  for (; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) c[i * ldc + j] += dot_avx2(k, a + i * lda, b + j * ldb);
}

QMRI_AVX2 void axpy_avx2(std::size_t n, double alpha, const double* x, double* y) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

// Two interleaved complex values per register: [re0, im0, re1, im1].
QMRI_AVX2 void cmul_avx2(std::size_t n, const cplx* a, const cplx* b, cplx* out) {
  const double* pa = reinterpret_cast<const double*>(a);
  const double* pb = reinterpret_cast<const double*>(b);
  double* po = reinterpret_cast<double*>(out);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const __m256d va = _mm256_loadu_pd(pa + 2 * i);
    const __m256d vb = _mm256_loadu_pd(pb + 2 * i);
    const __m256d bre = _mm256_movedup_pd(vb);
    const __m256d bim = _mm256_permute_pd(vb, 0xF);
    const __m256d aswap = _mm256_permute_pd(va, 0x5);
    _mm256_storeu_pd(po + 2 * i, _mm256_fmaddsub_pd(va, bre, _mm256_mul_pd(aswap, bim)));
  }
  for (; i < n; ++i) {
    const double ar = a[i].real(), ai = a[i].imag(), br = b[i].real(), bi = b[i].imag();
    out[i] = cplx(ar * br - ai * bi, ar * bi + ai * br);
  }
}

QMRI_AVX2 void cmul_conj_acc_avx2(std::size_t n, const cplx* s, const cplx* z, cplx* out) {
  const double* ps = reinterpret_cast<const double*>(s);
  const double* pz = reinterpret_cast<const double*>(z);
  double* po = reinterpret_cast<double*>(out);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const __m256d vs = _mm256_loadu_pd(ps + 2 * i);
    const __m256d vz = _mm256_loadu_pd(pz + 2 * i);
    const __m256d sre = _mm256_movedup_pd(vs);
    const __m256d sim = _mm256_permute_pd(vs, 0xF);
    const __m256d zswap = _mm256_permute_pd(vz, 0x5);
    const __m256d prod = _mm256_fmsubadd_pd(vz, sre, _mm256_mul_pd(zswap, sim));
    _mm256_storeu_pd(po + 2 * i, _mm256_add_pd(_mm256_loadu_pd(po + 2 * i), prod));
  }
  for (; i < n; ++i) {
    const double sr = s[i].real(), si = s[i].imag(), zr = z[i].real(), zi = z[i].imag();
    out[i] += cplx(sr * zr + si * zi, sr * zi - si * zr);
  }
}

bool cpu_has_avx2_fma() {
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}

}  // namespace

const KernelTable* avx2_kernels() {
  static const KernelTable table{"avx2",    gemm_nn_avx2, gemm_nt_avx2,      dot_avx2,
                                 axpy_avx2, cmul_avx2,    cmul_conj_acc_avx2};
  static const bool supported = cpu_has_avx2_fma();
  return supported ? &table : nullptr;
}

#else

const KernelTable* avx2_kernels() { return nullptr; }

#endif

}  // namespace qmri::simd
