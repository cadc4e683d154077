// AVX2 + FMA kernel variants. This translation unit is compiled with
// -mavx2 -mfma and must only be entered after a runtime cpuid check.

#ifdef GLOSSLM_WITH_AVX2

#include <immintrin.h>

#include <vector>

#include "glosslm/kernels.hpp"

namespace glosslm {
namespace kernels {
namespace {

#ifdef GLOSSLM_ACCUMULATE_F64

// Accumulate 8 float lanes into 8 double lanes held in a buffer.
inline void fmadd8_f64(double* acc, __m256d av, const float* b) {
  __m256 bv = _mm256_loadu_ps(b);
  __m256d blo = _mm256_cvtps_pd(_mm256_castps256_ps128(bv));
  __m256d bhi = _mm256_cvtps_pd(_mm256_extractf128_ps(bv, 1));
  _mm256_storeu_pd(acc, _mm256_fmadd_pd(av, blo, _mm256_loadu_pd(acc)));
  _mm256_storeu_pd(acc + 4, _mm256_fmadd_pd(av, bhi, _mm256_loadu_pd(acc + 4)));
}

inline double hsum_f64(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

void matmul_nn_avx2(float* c, const float* a, const float* b, int m, int k, int n) {
  std::vector<double> acc(static_cast<std::size_t>(n));
  const int n8 = n & ~7;
  for (int i = 0; i < m; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    const float* arow = a + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double av = static_cast<double>(arow[p]);
      const __m256d avv = _mm256_set1_pd(av);
      const float* brow = b + static_cast<std::size_t>(p) * n;
      int j = 0;
      for (; j < n8; j += 8) fmadd8_f64(&acc[j], avv, brow + j);
      for (; j < n; ++j) acc[j] += av * static_cast<double>(brow[j]);
    }
    float* crow = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) crow[j] = static_cast<float>(acc[j]);
  }
}

void matmul_nt_avx2(float* c, const float* a, const float* b, int m, int k, int n) {
  const int k8 = k & ~7;
  for (int i = 0; i < m; ++i) {
    const float* arow = a + static_cast<std::size_t>(i) * k;
    float* crow = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const float* brow = b + static_cast<std::size_t>(j) * k;
      __m256d s0 = _mm256_setzero_pd();
      __m256d s1 = _mm256_setzero_pd();
      int p = 0;
      for (; p < k8; p += 8) {
        __m256 av = _mm256_loadu_ps(arow + p);
        __m256 bv = _mm256_loadu_ps(brow + p);
        __m256d alo = _mm256_cvtps_pd(_mm256_castps256_ps128(av));
        __m256d ahi = _mm256_cvtps_pd(_mm256_extractf128_ps(av, 1));
        __m256d blo = _mm256_cvtps_pd(_mm256_castps256_ps128(bv));
        __m256d bhi = _mm256_cvtps_pd(_mm256_extractf128_ps(bv, 1));
        s0 = _mm256_fmadd_pd(alo, blo, s0);
        s1 = _mm256_fmadd_pd(ahi, bhi, s1);
      }
      double s = hsum_f64(_mm256_add_pd(s0, s1));
      for (; p < k; ++p) s += static_cast<double>(arow[p]) * static_cast<double>(brow[p]);
      crow[j] = static_cast<float>(s);
    }
  }
}

void matmul_tn_avx2(float* c, const float* a, const float* b, int m, int k, int n) {
  std::vector<double> acc(static_cast<std::size_t>(n));
  const int n8 = n & ~7;
  for (int i = 0; i < k; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (int r = 0; r < m; ++r) {
      const double av = static_cast<double>(a[static_cast<std::size_t>(r) * k + i]);
      const __m256d avv = _mm256_set1_pd(av);
      const float* brow = b + static_cast<std::size_t>(r) * n;
      int j = 0;
      for (; j < n8; j += 8) fmadd8_f64(&acc[j], avv, brow + j);
      for (; j < n; ++j) acc[j] += av * static_cast<double>(brow[j]);
    }
    float* crow = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) crow[j] = static_cast<float>(acc[j]);
  }
}

#else  // float accumulation

inline float hsum_f32(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  lo = _mm_add_ps(lo, _mm_movehl_ps(lo, lo));
  lo = _mm_add_ss(lo, _mm_movehdup_ps(lo));
  return _mm_cvtss_f32(lo);
}

void matmul_nn_avx2(float* c, const float* a, const float* b, int m, int k, int n) {
  const int n8 = n & ~7;
  for (int i = 0; i < m; ++i) {
    const float* arow = a + static_cast<std::size_t>(i) * k;
    float* crow = c + static_cast<std::size_t>(i) * n;
    std::fill(crow, crow + n, 0.0f);
    for (int p = 0; p < k; ++p) {
      const __m256 avv = _mm256_set1_ps(arow[p]);
      const float* brow = b + static_cast<std::size_t>(p) * n;
      int j = 0;
      for (; j < n8; j += 8) {
        __m256 cv = _mm256_loadu_ps(crow + j);
        _mm256_storeu_ps(crow + j, _mm256_fmadd_ps(avv, _mm256_loadu_ps(brow + j), cv));
      }
      for (; j < n; ++j) crow[j] += arow[p] * brow[j];
    }
  }
}

void matmul_nt_avx2(float* c, const float* a, const float* b, int m, int k, int n) {
  const int k8 = k & ~7;
  for (int i = 0; i < m; ++i) {
    const float* arow = a + static_cast<std::size_t>(i) * k;
    float* crow = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const float* brow = b + static_cast<std::size_t>(j) * k;
      __m256 s = _mm256_setzero_ps();
      int p = 0;
      for (; p < k8; p += 8)
        s = _mm256_fmadd_ps(_mm256_loadu_ps(arow + p), _mm256_loadu_ps(brow + p), s);
      float acc = hsum_f32(s);
      for (; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] = acc;
    }
  }
}

void matmul_tn_avx2(float* c, const float* a, const float* b, int m, int k, int n) {
  const int n8 = n & ~7;
  for (int i = 0; i < k; ++i) {
    float* crow = c + static_cast<std::size_t>(i) * n;
    std::fill(crow, crow + n, 0.0f);
    for (int r = 0; r < m; ++r) {
      const __m256 avv = _mm256_set1_ps(a[static_cast<std::size_t>(r) * k + i]);
      const float* brow = b + static_cast<std::size_t>(r) * n;
      int j = 0;
      for (; j < n8; j += 8) {
        __m256 cv = _mm256_loadu_ps(crow + j);
        _mm256_storeu_ps(crow + j, _mm256_fmadd_ps(avv, _mm256_loadu_ps(brow + j), cv));
      }
      for (; j < n; ++j) crow[j] += a[static_cast<std::size_t>(r) * k + i] * brow[j];
    }
  }
}

#endif  // GLOSSLM_ACCUMULATE_F64

void add_avx2(float* out, const float* x, const float* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_add_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) out[i] = x[i] + y[i];
}

void mul_avx2(float* out, const float* x, const float* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) out[i] = x[i] * y[i];
}

void axpy_avx2(float* y, float alpha, const float* x, std::size_t n) {
  const __m256 av = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale_avx2(float* x, float alpha, std::size_t n) {
  const __m256 av = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(x + i, _mm256_mul_ps(av, _mm256_loadu_ps(x + i)));
  for (; i < n; ++i) x[i] *= alpha;
}

double sum_sq_avx2(const float* x, std::size_t n) {
  __m256d s0 = _mm256_setzero_pd();
  __m256d s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 v = _mm256_loadu_ps(x + i);
    __m256d lo = _mm256_cvtps_pd(_mm256_castps256_ps128(v));
    __m256d hi = _mm256_cvtps_pd(_mm256_extractf128_ps(v, 1));
    s0 = _mm256_fmadd_pd(lo, lo, s0);
    s1 = _mm256_fmadd_pd(hi, hi, s1);
  }
  __m256d s = _mm256_add_pd(s0, s1);
  __m128d l = _mm_add_pd(_mm256_castpd256_pd128(s), _mm256_extractf128_pd(s, 1));
  double total = _mm_cvtsd_f64(_mm_add_sd(l, _mm_unpackhi_pd(l, l)));
  for (; i < n; ++i) total += static_cast<double>(x[i]) * static_cast<double>(x[i]);
  return total;
}

}  // namespace

const Backend* avx2_backend() {
  static const Backend backend = {
      "avx2",    matmul_nn_avx2, matmul_nt_avx2, matmul_tn_avx2,
      add_avx2,  mul_avx2,       axpy_avx2,      scale_avx2,
      sum_sq_avx2,
  };
  return &backend;
}

}  // namespace kernels
}  // namespace glosslm

#endif  // GLOSSLM_WITH_AVX2
