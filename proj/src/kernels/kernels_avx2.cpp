#include <immintrin.h>

#include <cstddef>

#include "kernels_internal.hpp"

// AVX2+FMA variants. This TU is compiled with -mavx2 -mfma and must only be
// entered after the runtime cpuid check in kernel_api.cpp. Scalar remainders
// reuse the reference kernels so the tails stay obviously correct.

#if defined(TABMLM_BUILD_AVX2)

namespace tabmlm::kernels::avx2 {
namespace {

// Cephes-style expf: range-reduce by log2(e), degree-5 polynomial, scale by
// 2^n through the float exponent field. ~1 ulp over the clamped range.
inline __m256 exp256(__m256 x) {
  const __m256 max_x = _mm256_set1_ps(88.3762626647949f);
  const __m256 min_x = _mm256_set1_ps(-88.3762626647949f);
  const __m256 log2e = _mm256_set1_ps(1.44269504088896341f);
  const __m256 ln2_hi = _mm256_set1_ps(0.693359375f);
  const __m256 ln2_lo = _mm256_set1_ps(-2.12194440e-4f);
  const __m256 p0 = _mm256_set1_ps(1.9875691500e-4f);
  const __m256 p1 = _mm256_set1_ps(1.3981999507e-3f);
  const __m256 p2 = _mm256_set1_ps(8.3334519073e-3f);
  const __m256 p3 = _mm256_set1_ps(4.1665795894e-2f);
  const __m256 p4 = _mm256_set1_ps(1.6666665459e-1f);
  const __m256 p5 = _mm256_set1_ps(5.0000001201e-1f);
  const __m256 one = _mm256_set1_ps(1.0f);

  x = _mm256_min_ps(x, max_x);
  x = _mm256_max_ps(x, min_x);

  __m256 fx = _mm256_fmadd_ps(x, log2e, _mm256_set1_ps(0.5f));
  fx = _mm256_floor_ps(fx);
  x = _mm256_fnmadd_ps(fx, ln2_hi, x);
  x = _mm256_fnmadd_ps(fx, ln2_lo, x);

  __m256 z = _mm256_mul_ps(x, x);
  __m256 y = p0;
  y = _mm256_fmadd_ps(y, x, p1);
  y = _mm256_fmadd_ps(y, x, p2);
  y = _mm256_fmadd_ps(y, x, p3);
  y = _mm256_fmadd_ps(y, x, p4);
  y = _mm256_fmadd_ps(y, x, p5);
  y = _mm256_fmadd_ps(y, z, x);
  y = _mm256_add_ps(y, one);

  __m256i n = _mm256_cvtps_epi32(fx);
  n = _mm256_add_epi32(n, _mm256_set1_epi32(0x7f));
  n = _mm256_slli_epi32(n, 23);
  return _mm256_mul_ps(y, _mm256_castsi256_ps(n));
}

// [sum(v0), sum(v1), sum(v2), sum(v3)]
inline __m128 hsum4(__m256 v0, __m256 v1, __m256 v2, __m256 v3) {
  __m256 t0 = _mm256_hadd_ps(v0, v1);
  __m256 t1 = _mm256_hadd_ps(v2, v3);
  __m256 t2 = _mm256_hadd_ps(t0, t1);
  __m128 lo = _mm256_castps256_ps128(t2);
  __m128 hi = _mm256_extractf128_ps(t2, 1);
  return _mm_add_ps(lo, hi);
}

constexpr float kGeluC = 0.7978845608028654f;  // sqrt(2/pi)
constexpr float kGeluA = 0.044715f;

inline __m256 tanh256(__m256 u) {
  // tanh(u) = 1 - 2/(exp(2u)+1); saturates correctly under the exp clamp.
  const __m256 one = _mm256_set1_ps(1.0f);
  const __m256 two = _mm256_set1_ps(2.0f);
  __m256 e = exp256(_mm256_mul_ps(u, two));
  return _mm256_sub_ps(one, _mm256_div_ps(two, _mm256_add_ps(e, one)));
}

}  // namespace

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const float* a,
             std::size_t lda, const float* b, std::size_t ldb, float* c,
             std::size_t ldc, bool acc) {
  const std::size_t kv = k & ~std::size_t{7};
  std::size_t i = 0;
  for (; i + 2 <= m; i += 2) {
    const float* a0 = a + i * lda;
    const float* a1 = a0 + lda;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      const float* b0 = b + j * ldb;
      const float* b1 = b0 + ldb;
      const float* b2 = b1 + ldb;
      const float* b3 = b2 + ldb;
      __m256 c00 = _mm256_setzero_ps(), c01 = c00, c02 = c00, c03 = c00;
      __m256 c10 = c00, c11 = c00, c12 = c00, c13 = c00;
      for (std::size_t p = 0; p < kv; p += 8) {
        __m256 va0 = _mm256_loadu_ps(a0 + p);
        __m256 va1 = _mm256_loadu_ps(a1 + p);
        __m256 vb = _mm256_loadu_ps(b0 + p);
        c00 = _mm256_fmadd_ps(va0, vb, c00);
        c10 = _mm256_fmadd_ps(va1, vb, c10);
        vb = _mm256_loadu_ps(b1 + p);
        c01 = _mm256_fmadd_ps(va0, vb, c01);
        c11 = _mm256_fmadd_ps(va1, vb, c11);
        vb = _mm256_loadu_ps(b2 + p);
        c02 = _mm256_fmadd_ps(va0, vb, c02);
        c12 = _mm256_fmadd_ps(va1, vb, c12);
        vb = _mm256_loadu_ps(b3 + p);
        c03 = _mm256_fmadd_ps(va0, vb, c03);
        c13 = _mm256_fmadd_ps(va1, vb, c13);
      }
      alignas(16) float s0[4], s1[4];
      _mm_store_ps(s0, hsum4(c00, c01, c02, c03));
      _mm_store_ps(s1, hsum4(c10, c11, c12, c13));
      for (std::size_t p = kv; p < k; ++p) {
        s0[0] += a0[p] * b0[p];
        s0[1] += a0[p] * b1[p];
        s0[2] += a0[p] * b2[p];
        s0[3] += a0[p] * b3[p];
        s1[0] += a1[p] * b0[p];
        s1[1] += a1[p] * b1[p];
        s1[2] += a1[p] * b2[p];
        s1[3] += a1[p] * b3[p];
      }
      float* c0 = c + i * ldc + j;
      float* c1 = c0 + ldc;
      for (int q = 0; q < 4; ++q) {
        c0[q] = acc ? c0[q] + s0[q] : s0[q];
        c1[q] = acc ? c1[q] + s1[q] : s1[q];
      }
    }
    if (j < n)
      scalar::gemm_nt<float>(2, n - j, k, a0, lda, b + j * ldb, ldb,
                             c + i * ldc + j, ldc, acc);
  }
  if (i < m)
    scalar::gemm_nt<float>(m - i, n, k, a + i * lda, lda, b, ldb,
                           c + i * ldc, ldc, acc);
}

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const float* a,
             std::size_t lda, const float* b, std::size_t ldb, float* c,
             std::size_t ldc, bool acc) {
  std::size_t i = 0;
  for (; i + 2 <= m; i += 2) {
    const float* a0 = a + i * lda;
    const float* a1 = a0 + lda;
    float* c0 = c + i * ldc;
    float* c1 = c0 + ldc;
    std::size_t j = 0;
    for (; j + 32 <= n; j += 32) {
      __m256 r00, r01, r02, r03, r10, r11, r12, r13;
      if (acc) {
        r00 = _mm256_loadu_ps(c0 + j);
        r01 = _mm256_loadu_ps(c0 + j + 8);
        r02 = _mm256_loadu_ps(c0 + j + 16);
        r03 = _mm256_loadu_ps(c0 + j + 24);
        r10 = _mm256_loadu_ps(c1 + j);
        r11 = _mm256_loadu_ps(c1 + j + 8);
        r12 = _mm256_loadu_ps(c1 + j + 16);
        r13 = _mm256_loadu_ps(c1 + j + 24);
      } else {
        r00 = _mm256_setzero_ps();
        r01 = r02 = r03 = r10 = r11 = r12 = r13 = r00;
      }
      for (std::size_t p = 0; p < k; ++p) {
        const float* bp = b + p * ldb + j;
        __m256 va0 = _mm256_broadcast_ss(a0 + p);
        __m256 va1 = _mm256_broadcast_ss(a1 + p);
        __m256 vb0 = _mm256_loadu_ps(bp);
        __m256 vb1 = _mm256_loadu_ps(bp + 8);
        __m256 vb2 = _mm256_loadu_ps(bp + 16);
        __m256 vb3 = _mm256_loadu_ps(bp + 24);
        r00 = _mm256_fmadd_ps(va0, vb0, r00);
        r01 = _mm256_fmadd_ps(va0, vb1, r01);
        r02 = _mm256_fmadd_ps(va0, vb2, r02);
        r03 = _mm256_fmadd_ps(va0, vb3, r03);
        r10 = _mm256_fmadd_ps(va1, vb0, r10);
        r11 = _mm256_fmadd_ps(va1, vb1, r11);
        r12 = _mm256_fmadd_ps(va1, vb2, r12);
        r13 = _mm256_fmadd_ps(va1, vb3, r13);
      }
      _mm256_storeu_ps(c0 + j, r00);
      _mm256_storeu_ps(c0 + j + 8, r01);
      _mm256_storeu_ps(c0 + j + 16, r02);
      _mm256_storeu_ps(c0 + j + 24, r03);
      _mm256_storeu_ps(c1 + j, r10);
      _mm256_storeu_ps(c1 + j + 8, r11);
      _mm256_storeu_ps(c1 + j + 16, r12);
      _mm256_storeu_ps(c1 + j + 24, r13);
    }
    for (; j + 8 <= n; j += 8) {
      __m256 r0 = acc ? _mm256_loadu_ps(c0 + j) : _mm256_setzero_ps();
      __m256 r1 = acc ? _mm256_loadu_ps(c1 + j) : _mm256_setzero_ps();
      for (std::size_t p = 0; p < k; ++p) {
        const float* bp = b + p * ldb + j;
        __m256 vb = _mm256_loadu_ps(bp);
        r0 = _mm256_fmadd_ps(_mm256_broadcast_ss(a0 + p), vb, r0);
        r1 = _mm256_fmadd_ps(_mm256_broadcast_ss(a1 + p), vb, r1);
      }
      _mm256_storeu_ps(c0 + j, r0);
      _mm256_storeu_ps(c1 + j, r1);
    }
    if (j < n)
      scalar::gemm_nn<float>(2, n - j, k, a0, lda, b + j, ldb, c0 + j, ldc,
                             acc);
  }
  if (i < m)
    scalar::gemm_nn<float>(m - i, n, k, a + i * lda, lda, b, ldb, c + i * ldc,
                           ldc, acc);
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const float* a,
             std::size_t lda, const float* b, std::size_t ldb, float* c,
             std::size_t ldc, bool acc) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    std::size_t j = 0;
    for (; j + 16 <= n; j += 16) {
      __m256 r[4][2];
      for (int ii = 0; ii < 4; ++ii) {
        if (acc) {
          r[ii][0] = _mm256_loadu_ps(c + (i + ii) * ldc + j);
          r[ii][1] = _mm256_loadu_ps(c + (i + ii) * ldc + j + 8);
        } else {
          r[ii][0] = _mm256_setzero_ps();
          r[ii][1] = _mm256_setzero_ps();
        }
      }
      for (std::size_t p = 0; p < k; ++p) {
        const float* ap = a + p * lda + i;
        const float* bp = b + p * ldb + j;
        __m256 vb0 = _mm256_loadu_ps(bp);
        __m256 vb1 = _mm256_loadu_ps(bp + 8);
        for (int ii = 0; ii < 4; ++ii) {
          __m256 va = _mm256_broadcast_ss(ap + ii);
          r[ii][0] = _mm256_fmadd_ps(va, vb0, r[ii][0]);
          r[ii][1] = _mm256_fmadd_ps(va, vb1, r[ii][1]);
        }
      }
      for (int ii = 0; ii < 4; ++ii) {
        _mm256_storeu_ps(c + (i + ii) * ldc + j, r[ii][0]);
        _mm256_storeu_ps(c + (i + ii) * ldc + j + 8, r[ii][1]);
      }
    }
    for (; j + 8 <= n; j += 8) {
      __m256 r[4];
      for (int ii = 0; ii < 4; ++ii)
        r[ii] = acc ? _mm256_loadu_ps(c + (i + ii) * ldc + j)
                    : _mm256_setzero_ps();
      for (std::size_t p = 0; p < k; ++p) {
        const float* ap = a + p * lda + i;
        __m256 vb = _mm256_loadu_ps(b + p * ldb + j);
        for (int ii = 0; ii < 4; ++ii)
          r[ii] = _mm256_fmadd_ps(_mm256_broadcast_ss(ap + ii), vb, r[ii]);
      }
      for (int ii = 0; ii < 4; ++ii)
        _mm256_storeu_ps(c + (i + ii) * ldc + j, r[ii]);
    }
    if (j < n)
      scalar::gemm_tn<float>(4, n - j, k, a + i, lda, b + j, ldb,
                             c + i * ldc + j, ldc, acc);
  }
  if (i < m)
    scalar::gemm_tn<float>(m - i, n, k, a + i, lda, b, ldb, c + i * ldc, ldc,
                           acc);
}

void gelu(std::size_t n, const float* x, float* y) {
  const __m256 half = _mm256_set1_ps(0.5f);
  const __m256 one = _mm256_set1_ps(1.0f);
  const __m256 cc = _mm256_set1_ps(kGeluC);
  const __m256 ca = _mm256_set1_ps(kGeluA);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 v = _mm256_loadu_ps(x + i);
    __m256 v3 = _mm256_mul_ps(_mm256_mul_ps(v, v), v);
    __m256 u = _mm256_mul_ps(cc, _mm256_fmadd_ps(ca, v3, v));
    __m256 t = tanh256(u);
    _mm256_storeu_ps(y + i,
                     _mm256_mul_ps(_mm256_mul_ps(half, v),
                                   _mm256_add_ps(one, t)));
  }
  if (i < n) scalar::gelu<float>(n - i, x + i, y + i);
}

void gelu_backward(std::size_t n, const float* x, const float* dy, float* dx) {
  const __m256 half = _mm256_set1_ps(0.5f);
  const __m256 one = _mm256_set1_ps(1.0f);
  const __m256 cc = _mm256_set1_ps(kGeluC);
  const __m256 ca = _mm256_set1_ps(kGeluA);
  const __m256 ca3 = _mm256_set1_ps(3.0f * kGeluA);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 v = _mm256_loadu_ps(x + i);
    __m256 v2 = _mm256_mul_ps(v, v);
    __m256 u = _mm256_mul_ps(cc, _mm256_fmadd_ps(ca, _mm256_mul_ps(v2, v), v));
    __m256 t = tanh256(u);
    __m256 sech2 = _mm256_fnmadd_ps(t, t, one);  // 1 - t^2
    __m256 du = _mm256_mul_ps(cc, _mm256_fmadd_ps(ca3, v2, one));
    __m256 d = _mm256_fmadd_ps(
        _mm256_mul_ps(_mm256_mul_ps(half, v), sech2), du,
        _mm256_mul_ps(half, _mm256_add_ps(one, t)));
    _mm256_storeu_ps(dx + i, _mm256_mul_ps(_mm256_loadu_ps(dy + i), d));
  }
  if (i < n) scalar::gelu_backward<float>(n - i, x + i, dy + i, dx + i);
}

void vexp(std::size_t n, const float* x, float* y) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, exp256(_mm256_loadu_ps(x + i)));
  if (i < n) scalar::vexp<float>(n - i, x + i, y + i);
}

void adam_update(std::size_t n, float* w, const float* g, float* m, float* v,
                 float lr, float beta1, float beta2, float eps, float bias1,
                 float bias2) {
  const __m256 vb1 = _mm256_set1_ps(beta1);
  const __m256 vb2 = _mm256_set1_ps(beta2);
  const __m256 v1mb1 = _mm256_set1_ps(1.0f - beta1);
  const __m256 v1mb2 = _mm256_set1_ps(1.0f - beta2);
  const __m256 vlr = _mm256_set1_ps(lr);
  const __m256 veps = _mm256_set1_ps(eps);
  const __m256 vc1 = _mm256_set1_ps(bias1);
  const __m256 vc2 = _mm256_set1_ps(bias2);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 vg = _mm256_loadu_ps(g + i);
    __m256 vm = _mm256_fmadd_ps(v1mb1, vg, _mm256_mul_ps(vb1, _mm256_loadu_ps(m + i)));
    __m256 vv = _mm256_fmadd_ps(v1mb2, _mm256_mul_ps(vg, vg),
                                _mm256_mul_ps(vb2, _mm256_loadu_ps(v + i)));
    _mm256_storeu_ps(m + i, vm);
    _mm256_storeu_ps(v + i, vv);
    __m256 mhat = _mm256_mul_ps(vm, vc1);
    __m256 vhat = _mm256_mul_ps(vv, vc2);
    __m256 den = _mm256_add_ps(_mm256_sqrt_ps(vhat), veps);
    __m256 step = _mm256_div_ps(_mm256_mul_ps(vlr, mhat), den);
    _mm256_storeu_ps(w + i, _mm256_sub_ps(_mm256_loadu_ps(w + i), step));
  }
  if (i < n)
    scalar::adam_update<float>(n - i, w + i, g + i, m + i, v + i, lr, beta1,
                               beta2, eps, bias1, bias2);
}

}  // namespace tabmlm::kernels::avx2

#endif  // TABMLM_BUILD_AVX2
