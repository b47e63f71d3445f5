#include <cmath>
#include <cstring>

#include "kernels_internal.hpp"

// Reference kernels: plain loops, fixed summation order, no ISA assumptions.

namespace tabmlm::kernels::scalar {
namespace {

template <class T>
void zero_c(std::size_t m, std::size_t n, T* c, std::size_t ldc, bool acc) {
  if (acc) return;
  for (std::size_t i = 0; i < m; ++i)
    std::memset(c + i * ldc, 0, n * sizeof(T));
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

}  // namespace

template <class T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a,
             std::size_t lda, const T* b, std::size_t ldb, T* c,
             std::size_t ldc, bool acc) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* ai = a + i * lda;
    for (std::size_t j = 0; j < n; ++j) {
      const T* bj = b + j * ldb;
      T s = 0;
      for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      c[i * ldc + j] = acc ? c[i * ldc + j] + s : s;
    }
  }
}

template <class T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a,
             std::size_t lda, const T* b, std::size_t ldb, T* c,
             std::size_t ldc, bool acc) {
  zero_c(m, n, c, ldc, acc);
  for (std::size_t i = 0; i < m; ++i) {
    T* ci = c + i * ldc;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * lda + p];
      const T* bp = b + p * ldb;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

template <class T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a,
             std::size_t lda, const T* b, std::size_t ldb, T* c,
             std::size_t ldc, bool acc) {
  zero_c(m, n, c, ldc, acc);
  for (std::size_t p = 0; p < k; ++p) {
    const T* ap = a + p * lda;
    const T* bp = b + p * ldb;
    for (std::size_t i = 0; i < m; ++i) {
      const T av = ap[i];
      T* ci = c + i * ldc;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

template <class T>
void gelu(std::size_t n, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) {
    const T v = x[i];
    const T u = static_cast<T>(kGeluC) * (v + static_cast<T>(kGeluA) * v * v * v);
    y[i] = T(0.5) * v * (T(1) + std::tanh(u));
  }
}

template <class T>
void gelu_backward(std::size_t n, const T* x, const T* dy, T* dx) {
  for (std::size_t i = 0; i < n; ++i) {
    const T v = x[i];
    const T u = static_cast<T>(kGeluC) * (v + static_cast<T>(kGeluA) * v * v * v);
    const T t = std::tanh(u);
    const T du = static_cast<T>(kGeluC) * (T(1) + T(3) * static_cast<T>(kGeluA) * v * v);
    dx[i] = dy[i] * (T(0.5) * (T(1) + t) + T(0.5) * v * (T(1) - t * t) * du);
  }
}

template <class T>
void vexp(std::size_t n, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = std::exp(x[i]);
}

template <class T>
void adam_update(std::size_t n, T* w, const T* g, T* m, T* v, T lr, T beta1,
                 T beta2, T eps, T bias1, T bias2) {
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (T(1) - beta1) * g[i];
    v[i] = beta2 * v[i] + (T(1) - beta2) * g[i] * g[i];
    const T mhat = m[i] * bias1;
    const T vhat = v[i] * bias2;
    w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

#define TABMLM_INSTANTIATE(T)                                                 \
  template void gemm_nt<T>(std::size_t, std::size_t, std::size_t, const T*,  \
                           std::size_t, const T*, std::size_t, T*,           \
                           std::size_t, bool);                               \
  template void gemm_nn<T>(std::size_t, std::size_t, std::size_t, const T*,  \
                           std::size_t, const T*, std::size_t, T*,           \
                           std::size_t, bool);                               \
  template void gemm_tn<T>(std::size_t, std::size_t, std::size_t, const T*,  \
                           std::size_t, const T*, std::size_t, T*,           \
                           std::size_t, bool);                               \
  template void gelu<T>(std::size_t, const T*, T*);                          \
  template void gelu_backward<T>(std::size_t, const T*, const T*, T*);       \
  template void vexp<T>(std::size_t, const T*, T*);                          \
  template void adam_update<T>(std::size_t, T*, const T*, T*, T*, T, T, T,   \
                               T, T, T);

TABMLM_INSTANTIATE(float)
TABMLM_INSTANTIATE(double)
#undef TABMLM_INSTANTIATE

}  // namespace tabmlm::kernels::scalar
