#pragma once

// Backend entry points behind the dispatch layer in kernel_api.cpp.

#include <cstddef>

namespace tabmlm::kernels::scalar {

template <class T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a,
             std::size_t lda, const T* b, std::size_t ldb, T* c,
             std::size_t ldc, bool acc);
template <class T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a,
             std::size_t lda, const T* b, std::size_t ldb, T* c,
             std::size_t ldc, bool acc);
template <class T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a,
             std::size_t lda, const T* b, std::size_t ldb, T* c,
             std::size_t ldc, bool acc);
template <class T>
void gelu(std::size_t n, const T* x, T* y);
template <class T>
void gelu_backward(std::size_t n, const T* x, const T* dy, T* dx);
template <class T>
void vexp(std::size_t n, const T* x, T* y);
template <class T>
void adam_update(std::size_t n, T* w, const T* g, T* m, T* v, T lr, T beta1,
                 T beta2, T eps, T bias1, T bias2);

}  // namespace tabmlm::kernels::scalar

#if defined(TABMLM_BUILD_AVX2)
namespace tabmlm::kernels::avx2 {

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const float* a,
             std::size_t lda, const float* b, std::size_t ldb, float* c,
             std::size_t ldc, bool acc);
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const float* a,
             std::size_t lda, const float* b, std::size_t ldb, float* c,
             std::size_t ldc, bool acc);
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const float* a,
             std::size_t lda, const float* b, std::size_t ldb, float* c,
             std::size_t ldc, bool acc);
void gelu(std::size_t n, const float* x, float* y);
void gelu_backward(std::size_t n, const float* x, const float* dy, float* dx);
void vexp(std::size_t n, const float* x, float* y);
void adam_update(std::size_t n, float* w, const float* g, float* m, float* v,
                 float lr, float beta1, float beta2, float eps, float bias1,
                 float bias2);

}  // namespace tabmlm::kernels::avx2
#endif
