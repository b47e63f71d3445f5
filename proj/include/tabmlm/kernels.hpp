#pragma once

// Numeric hot-loop kernels behind a runtime-dispatched backend: a portable
// scalar reference and an AVX2+FMA variant (x86-64). The scalar path is the
// correctness authority; the AVX2 path is equivalence-tested against it.
// Float has both backends; double always runs scalar (it only appears in
// gradient checking).

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace tabmlm::kernels {

enum class Backend { scalar, avx2 };

// Highest supported backend, honoring the TABMLM_KERNELS env var
// ("scalar" or "avx2"); throws usage_error if the override is unsupported.
Backend detect_backend();
Backend active_backend();
void set_backend(Backend b);
std::string_view backend_name(Backend b);

// Every gemm_* call adds m*n*k to this process-wide counter; the analytic
// cost model is validated against it.
std::uint64_t mac_count();
void reset_mac_count();

// Row-major GEMM family; ld* are row strides. `acc` accumulates into C.
// gemm_nt: C[m,n] = A[m,k] * B[n,k]^T
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const float* a,
             std::size_t lda, const float* b, std::size_t ldb, float* c,
             std::size_t ldc, bool acc);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a,
             std::size_t lda, const double* b, std::size_t ldb, double* c,
             std::size_t ldc, bool acc);
// gemm_nn: C[m,n] = A[m,k] * B[k,n]
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const float* a,
             std::size_t lda, const float* b, std::size_t ldb, float* c,
             std::size_t ldc, bool acc);
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a,
             std::size_t lda, const double* b, std::size_t ldb, double* c,
             std::size_t ldc, bool acc);
// gemm_tn: C[m,n] = A[k,m]^T * B[k,n]
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const float* a,
             std::size_t lda, const float* b, std::size_t ldb, float* c,
             std::size_t ldc, bool acc);
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a,
             std::size_t lda, const double* b, std::size_t ldb, double* c,
             std::size_t ldc, bool acc);

// GELU, tanh form: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
void gelu(std::size_t n, const float* x, float* y);
void gelu(std::size_t n, const double* x, double* y);
// dx = dy * gelu'(x)
void gelu_backward(std::size_t n, const float* x, const float* dy, float* dx);
void gelu_backward(std::size_t n, const double* x, const double* dy,
                   double* dx);

void vexp(std::size_t n, const float* x, float* y);
void vexp(std::size_t n, const double* x, double* y);

// One Adam step. bias1 = 1/(1-beta1^t), bias2 = 1/(1-beta2^t);
// w -= lr * (m*bias1) / (sqrt(v*bias2) + eps).
void adam_update(std::size_t n, float* w, const float* g, float* m, float* v,
                 float lr, float beta1, float beta2, float eps, float bias1,
                 float bias2);
void adam_update(std::size_t n, double* w, const double* g, double* m,
                 double* v, double lr, double beta1, double beta2, double eps,
                 double bias1, double bias2);

}  // namespace tabmlm::kernels
