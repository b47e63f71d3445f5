#include "tabmlm/kernels.hpp"

#include <cstdlib>

#include "kernels_internal.hpp"
#include "tabmlm/common.hpp"

namespace tabmlm::kernels {
namespace {

std::uint64_t g_macs = 0;

Backend& backend_slot() {
  static Backend b = detect_backend();
  return b;
}

}  // namespace

Backend detect_backend() {
  Backend best = Backend::scalar;
#if defined(TABMLM_BUILD_AVX2)
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
    best = Backend::avx2;
#endif
  const char* env = std::getenv("TABMLM_KERNELS");
  if (!env || !*env) return best;
  std::string_view want(env);
  if (want == "scalar") return Backend::scalar;
  if (want == "avx2") {
    if (best == Backend::avx2) return best;
    throw usage_error(
        "TABMLM_KERNELS=avx2 requested but AVX2+FMA is unavailable");
  }
  throw usage_error("unknown TABMLM_KERNELS value \"" + std::string(want) +
                    "\" (expected scalar or avx2)");
}

Backend active_backend() { return backend_slot(); }
void set_backend(Backend b) {
#if !defined(TABMLM_BUILD_AVX2)
  if (b == Backend::avx2)
    throw usage_error("this build has no AVX2 kernels");
#endif
  backend_slot() = b;
}

std::string_view backend_name(Backend b) {
  return b == Backend::avx2 ? "avx2" : "scalar";
}

std::uint64_t mac_count() { return g_macs; }
void reset_mac_count() { g_macs = 0; }

#if defined(TABMLM_BUILD_AVX2)
#define TABMLM_F32(fn, ...)                   \
  if (active_backend() == Backend::avx2) {    \
    avx2::fn(__VA_ARGS__);                    \
    return;                                   \
  }                                           \
  scalar::fn<float>(__VA_ARGS__)
#else
#define TABMLM_F32(fn, ...) scalar::fn<float>(__VA_ARGS__)
#endif

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const float* a,
             std::size_t lda, const float* b, std::size_t ldb, float* c,
             std::size_t ldc, bool acc) {
  g_macs += static_cast<std::uint64_t>(m) * n * k;
  TABMLM_F32(gemm_nt, m, n, k, a, lda, b, ldb, c, ldc, acc);
}
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a,
             std::size_t lda, const double* b, std::size_t ldb, double* c,
             std::size_t ldc, bool acc) {
  g_macs += static_cast<std::uint64_t>(m) * n * k;
  scalar::gemm_nt<double>(m, n, k, a, lda, b, ldb, c, ldc, acc);
}
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const float* a,
             std::size_t lda, const float* b, std::size_t ldb, float* c,
             std::size_t ldc, bool acc) {
  g_macs += static_cast<std::uint64_t>(m) * n * k;
  TABMLM_F32(gemm_nn, m, n, k, a, lda, b, ldb, c, ldc, acc);
}
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a,
             std::size_t lda, const double* b, std::size_t ldb, double* c,
             std::size_t ldc, bool acc) {
  g_macs += static_cast<std::uint64_t>(m) * n * k;
  scalar::gemm_nn<double>(m, n, k, a, lda, b, ldb, c, ldc, acc);
}
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const float* a,
             std::size_t lda, const float* b, std::size_t ldb, float* c,
             std::size_t ldc, bool acc) {
  g_macs += static_cast<std::uint64_t>(m) * n * k;
  TABMLM_F32(gemm_tn, m, n, k, a, lda, b, ldb, c, ldc, acc);
}
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a,
             std::size_t lda, const double* b, std::size_t ldb, double* c,
             std::size_t ldc, bool acc) {
  g_macs += static_cast<std::uint64_t>(m) * n * k;
  scalar::gemm_tn<double>(m, n, k, a, lda, b, ldb, c, ldc, acc);
}

void gelu(std::size_t n, const float* x, float* y) { TABMLM_F32(gelu, n, x, y); }
void gelu(std::size_t n, const double* x, double* y) {
  scalar::gelu<double>(n, x, y);
}
void gelu_backward(std::size_t n, const float* x, const float* dy, float* dx) {
  TABMLM_F32(gelu_backward, n, x, dy, dx);
}
void gelu_backward(std::size_t n, const double* x, const double* dy,
                   double* dx) {
  scalar::gelu_backward<double>(n, x, dy, dx);
}
void vexp(std::size_t n, const float* x, float* y) { TABMLM_F32(vexp, n, x, y); }
void vexp(std::size_t n, const double* x, double* y) {
  scalar::vexp<double>(n, x, y);
}

void adam_update(std::size_t n, float* w, const float* g, float* m, float* v,
                 float lr, float beta1, float beta2, float eps, float bias1,
                 float bias2) {
  TABMLM_F32(adam_update, n, w, g, m, v, lr, beta1, beta2, eps, bias1, bias2);
}
void adam_update(std::size_t n, double* w, const double* g, double* m,
                 double* v, double lr, double beta1, double beta2, double eps,
                 double bias1, double bias2) {
  scalar::adam_update<double>(n, w, g, m, v, lr, beta1, beta2, eps, bias1,
                              bias2);
}

#undef TABMLM_F32

}  // namespace tabmlm::kernels
