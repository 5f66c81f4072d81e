#include "styletag/kernels.hpp"

#include <atomic>

#include "styletag/common.hpp"

namespace styletag::kernels {

namespace {

const FloatKernelTable kScalarTable = {
    &generic::gemm_nn<float>,  &generic::gemm_nt<float>,      &generic::gemm_tn<float>,
    &generic::softmax_rows<float>, &generic::gelu_fwd<float>, &generic::gelu_bwd<float>,
    &generic::axpy<float>,     &generic::add_bias_rows<float>, &generic::colsum<float>,
    &generic::adam_step<float>,
};

std::atomic<const FloatKernelTable*> g_active{nullptr};
std::atomic<Backend> g_backend{Backend::scalar};

const FloatKernelTable* pick_default() {
  if (const FloatKernelTable* t = avx2_table()) {
    g_backend.store(Backend::avx2);
    return t;
  }
  g_backend.store(Backend::scalar);
  return &kScalarTable;
}

const FloatKernelTable& active() {
  const FloatKernelTable* t = g_active.load(std::memory_order_acquire);
  if (!t) {
    t = pick_default();
    g_active.store(t, std::memory_order_release);
  }
  return *t;
}

}  // namespace

bool avx2_supported() { return avx2_table() != nullptr; }

Backend active_backend() {
  active();
  return g_backend.load();
}

void set_backend(Backend b) {
  if (b == Backend::avx2) {
    const FloatKernelTable* t = avx2_table();
    if (!t) throw ConfigError("AVX2 backend requested but this CPU does not support AVX2+FMA");
    g_active.store(t);
  } else {
    g_active.store(&kScalarTable);
  }
  g_backend.store(b);
}

const char* backend_name(Backend b) { return b == Backend::avx2 ? "avx2" : "scalar"; }

const FloatKernelTable& scalar_table() { return kScalarTable; }

void gemm_nn(float* C, const float* A, const float* B, int M, int K, int N, float beta) {
  active().gemm_nn(C, A, B, M, K, N, beta);
}
void gemm_nt(float* C, const float* A, const float* B, int M, int K, int N, float beta) {
  active().gemm_nt(C, A, B, M, K, N, beta);
}
void gemm_tn(float* C, const float* A, const float* B, int M, int K, int N, float beta) {
  active().gemm_tn(C, A, B, M, K, N, beta);
}
void softmax_rows(float* X, int rows, int cols) { active().softmax_rows(X, rows, cols); }
void gelu_fwd(float* y, const float* x, std::size_t n) { active().gelu_fwd(y, x, n); }
void gelu_bwd(float* dx, const float* x, const float* dy, std::size_t n) {
  active().gelu_bwd(dx, x, dy, n);
}
void axpy(float* y, const float* x, float a, std::size_t n) { active().axpy(y, x, a, n); }
void add_bias_rows(float* X, const float* bias, int rows, int cols) {
  active().add_bias_rows(X, bias, rows, cols);
}
void colsum(float* out, const float* X, int rows, int cols) { active().colsum(out, X, rows, cols); }
void adam_step(float* p, float* m, float* v, const float* g, std::size_t n, float lr, float beta1,
               float beta2, float eps, float bc1, float bc2) {
  active().adam_step(p, m, v, g, n, lr, beta1, beta2, eps, bc1, bc2);
}

}  // namespace styletag::kernels
