#pragma once

// Data-parallel inner loops behind the tensor math. Scalar reference kernels
// define the semantics; an AVX2 variant is selected at runtime when the CPU
// supports it. Both variants accumulate in glosslm::kernels::acc_t, which is
// double on GLOSSLM_ACCUMULATE_F64 builds.

#include <cstddef>

namespace glosslm {
namespace kernels {

#ifdef GLOSSLM_ACCUMULATE_F64
using acc_t = double;
#else
using acc_t = float;
#endif

struct Backend {
  const char* name;

  // c[m x n] = a[m x k] * b[k x n]
  void (*matmul_nn)(float* c, const float* a, const float* b, int m, int k, int n);
  // c[m x n] = a[m x k] * b[n x k]^T
  void (*matmul_nt)(float* c, const float* a, const float* b, int m, int k, int n);
  // c[k x n] = a[m x k]^T * b[m x n]
  void (*matmul_tn)(float* c, const float* a, const float* b, int m, int k, int n);

  void (*add)(float* out, const float* x, const float* y, std::size_t n);
  void (*mul)(float* out, const float* x, const float* y, std::size_t n);
  // y += alpha * x
  void (*axpy)(float* y, float alpha, const float* x, std::size_t n);
  void (*scale)(float* x, float alpha, std::size_t n);
  double (*sum_sq)(const float* x, std::size_t n);
};

const Backend& scalar_backend();

// Null when the binary was built without AVX2 support.
const Backend* avx2_backend();

bool cpu_has_avx2();

// Active backend: AVX2 when available unless overridden. The GLOSSLM_KERNELS
// environment variable ("scalar" | "avx2" | "auto") is honored at first use.
const Backend& active();

// Programmatic override, mainly for equivalence tests. Throws DomainError on
// an unknown name or when "avx2" is requested on unsupported hardware.
void set_backend(const char* name);

}  // namespace kernels
}  // namespace glosslm
