// Scalar reference kernels. These define the numeric semantics the SIMD
// variants are equivalence-tested against.

#include <vector>

#include "glosslm/kernels.hpp"

namespace glosslm {
namespace kernels {
namespace {

void matmul_nn_scalar(float* c, const float* a, const float* b, int m, int k, int n) {
  std::vector<acc_t> acc(static_cast<std::size_t>(n));
  for (int i = 0; i < m; ++i) {
    std::fill(acc.begin(), acc.end(), acc_t(0));
    const float* arow = a + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const acc_t av = static_cast<acc_t>(arow[p]);
      const float* brow = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) acc[j] += av * static_cast<acc_t>(brow[j]);
    }
    float* crow = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) crow[j] = static_cast<float>(acc[j]);
  }
}

void matmul_nt_scalar(float* c, const float* a, const float* b, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const float* arow = a + static_cast<std::size_t>(i) * k;
    float* crow = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const float* brow = b + static_cast<std::size_t>(j) * k;
      acc_t s = 0;
      for (int p = 0; p < k; ++p) s += static_cast<acc_t>(arow[p]) * static_cast<acc_t>(brow[p]);
      crow[j] = static_cast<float>(s);
    }
  }
}

void matmul_tn_scalar(float* c, const float* a, const float* b, int m, int k, int n) {
  std::vector<acc_t> acc(static_cast<std::size_t>(n));
  for (int i = 0; i < k; ++i) {
    std::fill(acc.begin(), acc.end(), acc_t(0));
    for (int r = 0; r < m; ++r) {
      const acc_t av = static_cast<acc_t>(a[static_cast<std::size_t>(r) * k + i]);
      const float* brow = b + static_cast<std::size_t>(r) * n;
      for (int j = 0; j < n; ++j) acc[j] += av * static_cast<acc_t>(brow[j]);
    }
    float* crow = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) crow[j] = static_cast<float>(acc[j]);
  }
}

void add_scalar(float* out, const float* x, const float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] + y[i];
}

void mul_scalar(float* out, const float* x, const float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * y[i];
}

void axpy_scalar(float* y, float alpha, const float* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale_scalar(float* x, float alpha, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

double sum_sq_scalar(const float* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += static_cast<double>(x[i]) * static_cast<double>(x[i]);
  return s;
}

}  // namespace

const Backend& scalar_backend() {
  static const Backend backend = {
      "scalar",       matmul_nn_scalar, matmul_nt_scalar, matmul_tn_scalar,
      add_scalar,     mul_scalar,       axpy_scalar,      scale_scalar,
      sum_sq_scalar,
  };
  return backend;
}

}  // namespace kernels
}  // namespace glosslm
