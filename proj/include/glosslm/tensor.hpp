#pragma once

// Dense row-major 2-D float tensors and named trainable parameters.

#include <cmath>
#include <string>
#include <vector>

#include "glosslm/common.hpp"

namespace glosslm {

struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<float> data;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0f) {
    if (r < 0 || c < 0) throw ShapeError("negative tensor dimension");
  }

  static Tensor zeros(int r, int c) { return Tensor(r, c); }

  static Tensor full(int r, int c, float v) {
    Tensor t(r, c);
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }

  static Tensor from_rows(int r, int c, std::initializer_list<float> vals) {
    Tensor t(r, c);
    if (vals.size() != t.data.size()) throw ShapeError("initializer size mismatch");
    std::copy(vals.begin(), vals.end(), t.data.begin());
    return t;
  }

  std::size_t size() const { return data.size(); }
  float* ptr() { return data.data(); }
  const float* ptr() const { return data.data(); }
  float* row_ptr(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }
  const float* row_ptr(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }

  float& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  float at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

  bool all_finite() const {
    for (float v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  std::string shape_str() const {
    return std::to_string(rows) + "x" + std::to_string(cols);
  }
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                     b.shape_str());
}

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)),
        grad(Tensor::zeros(value.rows, value.cols)) {}

  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0f); }
};

}  // namespace glosslm
