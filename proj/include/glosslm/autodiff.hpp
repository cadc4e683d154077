#pragma once

// Reverse-mode autodiff over 2-D tensors. A Graph is a single-threaded tape;
// backward walks it once in reverse. Parameters live outside the graph and
// receive accumulated gradients, so gradients from several backward passes
// sum until sgd_step zeroes them.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "glosslm/tensor.hpp"

namespace glosslm {

// Tape-free tensor math, shared between graph ops and the eval-mode forward
// passes.
namespace ops {

Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_b = false);
// c[k x n] = a^T[k x m] * b[m x n]
Tensor matmul_tn(const Tensor& a, const Tensor& b);
void add_inplace(Tensor& x, const Tensor& y);
void add_bias_row_inplace(Tensor& x, const Tensor& bias);
void sigmoid_inplace(Tensor& x);
void tanh_inplace(Tensor& x);
void relu_inplace(Tensor& x);
Tensor concat_cols(std::span<const Tensor* const> parts);
Tensor slice_cols(const Tensor& x, int c0, int c1);
Tensor embedding_rows(const Tensor& table, std::span<const std::int32_t> ids);

// Per-row negative log-likelihood of the target class under log-softmax of
// the row. Max-shifted; accumulates in double.
std::vector<double> row_nll(const Tensor& logits, std::span<const std::int32_t> targets);

}  // namespace ops

struct Value {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

class Graph {
 public:
  Graph();
  ~Graph();
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) noexcept;
  Graph& operator=(Graph&&) noexcept;

  Value input(Tensor t);
  Value param(Parameter& p);

  Value matmul(Value a, Value b, bool transpose_b = false);
  Value add(Value a, Value b);
  Value add_bias_row(Value x, Value bias);
  Value mul(Value a, Value b);
  Value apply_mask(Value x, Tensor mask);
  Value concat_cols(std::span<const Value> parts);
  Value slice_cols(Value x, int c0, int c1);
  Value sigmoid(Value x);
  Value tanh(Value x);
  Value relu(Value x);
  Value embedding_lookup(Value table, std::vector<std::int32_t> ids);
  // 1x1 sum of per-row NLL under log-softmax.
  Value cross_entropy_sum(Value logits, std::vector<std::int32_t> targets);
  Value scale(Value x, float c);

  const Tensor& value(Value v) const;
  const Tensor& grad(Value v) const;

  // loss must be 1x1. May be called once per graph.
  void backward(Value loss);

 private:
  struct Node;
  int push(Node n);
  Node& node(Value v);
  const Node& node(Value v) const;
  void ensure_grad(int idx);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// Mask entries are 0 with probability 1-keep_prob, else 1/keep_prob.
// Deterministic per seed; keep_prob must lie in (0, 1].
Tensor make_dropout_mask(int rows, int cols, float keep_prob, std::uint64_t seed);

// value <- value - lr * grad for trainable parameters, after optional global
// 2-norm gradient clipping across all trainable grads. Grads are zeroed for
// every parameter afterwards. lr == 0 leaves values bit-identical.
void sgd_step(std::span<Parameter* const> params, float lr,
              std::optional<float> clip_norm);

}  // namespace glosslm
