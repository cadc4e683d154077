#include "glosslm/autodiff.hpp"

#include <cmath>
#include <cstring>

#include "glosslm/kernels.hpp"

namespace glosslm {

// ---------------------------------------------------------------------------
// ops
// ---------------------------------------------------------------------------

namespace ops {

Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_b) {
  const auto& k = kernels::active();
  if (!transpose_b) {
    if (a.cols != b.rows)
      throw ShapeError("matmul: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    Tensor c(a.rows, b.cols);
    k.matmul_nn(c.ptr(), a.ptr(), b.ptr(), a.rows, a.cols, b.cols);
    return c;
  }
  if (a.cols != b.cols)
    throw ShapeError("matmul_nt: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  Tensor c(a.rows, b.rows);
  k.matmul_nt(c.ptr(), a.ptr(), b.ptr(), a.rows, a.cols, b.rows);
  return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  if (a.rows != b.rows)
    throw ShapeError("matmul_tn: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  Tensor c(a.cols, b.cols);
  kernels::active().matmul_tn(c.ptr(), a.ptr(), b.ptr(), a.rows, a.cols, b.cols);
  return c;
}

void add_inplace(Tensor& x, const Tensor& y) {
  require_same_shape(x, y, "add");
  kernels::active().add(x.ptr(), x.ptr(), y.ptr(), x.size());
}

void add_bias_row_inplace(Tensor& x, const Tensor& bias) {
  if (bias.rows != 1 || bias.cols != x.cols)
    throw ShapeError("add_bias_row: bias " + bias.shape_str() + " vs " + x.shape_str());
  const auto& k = kernels::active();
  for (int r = 0; r < x.rows; ++r)
    k.add(x.row_ptr(r), x.row_ptr(r), bias.ptr(), static_cast<std::size_t>(x.cols));
}

void sigmoid_inplace(Tensor& x) {
  for (float& v : x.data) {
    if (v >= 0.0f) {
      v = 1.0f / (1.0f + std::exp(-v));
    } else {
      const float e = std::exp(v);
      v = e / (1.0f + e);
    }
  }
}

void tanh_inplace(Tensor& x) {
  for (float& v : x.data) v = std::tanh(v);
}

void relu_inplace(Tensor& x) {
  for (float& v : x.data) v = v > 0.0f ? v : 0.0f;
}

Tensor concat_cols(std::span<const Tensor* const> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const int rows = parts[0]->rows;
  int total = 0;
  for (const Tensor* t : parts) {
    if (t->rows != rows) throw ShapeError("concat_cols: row mismatch");
    total += t->cols;
  }
  Tensor out(rows, total);
  for (int r = 0; r < rows; ++r) {
    float* dst = out.row_ptr(r);
    for (const Tensor* t : parts) {
      std::memcpy(dst, t->row_ptr(r), sizeof(float) * t->cols);
      dst += t->cols;
    }
  }
  return out;
}

Tensor slice_cols(const Tensor& x, int c0, int c1) {
  if (c0 < 0 || c1 > x.cols || c0 >= c1)
    throw ShapeError("slice_cols: bad range [" + std::to_string(c0) + ", " +
                     std::to_string(c1) + ") for " + x.shape_str());
  Tensor out(x.rows, c1 - c0);
  for (int r = 0; r < x.rows; ++r)
    std::memcpy(out.row_ptr(r), x.row_ptr(r) + c0, sizeof(float) * out.cols);
  return out;
}

Tensor embedding_rows(const Tensor& table, std::span<const std::int32_t> ids) {
  Tensor out(static_cast<int>(ids.size()), table.cols);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const std::int32_t id = ids[i];
    if (id < 0 || id >= table.rows)
      throw IndexError("embedding_lookup: id " + std::to_string(id) + " out of range [0, " +
                       std::to_string(table.rows) + ")");
    std::memcpy(out.row_ptr(static_cast<int>(i)), table.row_ptr(id),
                sizeof(float) * table.cols);
  }
  return out;
}

std::vector<double> row_nll(const Tensor& logits, std::span<const std::int32_t> targets) {
  if (static_cast<int>(targets.size()) != logits.rows)
    throw ShapeError("row_nll: " + std::to_string(targets.size()) + " targets for " +
                     logits.shape_str() + " logits");
  std::vector<double> nll(targets.size());
  for (int r = 0; r < logits.rows; ++r) {
    const std::int32_t t = targets[r];
    if (t < 0 || t >= logits.cols)
      throw IndexError("row_nll: target " + std::to_string(t) + " out of range [0, " +
                       std::to_string(logits.cols) + ")");
    const float* row = logits.row_ptr(r);
    float m = row[0];
    for (int j = 1; j < logits.cols; ++j) m = std::max(m, row[j]);
    double s = 0.0;
    for (int j = 0; j < logits.cols; ++j) s += std::exp(static_cast<double>(row[j]) - m);
    nll[r] = static_cast<double>(m) + std::log(s) - static_cast<double>(row[t]);
  }
  return nll;
}

}  // namespace ops

// ---------------------------------------------------------------------------
// Graph
// ---------------------------------------------------------------------------

namespace {

enum class OpKind {
  kInput,
  kParam,
  kMatmulNN,
  kMatmulNT,
  kAdd,
  kAddBiasRow,
  kMul,
  kApplyMask,
  kConcatCols,
  kSliceCols,
  kSigmoid,
  kTanh,
  kRelu,
  kEmbedding,
  kCeSum,
  kScale,
};

}  // namespace

struct Graph::Node {
  OpKind op;
  int a = -1;
  int b = -1;
  std::vector<int> multi;            // concat inputs
  Tensor val;
  Tensor grad;                       // allocated on demand during backward
  bool has_grad = false;
  bool needs_grad = false;
  Parameter* par = nullptr;          // kParam
  Tensor aux;                        // kApplyMask mask
  std::vector<std::int32_t> ids;     // kEmbedding ids / kCeSum targets
  std::vector<double> lse;           // kCeSum per-row log-sum-exp
  int c0 = 0, c1 = 0;                // kSliceCols range
  float cval = 0.0f;                 // kScale constant
};

Graph::Graph() = default;
Graph::~Graph() = default;
Graph::Graph(Graph&&) noexcept = default;
Graph& Graph::operator=(Graph&&) noexcept = default;

int Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Graph::Node& Graph::node(Value v) {
  if (!v.valid() || v.idx >= static_cast<int>(nodes_.size()))
    throw InternalError("graph: invalid value handle");
  return nodes_[v.idx];
}

const Graph::Node& Graph::node(Value v) const {
  if (!v.valid() || v.idx >= static_cast<int>(nodes_.size()))
    throw InternalError("graph: invalid value handle");
  return nodes_[v.idx];
}

const Tensor& Graph::value(Value v) const { return node(v).val; }

const Tensor& Graph::grad(Value v) const {
  const Node& n = node(v);
  if (!n.has_grad) throw InternalError("graph: node has no gradient");
  return n.grad;
}

Value Graph::input(Tensor t) {
  Node n;
  n.op = OpKind::kInput;
  n.val = std::move(t);
  return {push(std::move(n))};
}

Value Graph::param(Parameter& p) {
  Node n;
  n.op = OpKind::kParam;
  n.val = p.value;  // copy keeps the tape immutable once recorded
  n.par = &p;
  n.needs_grad = p.trainable;
  return {push(std::move(n))};
}

Value Graph::matmul(Value a, Value b, bool transpose_b) {
  Node n;
  n.op = transpose_b ? OpKind::kMatmulNT : OpKind::kMatmulNN;
  n.a = a.idx;
  n.b = b.idx;
  n.val = ops::matmul(node(a).val, node(b).val, transpose_b);
  n.needs_grad = node(a).needs_grad || node(b).needs_grad;
  return {push(std::move(n))};
}

Value Graph::add(Value a, Value b) {
  Node n;
  n.op = OpKind::kAdd;
  n.a = a.idx;
  n.b = b.idx;
  require_same_shape(node(a).val, node(b).val, "add");
  n.val = node(a).val;
  ops::add_inplace(n.val, node(b).val);
  n.needs_grad = node(a).needs_grad || node(b).needs_grad;
  return {push(std::move(n))};
}

Value Graph::add_bias_row(Value x, Value bias) {
  Node n;
  n.op = OpKind::kAddBiasRow;
  n.a = x.idx;
  n.b = bias.idx;
  n.val = node(x).val;
  ops::add_bias_row_inplace(n.val, node(bias).val);
  n.needs_grad = node(x).needs_grad || node(bias).needs_grad;
  return {push(std::move(n))};
}

Value Graph::mul(Value a, Value b) {
  Node n;
  n.op = OpKind::kMul;
  n.a = a.idx;
  n.b = b.idx;
  require_same_shape(node(a).val, node(b).val, "elementwise_mul");
  n.val = Tensor(node(a).val.rows, node(a).val.cols);
  kernels::active().mul(n.val.ptr(), node(a).val.ptr(), node(b).val.ptr(), n.val.size());
  n.needs_grad = node(a).needs_grad || node(b).needs_grad;
  return {push(std::move(n))};
}

Value Graph::apply_mask(Value x, Tensor mask) {
  Node n;
  n.op = OpKind::kApplyMask;
  n.a = x.idx;
  require_same_shape(node(x).val, mask, "apply_mask");
  n.val = Tensor(mask.rows, mask.cols);
  kernels::active().mul(n.val.ptr(), node(x).val.ptr(), mask.ptr(), n.val.size());
  n.aux = std::move(mask);
  n.needs_grad = node(x).needs_grad;
  return {push(std::move(n))};
}

Value Graph::concat_cols(std::span<const Value> parts) {
  Node n;
  n.op = OpKind::kConcatCols;
  std::vector<const Tensor*> tensors;
  tensors.reserve(parts.size());
  for (Value v : parts) {
    n.multi.push_back(v.idx);
    tensors.push_back(&node(v).val);
    n.needs_grad = n.needs_grad || node(v).needs_grad;
  }
  n.val = ops::concat_cols(tensors);
  return {push(std::move(n))};
}

Value Graph::slice_cols(Value x, int c0, int c1) {
  Node n;
  n.op = OpKind::kSliceCols;
  n.a = x.idx;
  n.c0 = c0;
  n.c1 = c1;
  n.val = ops::slice_cols(node(x).val, c0, c1);
  n.needs_grad = node(x).needs_grad;
  return {push(std::move(n))};
}

Value Graph::sigmoid(Value x) {
  Node n;
  n.op = OpKind::kSigmoid;
  n.a = x.idx;
  n.val = node(x).val;
  ops::sigmoid_inplace(n.val);
  n.needs_grad = node(x).needs_grad;
  return {push(std::move(n))};
}

Value Graph::tanh(Value x) {
  Node n;
  n.op = OpKind::kTanh;
  n.a = x.idx;
  n.val = node(x).val;
  ops::tanh_inplace(n.val);
  n.needs_grad = node(x).needs_grad;
  return {push(std::move(n))};
}

Value Graph::relu(Value x) {
  Node n;
  n.op = OpKind::kRelu;
  n.a = x.idx;
  n.val = node(x).val;
  ops::relu_inplace(n.val);
  n.needs_grad = node(x).needs_grad;
  return {push(std::move(n))};
}

Value Graph::embedding_lookup(Value table, std::vector<std::int32_t> ids) {
  Node n;
  n.op = OpKind::kEmbedding;
  n.a = table.idx;
  n.val = ops::embedding_rows(node(table).val, ids);
  n.ids = std::move(ids);
  n.needs_grad = node(table).needs_grad;
  return {push(std::move(n))};
}

Value Graph::cross_entropy_sum(Value logits, std::vector<std::int32_t> targets) {
  Node n;
  n.op = OpKind::kCeSum;
  n.a = logits.idx;
  const Tensor& lv = node(logits).val;
  std::vector<double> nll = ops::row_nll(lv, targets);
  // lse = nll + logit[target]; cached for the softmax in backward
  n.lse.resize(nll.size());
  double total = 0.0;
  for (int r = 0; r < lv.rows; ++r) {
    n.lse[r] = nll[r] + static_cast<double>(lv.at(r, targets[r]));
    total += nll[r];
  }
  if (!std::isfinite(total))
    throw NumericError("cross_entropy: non-finite loss (diverged forward pass)");
  n.val = Tensor::full(1, 1, static_cast<float>(total));
  n.ids = std::move(targets);
  n.needs_grad = node(logits).needs_grad;
  return {push(std::move(n))};
}

Value Graph::scale(Value x, float c) {
  Node n;
  n.op = OpKind::kScale;
  n.a = x.idx;
  n.cval = c;
  n.val = node(x).val;
  kernels::active().scale(n.val.ptr(), c, n.val.size());
  n.needs_grad = node(x).needs_grad;
  return {push(std::move(n))};
}

void Graph::ensure_grad(int idx) {
  Node& n = nodes_[idx];
  if (!n.has_grad) {
    n.grad = Tensor::zeros(n.val.rows, n.val.cols);
    n.has_grad = true;
  }
}

void Graph::backward(Value loss) {
  if (backward_done_) throw InternalError("graph: backward already ran on this tape");
  backward_done_ = true;
  Node& top = node(loss);
  if (top.val.rows != 1 || top.val.cols != 1)
    throw ShapeError("backward: loss must be 1x1, got " + top.val.shape_str());
  if (!top.needs_grad) return;  // nothing trainable upstream
  ensure_grad(loss.idx);
  top.grad.at(0, 0) = 1.0f;

  const auto& k = kernels::active();
  auto accum = [&](int dst, const Tensor& g) {
    ensure_grad(dst);
    k.axpy(nodes_[dst].grad.ptr(), 1.0f, g.ptr(), g.size());
  };

  for (int i = loss.idx; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.needs_grad) continue;
    const Tensor& g = n.grad;
    switch (n.op) {
      case OpKind::kInput:
        break;
      case OpKind::kParam:
        if (n.par->trainable)
          k.axpy(n.par->grad.ptr(), 1.0f, g.ptr(), g.size());
        break;
      case OpKind::kMatmulNN: {
        const Tensor& av = nodes_[n.a].val;
        const Tensor& bv = nodes_[n.b].val;
        if (nodes_[n.a].needs_grad) accum(n.a, ops::matmul(g, bv, /*transpose_b=*/true));
        if (nodes_[n.b].needs_grad) accum(n.b, ops::matmul_tn(av, g));
        break;
      }
      case OpKind::kMatmulNT: {
        const Tensor& av = nodes_[n.a].val;
        const Tensor& bv = nodes_[n.b].val;
        if (nodes_[n.a].needs_grad) accum(n.a, ops::matmul(g, bv));
        if (nodes_[n.b].needs_grad) accum(n.b, ops::matmul_tn(g, av));
        break;
      }
      case OpKind::kAdd:
        if (nodes_[n.a].needs_grad) accum(n.a, g);
        if (nodes_[n.b].needs_grad) accum(n.b, g);
        break;
      case OpKind::kAddBiasRow: {
        if (nodes_[n.a].needs_grad) accum(n.a, g);
        if (nodes_[n.b].needs_grad) {
          ensure_grad(n.b);
          float* bg = nodes_[n.b].grad.ptr();
          for (int r = 0; r < g.rows; ++r)
            k.axpy(bg, 1.0f, g.row_ptr(r), static_cast<std::size_t>(g.cols));
        }
        break;
      }
      case OpKind::kMul: {
        if (nodes_[n.a].needs_grad) {
          Tensor t(g.rows, g.cols);
          k.mul(t.ptr(), g.ptr(), nodes_[n.b].val.ptr(), t.size());
          accum(n.a, t);
        }
        if (nodes_[n.b].needs_grad) {
          Tensor t(g.rows, g.cols);
          k.mul(t.ptr(), g.ptr(), nodes_[n.a].val.ptr(), t.size());
          accum(n.b, t);
        }
        break;
      }
      case OpKind::kApplyMask: {
        if (nodes_[n.a].needs_grad) {
          Tensor t(g.rows, g.cols);
          k.mul(t.ptr(), g.ptr(), n.aux.ptr(), t.size());
          accum(n.a, t);
        }
        break;
      }
      case OpKind::kConcatCols: {
        int c = 0;
        for (int src : n.multi) {
          const int w = nodes_[src].val.cols;
          if (nodes_[src].needs_grad) accum(src, ops::slice_cols(g, c, c + w));
          c += w;
        }
        break;
      }
      case OpKind::kSliceCols: {
        if (nodes_[n.a].needs_grad) {
          ensure_grad(n.a);
          Tensor& ag = nodes_[n.a].grad;
          for (int r = 0; r < g.rows; ++r)
            k.axpy(ag.row_ptr(r) + n.c0, 1.0f, g.row_ptr(r),
                   static_cast<std::size_t>(g.cols));
        }
        break;
      }
      case OpKind::kSigmoid: {
        Tensor t(g.rows, g.cols);
        for (std::size_t j = 0; j < t.size(); ++j) {
          const float y = n.val.data[j];
          t.data[j] = g.data[j] * y * (1.0f - y);
        }
        accum(n.a, t);
        break;
      }
      case OpKind::kTanh: {
        Tensor t(g.rows, g.cols);
        for (std::size_t j = 0; j < t.size(); ++j) {
          const float y = n.val.data[j];
          t.data[j] = g.data[j] * (1.0f - y * y);
        }
        accum(n.a, t);
        break;
      }
      case OpKind::kRelu: {
        Tensor t(g.rows, g.cols);
        for (std::size_t j = 0; j < t.size(); ++j)
          t.data[j] = n.val.data[j] > 0.0f ? g.data[j] : 0.0f;
        accum(n.a, t);
        break;
      }
      case OpKind::kEmbedding: {
        ensure_grad(n.a);
        Tensor& tg = nodes_[n.a].grad;
        for (std::size_t r = 0; r < n.ids.size(); ++r)
          k.axpy(tg.row_ptr(n.ids[r]), 1.0f, g.row_ptr(static_cast<int>(r)),
                 static_cast<std::size_t>(g.cols));
        break;
      }
      case OpKind::kCeSum: {
        const float gs = g.at(0, 0);
        const Tensor& lv = nodes_[n.a].val;
        Tensor t(lv.rows, lv.cols);
        for (int r = 0; r < lv.rows; ++r) {
          const float* lrow = lv.row_ptr(r);
          float* trow = t.row_ptr(r);
          const double lse = n.lse[r];
          for (int j = 0; j < lv.cols; ++j)
            trow[j] = gs * static_cast<float>(std::exp(static_cast<double>(lrow[j]) - lse));
          trow[n.ids[r]] -= gs;
        }
        accum(n.a, t);
        break;
      }
      case OpKind::kScale: {
        Tensor t = g;
        k.scale(t.ptr(), n.cval, t.size());
        accum(n.a, t);
        break;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// dropout masks and SGD
// ---------------------------------------------------------------------------

Tensor make_dropout_mask(int rows, int cols, float keep_prob, std::uint64_t seed) {
  if (!(keep_prob > 0.0f) || keep_prob > 1.0f)
    throw DomainError("make_dropout_mask: keep_prob must be in (0, 1], got " +
                      std::to_string(keep_prob));
  Tensor mask(rows, cols);
  Rng rng(seed);
  const float scale = 1.0f / keep_prob;
  for (float& v : mask.data) v = rng.next_unit() < keep_prob ? scale : 0.0f;
  return mask;
}

void sgd_step(std::span<Parameter* const> params, float lr,
              std::optional<float> clip_norm) {
  if (lr < 0.0f) throw DomainError("sgd_step: negative learning rate");
  const auto& k = kernels::active();

  double norm_sq = 0.0;
  for (Parameter* p : params) {
    if (!p->trainable) continue;
    const double ss = k.sum_sq(p->grad.ptr(), p->grad.size());
    if (!std::isfinite(ss))
      throw NumericError("sgd_step: non-finite gradient in parameter '" + p->name + "'");
    norm_sq += ss;
  }

  if (clip_norm.has_value()) {
    const double norm = std::sqrt(norm_sq);
    if (norm > static_cast<double>(*clip_norm)) {
      const float s = static_cast<float>(static_cast<double>(*clip_norm) / norm);
      for (Parameter* p : params)
        if (p->trainable) k.scale(p->grad.ptr(), s, p->grad.size());
    }
  }

  if (lr != 0.0f) {
    for (Parameter* p : params)
      if (p->trainable) k.axpy(p->value.ptr(), -lr, p->grad.ptr(), p->grad.size());
  }

  for (Parameter* p : params) p->zero_grad();
}

}  // namespace glosslm
