#include "glosslm/models.hpp"

#include <algorithm>
#include <cstring>

#include "glosslm/kernels.hpp"

namespace glosslm {

const char* arch_name(Arch a) { return a == Arch::ffnn ? "ffnn" : "lstm"; }

Arch arch_from_name(const std::string& s) {
  if (s == "ffnn") return Arch::ffnn;
  if (s == "lstm") return Arch::lstm;
  throw ConfigError("unknown architecture '" + s + "' (expected ffnn or lstm)");
}

void LstmConfig::validate() const {
  if (vocab_size < 2) throw ConfigError("lstm: vocab_size must be >= 2");
  if (embed_dim <= 0) throw ConfigError("lstm: embed_dim must be positive");
  if (hidden_dims.empty()) throw ConfigError("lstm: at least one hidden layer required");
  for (int h : hidden_dims)
    if (h <= 0) throw ConfigError("lstm: hidden dims must be positive");
  if (tie_weights && hidden_dims.back() != embed_dim)
    throw ConfigError("lstm: tied weights require last hidden dim (" +
                      std::to_string(hidden_dims.back()) + ") to equal embed_dim (" +
                      std::to_string(embed_dim) + ")");
  if (weight_drop_p < 0.0f || weight_drop_p >= 1.0f)
    throw ConfigError("lstm: weight_drop_p must lie in [0, 1)");
}

void FfnnConfig::validate() const {
  if (vocab_size < 2) throw ConfigError("ffnn: vocab_size must be >= 2");
  if (context_len < 1) throw ConfigError("ffnn: context_len must be >= 1");
  if (embed_dim <= 0 || hidden_dim <= 0) throw ConfigError("ffnn: dims must be positive");
}

Parameter& Model::param(const std::string& name) {
  for (auto& p : params)
    if (p->name == name) return *p;
  throw InternalError("model has no parameter '" + name + "'");
}

const Parameter& Model::param(const std::string& name) const {
  for (const auto& p : params)
    if (p->name == name) return *p;
  throw InternalError("model has no parameter '" + name + "'");
}

bool Model::has_param(const std::string& name) const {
  for (const auto& p : params)
    if (p->name == name) return true;
  return false;
}

std::vector<Parameter*> Model::param_ptrs() const {
  std::vector<Parameter*> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.get());
  return out;
}

int Model::feature_dim() const {
  return arch == Arch::lstm ? lstm.hidden_dims.back() : ffnn.hidden_dim;
}

void Model::verify_invariants() const {
  for (const auto& p : params)
    if (!p->value.same_shape(p->grad))
      throw InternalError("parameter '" + p->name + "': grad shape drifted");
  if (output_tied() && has_param("output.weight"))
    throw InternalError("tied model carries a separate output projection");
  if (!output_tied() && !has_param("output.weight"))
    throw InternalError("untied model lost its output projection");
  if (substituted && !output_vocab.has_value())
    throw InternalError("substituted model lost its target vocabulary");
}

namespace {

std::shared_ptr<Parameter> make_uniform_param(const std::string& name, int rows, int cols,
                                              std::uint64_t init_seed) {
  Tensor t(rows, cols);
  Rng rng(mix_seed(init_seed, fnv1a64(name)));
  for (float& v : t.data) v = rng.next_uniform(-0.1f, 0.1f);
  return std::make_shared<Parameter>(name, std::move(t));
}

std::string lstm_param_name(int layer, const char* kind) {
  return "lstm" + std::to_string(layer) + "." + kind;
}

}  // namespace

Model build_lstm(const LstmConfig& config, std::uint64_t init_seed) {
  config.validate();
  Model m;
  m.arch = Arch::lstm;
  m.lstm = config;
  m.params.push_back(
      make_uniform_param("embedding", config.vocab_size, config.embed_dim, init_seed));
  int in_dim = config.embed_dim;
  for (std::size_t l = 0; l < config.hidden_dims.size(); ++l) {
    const int h = config.hidden_dims[l];
    const int li = static_cast<int>(l);
    m.params.push_back(
        make_uniform_param(lstm_param_name(li, "weight_ih"), in_dim, 4 * h, init_seed));
    m.params.push_back(
        make_uniform_param(lstm_param_name(li, "weight_hh"), h, 4 * h, init_seed));
    auto bias_ih = make_uniform_param(lstm_param_name(li, "bias_ih"), 1, 4 * h, init_seed);
    // gate order i,f,g,o; forget-gate bias nudged +1 for stable early epochs
    for (int j = h; j < 2 * h; ++j) bias_ih->value.at(0, j) += 1.0f;
    m.params.push_back(std::move(bias_ih));
    m.params.push_back(
        make_uniform_param(lstm_param_name(li, "bias_hh"), 1, 4 * h, init_seed));
    in_dim = h;
  }
  if (!config.tie_weights)
    m.params.push_back(make_uniform_param("output.weight", in_dim, config.vocab_size, init_seed));
  m.params.push_back(make_uniform_param("output.bias", 1, config.vocab_size, init_seed));
  return m;
}

Model build_ffnn(const FfnnConfig& config, std::uint64_t init_seed) {
  config.validate();
  Model m;
  m.arch = Arch::ffnn;
  m.ffnn = config;
  m.params.push_back(
      make_uniform_param("embedding", config.vocab_size, config.embed_dim, init_seed));
  m.params.push_back(make_uniform_param("hidden.weight", config.context_len * config.embed_dim,
                                        config.hidden_dim, init_seed));
  m.params.push_back(make_uniform_param("hidden.bias", 1, config.hidden_dim, init_seed));
  m.params.push_back(
      make_uniform_param("output.weight", config.hidden_dim, config.vocab_size, init_seed));
  m.params.push_back(make_uniform_param("output.bias", 1, config.vocab_size, init_seed));
  return m;
}

HiddenState zero_state(const Model& model, int batch) {
  if (model.arch != Arch::lstm) throw ConfigError("zero_state: not an LSTM model");
  HiddenState s;
  for (int h : model.lstm.hidden_dims) {
    s.h.push_back(Tensor::zeros(batch, h));
    s.c.push_back(Tensor::zeros(batch, h));
  }
  return s;
}

void substitute_output_layer(Model& model, const Vocabulary& new_vocab,
                             std::uint64_t init_seed) {
  if (new_vocab.size() < 2)
    throw ConfigError("substitute_output_layer: target vocabulary too small");
  for (auto& p : model.params) {
    p->trainable = false;
    p->zero_grad();
  }
  std::erase_if(model.params, [](const auto& p) {
    return p->name == "output.weight" || p->name == "output.bias";
  });
  const int feat = model.feature_dim();
  model.params.push_back(make_uniform_param("output.weight", feat, new_vocab.size(), init_seed));
  model.params.push_back(make_uniform_param("output.bias", 1, new_vocab.size(), init_seed));
  model.substituted = true;
  model.output_vocab = new_vocab;
}

// ---------------------------------------------------------------------------
// forwards
// ---------------------------------------------------------------------------

namespace {

void check_lstm_inputs(const Model& m, std::size_t n_ids, int batch, int steps,
                       const HiddenState& state) {
  if (m.arch != Arch::lstm) throw ConfigError("lstm_forward: not an LSTM model");
  if (batch <= 0 || steps <= 0) throw ShapeError("lstm_forward: batch and steps must be positive");
  if (n_ids != static_cast<std::size_t>(batch) * steps)
    throw ShapeError("lstm_forward: expected " + std::to_string(batch * steps) + " ids, got " +
                     std::to_string(n_ids));
  const auto layers = static_cast<std::size_t>(m.num_lstm_layers());
  if (state.h.size() != layers || state.c.size() != layers)
    throw ShapeError("lstm_forward: state layer count mismatch");
  for (std::size_t l = 0; l < layers; ++l) {
    if (state.h[l].rows != batch || state.h[l].cols != m.lstm.hidden_dims[l] ||
        !state.c[l].same_shape(state.h[l]))
      throw ShapeError("lstm_forward: state shape mismatch at layer " + std::to_string(l));
  }
}

}  // namespace

LstmGraphOut lstm_forward_graph(Model& model, Graph& g, const std::vector<std::int32_t>& ids,
                                int batch, int steps, const HiddenState& state, RunMode mode,
                                std::uint64_t mask_seed) {
  check_lstm_inputs(model, ids.size(), batch, steps, state);
  const int layers = model.num_lstm_layers();
  const bool drop = mode == RunMode::train && model.lstm.weight_drop_p > 0.0f;

  Value emb = g.param(model.param("embedding"));
  std::vector<Value> w_ih, w_hh, b_ih, b_hh;
  for (int l = 0; l < layers; ++l) {
    const int h = model.lstm.hidden_dims[l];
    w_ih.push_back(g.param(model.param(lstm_param_name(l, "weight_ih"))));
    Value whh = g.param(model.param(lstm_param_name(l, "weight_hh")));
    if (drop) {
      Tensor mask = make_dropout_mask(h, 4 * h, 1.0f - model.lstm.weight_drop_p,
                                      mix_seed(mask_seed, static_cast<std::uint64_t>(l)));
      whh = g.apply_mask(whh, std::move(mask));
    }
    w_hh.push_back(whh);
    b_ih.push_back(g.param(model.param(lstm_param_name(l, "bias_ih"))));
    b_hh.push_back(g.param(model.param(lstm_param_name(l, "bias_hh"))));
  }
  Value out_b = g.param(model.param("output.bias"));
  Value out_w;
  if (!model.output_tied()) out_w = g.param(model.param("output.weight"));

  std::vector<Value> h(layers), c(layers);
  for (int l = 0; l < layers; ++l) {
    h[l] = g.input(state.h[l]);
    c[l] = g.input(state.c[l]);
  }

  LstmGraphOut out;
  for (int t = 0; t < steps; ++t) {
    std::vector<std::int32_t> step_ids(ids.begin() + static_cast<std::size_t>(t) * batch,
                                       ids.begin() + static_cast<std::size_t>(t + 1) * batch);
    Value x = g.embedding_lookup(emb, std::move(step_ids));
    for (int l = 0; l < layers; ++l) {
      const int hd = model.lstm.hidden_dims[l];
      Value gates = g.add(g.matmul(x, w_ih[l]), g.matmul(h[l], w_hh[l]));
      gates = g.add_bias_row(gates, b_ih[l]);
      gates = g.add_bias_row(gates, b_hh[l]);
      Value gi = g.sigmoid(g.slice_cols(gates, 0, hd));
      Value gf = g.sigmoid(g.slice_cols(gates, hd, 2 * hd));
      Value gg = g.tanh(g.slice_cols(gates, 2 * hd, 3 * hd));
      Value go = g.sigmoid(g.slice_cols(gates, 3 * hd, 4 * hd));
      c[l] = g.add(g.mul(gf, c[l]), g.mul(gi, gg));
      h[l] = g.mul(go, g.tanh(c[l]));
      x = h[l];
    }
    Value logits = model.output_tied() ? g.matmul(x, emb, /*transpose_b=*/true)
                                       : g.matmul(x, out_w);
    out.step_logits.push_back(g.add_bias_row(logits, out_b));
  }

  for (int l = 0; l < layers; ++l) {
    out.final_state.h.push_back(g.value(h[l]));
    out.final_state.c.push_back(g.value(c[l]));
  }
  return out;
}

Value ffnn_forward_graph(Model& model, Graph& g, const std::vector<std::int32_t>& contexts,
                         int batch) {
  if (model.arch != Arch::ffnn) throw ConfigError("ffnn_forward: not a FFNN model");
  const int ctx = model.ffnn.context_len;
  if (contexts.size() != static_cast<std::size_t>(batch) * ctx)
    throw ShapeError("ffnn_forward: expected " + std::to_string(batch * ctx) + " ids, got " +
                     std::to_string(contexts.size()));

  Value emb = g.param(model.param("embedding"));
  std::vector<Value> parts;
  parts.reserve(static_cast<std::size_t>(ctx));
  for (int j = 0; j < ctx; ++j) {
    std::vector<std::int32_t> ids(static_cast<std::size_t>(batch));
    for (int b = 0; b < batch; ++b) ids[b] = contexts[static_cast<std::size_t>(b) * ctx + j];
    parts.push_back(g.embedding_lookup(emb, std::move(ids)));
  }
  Value x = g.concat_cols(parts);
  Value hidden = g.relu(g.add_bias_row(g.matmul(x, g.param(model.param("hidden.weight"))),
                                       g.param(model.param("hidden.bias"))));
  return g.add_bias_row(g.matmul(hidden, g.param(model.param("output.weight"))),
                        g.param(model.param("output.bias")));
}

LstmOut lstm_forward(const Model& model, const std::vector<std::int32_t>& ids, int batch,
                     int steps, const HiddenState& state, RunMode mode,
                     std::uint64_t mask_seed) {
  check_lstm_inputs(model, ids.size(), batch, steps, state);
  const int layers = model.num_lstm_layers();
  const bool drop = mode == RunMode::train && model.lstm.weight_drop_p > 0.0f;
  const auto& k = kernels::active();

  const Tensor& emb = model.param("embedding").value;
  std::vector<const Tensor*> w_ih, b_ih, b_hh;
  std::vector<Tensor> w_hh_eff(static_cast<std::size_t>(layers));
  for (int l = 0; l < layers; ++l) {
    const int h = model.lstm.hidden_dims[l];
    w_ih.push_back(&model.param(lstm_param_name(l, "weight_ih")).value);
    const Tensor& whh = model.param(lstm_param_name(l, "weight_hh")).value;
    if (drop) {
      Tensor mask = make_dropout_mask(h, 4 * h, 1.0f - model.lstm.weight_drop_p,
                                      mix_seed(mask_seed, static_cast<std::uint64_t>(l)));
      w_hh_eff[l] = Tensor(whh.rows, whh.cols);
      k.mul(w_hh_eff[l].ptr(), whh.ptr(), mask.ptr(), mask.size());
    } else {
      w_hh_eff[l] = whh;
    }
    b_ih.push_back(&model.param(lstm_param_name(l, "bias_ih")).value);
    b_hh.push_back(&model.param(lstm_param_name(l, "bias_hh")).value);
  }
  const Tensor& out_b = model.param("output.bias").value;
  const Tensor* out_w = model.output_tied() ? nullptr : &model.param("output.weight").value;

  LstmOut out;
  out.state = state;
  out.logits = Tensor(batch * steps, model.output_dim());

  for (int t = 0; t < steps; ++t) {
    std::vector<std::int32_t> step_ids(ids.begin() + static_cast<std::size_t>(t) * batch,
                                       ids.begin() + static_cast<std::size_t>(t + 1) * batch);
    Tensor x = ops::embedding_rows(emb, step_ids);
    for (int l = 0; l < layers; ++l) {
      const int hd = model.lstm.hidden_dims[l];
      Tensor gates = ops::matmul(x, *w_ih[l]);
      ops::add_inplace(gates, ops::matmul(out.state.h[l], w_hh_eff[l]));
      ops::add_bias_row_inplace(gates, *b_ih[l]);
      ops::add_bias_row_inplace(gates, *b_hh[l]);
      Tensor gi = ops::slice_cols(gates, 0, hd);
      ops::sigmoid_inplace(gi);
      Tensor gf = ops::slice_cols(gates, hd, 2 * hd);
      ops::sigmoid_inplace(gf);
      Tensor gg = ops::slice_cols(gates, 2 * hd, 3 * hd);
      ops::tanh_inplace(gg);
      Tensor go = ops::slice_cols(gates, 3 * hd, 4 * hd);
      ops::sigmoid_inplace(go);
      Tensor c_new(batch, hd);
      k.mul(c_new.ptr(), gf.ptr(), out.state.c[l].ptr(), c_new.size());
      Tensor ig(batch, hd);
      k.mul(ig.ptr(), gi.ptr(), gg.ptr(), ig.size());
      ops::add_inplace(c_new, ig);
      out.state.c[l] = std::move(c_new);
      Tensor tc = out.state.c[l];
      ops::tanh_inplace(tc);
      Tensor h_new(batch, hd);
      k.mul(h_new.ptr(), go.ptr(), tc.ptr(), h_new.size());
      out.state.h[l] = std::move(h_new);
      x = out.state.h[l];
    }
    Tensor logits = out_w == nullptr ? ops::matmul(x, emb, /*transpose_b=*/true)
                                     : ops::matmul(x, *out_w);
    ops::add_bias_row_inplace(logits, out_b);
    std::memcpy(out.logits.row_ptr(t * batch), logits.ptr(),
                sizeof(float) * logits.size());
  }
  return out;
}

Tensor ffnn_forward(const Model& model, const std::vector<std::int32_t>& contexts, int batch) {
  if (model.arch != Arch::ffnn) throw ConfigError("ffnn_forward: not a FFNN model");
  const int ctx = model.ffnn.context_len;
  if (contexts.size() != static_cast<std::size_t>(batch) * ctx)
    throw ShapeError("ffnn_forward: expected " + std::to_string(batch * ctx) + " ids, got " +
                     std::to_string(contexts.size()));

  const Tensor& emb = model.param("embedding").value;
  std::vector<Tensor> parts;
  parts.reserve(static_cast<std::size_t>(ctx));
  for (int j = 0; j < ctx; ++j) {
    std::vector<std::int32_t> ids(static_cast<std::size_t>(batch));
    for (int b = 0; b < batch; ++b) ids[b] = contexts[static_cast<std::size_t>(b) * ctx + j];
    parts.push_back(ops::embedding_rows(emb, ids));
  }
  std::vector<const Tensor*> part_ptrs;
  for (const Tensor& p : parts) part_ptrs.push_back(&p);
  Tensor x = ops::concat_cols(part_ptrs);
  Tensor hidden = ops::matmul(x, model.param("hidden.weight").value);
  ops::add_bias_row_inplace(hidden, model.param("hidden.bias").value);
  ops::relu_inplace(hidden);
  Tensor logits = ops::matmul(hidden, model.param("output.weight").value);
  ops::add_bias_row_inplace(logits, model.param("output.bias").value);
  return logits;
}

}  // namespace glosslm
