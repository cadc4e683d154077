#pragma once

// The two language-model architectures: a stacked LSTM with optionally tied
// embedding/output weights and weight-drop recurrent regularization, and a
// fixed-context feed-forward net. Covers construction, forward passes (taped
// for training, tape-free for evaluation), output-layer substitution and
// checkpoint serialization.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "glosslm/autodiff.hpp"
#include "glosslm/corpus.hpp"
#include "glosslm/tensor.hpp"

namespace glosslm {

enum class Arch { ffnn, lstm };
enum class RunMode { train, eval };

const char* arch_name(Arch a);
Arch arch_from_name(const std::string& s);

struct LstmConfig {
  std::int32_t vocab_size = 0;
  int embed_dim = 400;
  std::vector<int> hidden_dims = {1150, 1150, 400};
  bool tie_weights = true;
  float weight_drop_p = 0.5f;

  void validate() const;
};

struct FfnnConfig {
  std::int32_t vocab_size = 0;
  int context_len = 5;
  int embed_dim = 400;
  int hidden_dim = 400;

  void validate() const;
};

struct HiddenState {
  std::vector<Tensor> h;  // per layer, batch x hidden
  std::vector<Tensor> c;

  int batch() const { return h.empty() ? 0 : h.front().rows; }
};

struct TrainingMeta {
  int epoch = -1;
  double validation_perplexity = 0.0;
  std::uint64_t run_seed = 0;
};

struct Model {
  Arch arch = Arch::lstm;
  LstmConfig lstm;
  FfnnConfig ffnn;
  Vocabulary vocab;                        // tokenizes inputs, always
  std::optional<Vocabulary> output_vocab;  // set after layer substitution
  bool substituted = false;
  TrainingMeta meta;
  std::vector<std::shared_ptr<Parameter>> params;  // manifest order

  Parameter& param(const std::string& name);
  const Parameter& param(const std::string& name) const;
  bool has_param(const std::string& name) const;
  std::vector<Parameter*> param_ptrs() const;

  const Vocabulary& input_vocab() const { return vocab; }
  const Vocabulary& target_vocab() const { return substituted ? *output_vocab : vocab; }
  // width of the logits row
  std::int32_t output_dim() const { return target_vocab().size(); }
  // input width of the output projection
  int feature_dim() const;
  bool output_tied() const { return arch == Arch::lstm && lstm.tie_weights && !substituted; }
  int num_lstm_layers() const { return static_cast<int>(lstm.hidden_dims.size()); }

  // Tied models share one storage between embedding and output projection;
  // throws InternalError when the tie or any grad/value shape pairing is
  // broken.
  void verify_invariants() const;
};

Model build_lstm(const LstmConfig& config, std::uint64_t init_seed);
Model build_ffnn(const FfnnConfig& config, std::uint64_t init_seed);

HiddenState zero_state(const Model& model, int batch);

// Replaces the output layer with a freshly initialized, untied projection
// sized to new_vocab and freezes every other parameter. Inputs keep using
// model.vocab.
void substitute_output_layer(Model& model, const Vocabulary& new_vocab,
                             std::uint64_t init_seed);

// --- taped forwards (training) ---------------------------------------------
// ids are time-major: id of (step t, batch row b) at ids[t * batch + b].

struct LstmGraphOut {
  std::vector<Value> step_logits;  // one batch x V value per step
  HiddenState final_state;         // detached from the graph
};

LstmGraphOut lstm_forward_graph(Model& model, Graph& g,
                                const std::vector<std::int32_t>& ids, int batch, int steps,
                                const HiddenState& state, RunMode mode,
                                std::uint64_t mask_seed);

// contexts are row-major: context word j of batch row b at
// contexts[b * context_len + j].
Value ffnn_forward_graph(Model& model, Graph& g, const std::vector<std::int32_t>& contexts,
                         int batch);

// --- tape-free forwards (evaluation / inspection) ---------------------------

struct LstmOut {
  Tensor logits;  // (batch * steps) x V, row (t * batch + b)
  HiddenState state;
};

LstmOut lstm_forward(const Model& model, const std::vector<std::int32_t>& ids, int batch,
                     int steps, const HiddenState& state, RunMode mode,
                     std::uint64_t mask_seed);

Tensor ffnn_forward(const Model& model, const std::vector<std::int32_t>& contexts, int batch);

// --- checkpoints -------------------------------------------------------------

void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace glosslm
