#pragma once

// Batch construction, the SGD training loop with lr annealing and best-model
// selection, and the two transfer-learning procedures (fine-tuning and
// output-layer substitution).

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "glosslm/corpus.hpp"
#include "glosslm/models.hpp"

namespace glosslm {

struct TrainConfig {
  int epochs = 100;
  int batch_size = 16;
  int bptt = 5;
  float lr = 30.0f;
  float anneal_factor = 4.0f;
  int anneal_patience = 1;
  std::optional<float> clip_norm = 0.25f;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_ce = 0.0;
  double valid_ce = 0.0;
  double valid_ppl = 0.0;
  float lr = 0.0f;
  double wall_seconds = 0.0;
};

struct RunResult {
  std::string best_checkpoint_path;
  std::vector<EpochRecord> records;
  int selection_epoch = -1;
  double best_valid_ppl = 0.0;
};

// --- batching ----------------------------------------------------------------

// ids are time-major: position (step t, stream b) at inputs[t * batch + b].
struct LstmBatch {
  std::vector<std::int32_t> inputs;
  std::vector<std::int32_t> targets;
  int steps = 0;
};

// Stream truncated to batch_size * floor(len / batch_size) and reshaped
// column-wise into batch_size parallel streams; bptt-sized windows with
// targets shifted one position, last short window kept.
std::vector<LstmBatch> make_lstm_batches(const std::vector<std::int32_t>& stream,
                                         int batch_size, int bptt);

// Dual-stream variant for substituted models: inputs drawn from in_stream,
// targets from tgt_stream (streams must be position-aligned).
std::vector<LstmBatch> make_lstm_batches(const std::vector<std::int32_t>& in_stream,
                                         const std::vector<std::int32_t>& tgt_stream,
                                         int batch_size, int bptt);

struct FfnnExamples {
  std::vector<std::int32_t> contexts;  // count x context_len, row-major
  std::vector<std::int32_t> targets;   // count
  int context_len = 0;
  std::size_t count = 0;
};

// One training pair per token position per sentence (eos target included),
// contexts left-padded with eos.
FfnnExamples make_ffnn_examples(const Corpus& corpus, const Vocabulary& in_vocab,
                                const Vocabulary& tgt_vocab, int context_len);

struct FfnnBatch {
  std::vector<std::int32_t> contexts;
  std::vector<std::int32_t> targets;
  int batch = 0;
};

// Pairs shuffled when shuffle_seed is set; the final partial batch is kept.
std::vector<FfnnBatch> make_ffnn_batches(const FfnnExamples& examples, int batch_size,
                                         std::optional<std::uint64_t> shuffle_seed);

// --- training ----------------------------------------------------------------

using EpochCallback = std::function<void(const EpochRecord&)>;

// Runs SGD for config.epochs epochs; validation cross-entropy is computed in
// eval mode after each epoch, the checkpoint is rewritten whenever validation
// perplexity improves and lr divides by anneal_factor after anneal_patience
// epochs without improvement. Frozen parameters are verified bit-identical
// after every epoch. Throws NumericError on divergence (the last good
// checkpoint stays on disk).
RunResult train(Model& model, const Corpus& train_corpus, const Corpus& valid_corpus,
                const TrainConfig& config, const std::string& checkpoint_path,
                const EpochCallback& on_epoch = {});

// Restarts training from a saved checkpoint with every parameter trainable.
// The source vocabulary is retained; target corpora tokenize through it.
RunResult finetune(const std::string& checkpoint_path, const Corpus& train_corpus,
                   const Corpus& valid_corpus, const TrainConfig& config,
                   const std::string& out_checkpoint_path, Model* out_model = nullptr,
                   const EpochCallback& on_epoch = {});

// Loads the checkpoint, substitutes the output layer for target_vocab (all
// other weights locked) and trains only the new layer. Inputs tokenize
// through the source vocabulary, targets through target_vocab.
RunResult train_substituted(const std::string& checkpoint_path, const Vocabulary& target_vocab,
                            const Corpus& train_corpus, const Corpus& valid_corpus,
                            const TrainConfig& config, const std::string& out_checkpoint_path,
                            Model* out_model = nullptr, const EpochCallback& on_epoch = {});

std::string epoch_record_to_json(const EpochRecord& record);

}  // namespace glosslm
