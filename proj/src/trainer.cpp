#include "glosslm/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstring>

#include <json.hpp>

#include "glosslm/autodiff.hpp"
#include "glosslm/evaluation.hpp"

namespace glosslm {

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be positive");
  if (bptt < 1) throw ConfigError("train: bptt must be positive");
  if (!(lr > 0.0f)) throw ConfigError("train: lr must be positive");
  if (!(anneal_factor > 1.0f)) throw ConfigError("train: anneal_factor must exceed 1");
  if (anneal_patience < 1) throw ConfigError("train: anneal_patience must be positive");
  if (clip_norm.has_value() && !(*clip_norm > 0.0f))
    throw ConfigError("train: clip_norm must be positive when set");
}

// ---------------------------------------------------------------------------
// batching
// ---------------------------------------------------------------------------

std::vector<LstmBatch> make_lstm_batches(const std::vector<std::int32_t>& in_stream,
                                         const std::vector<std::int32_t>& tgt_stream,
                                         int batch_size, int bptt) {
  if (batch_size < 1 || bptt < 1)
    throw DomainError("make_lstm_batches: batch_size and bptt must be positive");
  if (in_stream.size() != tgt_stream.size())
    throw ShapeError("make_lstm_batches: streams must be position-aligned");
  const std::size_t per_stream = in_stream.size() / static_cast<std::size_t>(batch_size);
  if (per_stream < 2)
    throw SizeError("make_lstm_batches: stream of " + std::to_string(in_stream.size()) +
                    " ids is too short for batch_size " + std::to_string(batch_size));

  // stream b covers positions [b * per_stream, (b + 1) * per_stream)
  std::vector<LstmBatch> batches;
  for (std::size_t t = 0; t + 1 < per_stream; t += static_cast<std::size_t>(bptt)) {
    const auto steps = static_cast<int>(
        std::min<std::size_t>(static_cast<std::size_t>(bptt), per_stream - 1 - t));
    LstmBatch batch;
    batch.steps = steps;
    batch.inputs.reserve(static_cast<std::size_t>(steps) * batch_size);
    batch.targets.reserve(static_cast<std::size_t>(steps) * batch_size);
    for (int s = 0; s < steps; ++s) {
      for (int b = 0; b < batch_size; ++b) {
        const std::size_t pos = static_cast<std::size_t>(b) * per_stream + t + s;
        batch.inputs.push_back(in_stream[pos]);
        batch.targets.push_back(tgt_stream[pos + 1]);
      }
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

std::vector<LstmBatch> make_lstm_batches(const std::vector<std::int32_t>& stream,
                                         int batch_size, int bptt) {
  return make_lstm_batches(stream, stream, batch_size, bptt);
}

FfnnExamples make_ffnn_examples(const Corpus& corpus, const Vocabulary& in_vocab,
                                const Vocabulary& tgt_vocab, int context_len) {
  if (context_len < 1) throw DomainError("make_ffnn_examples: context_len must be positive");
  FfnnExamples ex;
  ex.context_len = context_len;
  for (const GlossSentence& sentence : corpus.sentences) {
    const std::vector<std::int32_t> in_ids = tokenize(sentence, in_vocab, false);
    const std::vector<std::int32_t> tgt_ids = tokenize(sentence, tgt_vocab, true);
    const auto len = static_cast<int>(in_ids.size());
    for (int pos = 0; pos <= len; ++pos) {
      for (int j = pos - context_len; j < pos; ++j)
        ex.contexts.push_back(j < 0 ? in_vocab.eos_id() : in_ids[j]);
      ex.targets.push_back(tgt_ids[pos]);
      ++ex.count;
    }
  }
  return ex;
}

std::vector<FfnnBatch> make_ffnn_batches(const FfnnExamples& examples, int batch_size,
                                         std::optional<std::uint64_t> shuffle_seed) {
  if (batch_size < 1) throw DomainError("make_ffnn_batches: batch_size must be positive");
  std::vector<std::size_t> order(examples.count);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (shuffle_seed.has_value()) {
    Rng rng(*shuffle_seed);
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng.next_below(i));
      std::swap(order[i - 1], order[j]);
    }
  }

  std::vector<FfnnBatch> batches;
  const int ctx = examples.context_len;
  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
    FfnnBatch batch;
    batch.batch = static_cast<int>(end - start);
    for (std::size_t i = start; i < end; ++i) {
      const std::size_t row = order[i];
      const auto* src = examples.contexts.data() + row * static_cast<std::size_t>(ctx);
      batch.contexts.insert(batch.contexts.end(), src, src + ctx);
      batch.targets.push_back(examples.targets[row]);
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

// ---------------------------------------------------------------------------
// the training loop
// ---------------------------------------------------------------------------

namespace {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return mix_seed(mix_seed(seed, a), b);
}

std::vector<std::int32_t> train_stream(const Corpus& corpus, const Vocabulary& vocab) {
  std::vector<std::int32_t> stream;
  stream.push_back(vocab.eos_id());
  for (const GlossSentence& s : corpus.sentences)
    for (std::int32_t id : tokenize(s, vocab, /*append_eos=*/true)) stream.push_back(id);
  return stream;
}

struct FrozenSnapshot {
  std::vector<const Parameter*> params;
  std::vector<std::vector<float>> values;

  explicit FrozenSnapshot(const Model& model) {
    for (const auto& p : model.params) {
      if (p->trainable) continue;
      params.push_back(p.get());
      values.push_back(p->value.data);
    }
  }

  void verify() const {
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params[i]->value.data.size() != values[i].size() ||
          std::memcmp(params[i]->value.data.data(), values[i].data(),
                      values[i].size() * sizeof(float)) != 0)
        throw InternalError("frozen parameter '" + params[i]->name +
                            "' drifted during training");
    }
  }
};

// one epoch of SGD; returns the summed NLL over all trained targets
double lstm_train_epoch(Model& model, const std::vector<LstmBatch>& batches,
                        const TrainConfig& config, float lr, int epoch,
                        std::vector<Parameter*>& params) {
  HiddenState state = zero_state(model, config.batch_size);
  double nll_sum = 0.0;
  std::size_t window = 0;
  for (const LstmBatch& batch : batches) {
    Graph g;
    LstmGraphOut out = lstm_forward_graph(model, g, batch.inputs, config.batch_size,
                                          batch.steps, state, RunMode::train,
                                          derive_seed(config.seed, epoch + 1, window));
    Value total;
    for (int t = 0; t < batch.steps; ++t) {
      std::vector<std::int32_t> step_targets(
          batch.targets.begin() + static_cast<std::size_t>(t) * config.batch_size,
          batch.targets.begin() + static_cast<std::size_t>(t + 1) * config.batch_size);
      Value ce = g.cross_entropy_sum(out.step_logits[t], std::move(step_targets));
      total = t == 0 ? ce : g.add(total, ce);
    }
    nll_sum += static_cast<double>(g.value(total).at(0, 0));
    const auto n_targets = static_cast<float>(batch.steps * config.batch_size);
    Value loss = g.scale(total, 1.0f / n_targets);
    g.backward(loss);
    sgd_step(params, lr, config.clip_norm);
    state = std::move(out.final_state);
    ++window;
  }
  return nll_sum;
}

double ffnn_train_epoch(Model& model, const FfnnExamples& examples, const TrainConfig& config,
                        float lr, int epoch, std::vector<Parameter*>& params) {
  const std::vector<FfnnBatch> batches =
      make_ffnn_batches(examples, config.batch_size, derive_seed(config.seed, 0x66666666ull, epoch));
  double nll_sum = 0.0;
  for (const FfnnBatch& batch : batches) {
    Graph g;
    Value logits = ffnn_forward_graph(model, g, batch.contexts, batch.batch);
    Value ce = g.cross_entropy_sum(logits, batch.targets);
    nll_sum += static_cast<double>(g.value(ce).at(0, 0));
    Value loss = g.scale(ce, 1.0f / static_cast<float>(batch.batch));
    g.backward(loss);
    sgd_step(params, lr, config.clip_norm);
  }
  return nll_sum;
}

}  // namespace

RunResult train(Model& model, const Corpus& train_corpus, const Corpus& valid_corpus,
                const TrainConfig& config, const std::string& checkpoint_path,
                const EpochCallback& on_epoch) {
  config.validate();
  if (train_corpus.sentences.empty()) throw SizeError("train: empty training corpus");
  if (valid_corpus.sentences.empty()) throw SizeError("train: empty validation corpus");

  RunResult result;
  result.best_checkpoint_path = checkpoint_path;
  result.best_valid_ppl = std::numeric_limits<double>::infinity();

  if (config.epochs == 0) {
    model.meta.epoch = -1;
    model.meta.run_seed = config.seed;
    model.meta.validation_perplexity =
        evaluate(model, valid_corpus, {"model", "valid"}).perplexity;
    save_checkpoint(model, checkpoint_path);
    result.best_valid_ppl = model.meta.validation_perplexity;
    return result;
  }

  std::vector<Parameter*> params = model.param_ptrs();
  const FrozenSnapshot frozen(model);
  const double divergence_ceiling =
      3.0 * std::log(static_cast<double>(model.output_dim()));

  // precomputed per-arch batch material
  std::vector<LstmBatch> lstm_batches;
  FfnnExamples ffnn_examples;
  std::size_t targets_per_epoch = 0;
  if (model.arch == Arch::lstm) {
    const std::vector<std::int32_t> in_stream = train_stream(train_corpus, model.input_vocab());
    if (model.substituted) {
      const std::vector<std::int32_t> tgt_stream =
          train_stream(train_corpus, model.target_vocab());
      lstm_batches = make_lstm_batches(in_stream, tgt_stream, config.batch_size, config.bptt);
    } else {
      lstm_batches = make_lstm_batches(in_stream, config.batch_size, config.bptt);
    }
    for (const LstmBatch& b : lstm_batches)
      targets_per_epoch += static_cast<std::size_t>(b.steps) * config.batch_size;
  } else {
    ffnn_examples = make_ffnn_examples(train_corpus, model.input_vocab(),
                                       model.target_vocab(), model.ffnn.context_len);
    targets_per_epoch = ffnn_examples.count;
    if (targets_per_epoch == 0) throw SizeError("train: no training pairs");
  }

  float lr = config.lr;
  int epochs_since_improvement = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double nll_sum =
        model.arch == Arch::lstm
            ? lstm_train_epoch(model, lstm_batches, config, lr, epoch, params)
            : ffnn_train_epoch(model, ffnn_examples, config, lr, epoch, params);
    const double train_ce = nll_sum / static_cast<double>(targets_per_epoch);

    model.verify_invariants();
    frozen.verify();

    if (!std::isfinite(train_ce) || train_ce > divergence_ceiling)
      throw NumericError("train: diverged at epoch " + std::to_string(epoch) +
                         " (train CE " + std::to_string(train_ce) +
                         "); last good checkpoint retained");

    const PerplexityReport valid = evaluate(model, valid_corpus, {"model", "valid"});
    const auto t1 = std::chrono::steady_clock::now();

    EpochRecord record;
    record.epoch = epoch;
    record.train_ce = train_ce;
    record.valid_ce = valid.cross_entropy;
    record.valid_ppl = valid.perplexity;
    record.lr = lr;
    record.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
    result.records.push_back(record);
    if (on_epoch) on_epoch(record);

    if (valid.perplexity < result.best_valid_ppl) {
      result.best_valid_ppl = valid.perplexity;
      result.selection_epoch = epoch;
      epochs_since_improvement = 0;
      model.meta.epoch = epoch;
      model.meta.validation_perplexity = valid.perplexity;
      model.meta.run_seed = config.seed;
      save_checkpoint(model, checkpoint_path);
    } else {
      ++epochs_since_improvement;
      if (epochs_since_improvement >= config.anneal_patience) {
        lr /= config.anneal_factor;
        epochs_since_improvement = 0;
      }
    }
  }
  return result;
}

RunResult finetune(const std::string& checkpoint_path, const Corpus& train_corpus,
                   const Corpus& valid_corpus, const TrainConfig& config,
                   const std::string& out_checkpoint_path, Model* out_model,
                   const EpochCallback& on_epoch) {
  Model model = load_checkpoint(checkpoint_path);
  for (auto& p : model.params) p->trainable = true;
  RunResult result = train(model, train_corpus, valid_corpus, config, out_checkpoint_path,
                           on_epoch);
  if (out_model != nullptr) *out_model = std::move(model);
  return result;
}

RunResult train_substituted(const std::string& checkpoint_path, const Vocabulary& target_vocab,
                            const Corpus& train_corpus, const Corpus& valid_corpus,
                            const TrainConfig& config, const std::string& out_checkpoint_path,
                            Model* out_model, const EpochCallback& on_epoch) {
  Model model = load_checkpoint(checkpoint_path);
  substitute_output_layer(model, target_vocab, mix_seed(config.seed, 0x5u));
  RunResult result = train(model, train_corpus, valid_corpus, config, out_checkpoint_path,
                           on_epoch);
  if (out_model != nullptr) *out_model = std::move(model);
  return result;
}

std::string epoch_record_to_json(const EpochRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["train_ce"] = r.train_ce;
  j["valid_ce"] = r.valid_ce;
  j["valid_ppl"] = r.valid_ppl;
  j["lr"] = r.lr;
  j["wall_seconds"] = r.wall_seconds;
  return j.dump();
}

}  // namespace glosslm
