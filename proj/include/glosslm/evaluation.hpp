#pragma once

// Perplexity and OOV measurement plus the results-matrix report emission.
// Cross-entropy is natural-log nats per target token (eos included) and
// perplexity is e^CE computed from the same accumulator.

#include <string>
#include <vector>

#include "glosslm/corpus.hpp"
#include "glosslm/models.hpp"

namespace glosslm {

struct PerplexityReport {
  std::string model_id = "model";
  std::string corpus_id = "corpus";
  std::size_t token_count = 0;  // targets scored, eos included
  double cross_entropy = 0.0;   // nats per token
  double perplexity = 1.0;
  double oov_rate = 0.0;        // over corpus tokens, eos excluded
  std::uint64_t seed = 0;
  std::int32_t vocab_size = 0;
  std::string timestamp;
};

struct EvalOptions {
  std::string model_id = "model";
  std::string corpus_id = "corpus";
  int max_threads = 0;  // 0: GLOSSLM_THREADS, else hardware concurrency
};

// Mean negative log-likelihood over every target token of the corpus. LSTM
// models thread hidden state across one eos-joined stream; FFNN models score
// per sentence with eos-padded contexts (parallelizable, exact-sum merge).
PerplexityReport evaluate(const Model& model, const Corpus& corpus,
                          const EvalOptions& opts = {});

// Fraction of corpus tokens mapping to unk under vocab.
double oov_rate(const Corpus& corpus, const Vocabulary& vocab);

// Type-level variant: fraction of distinct corpus word types absent from
// vocab.
double oov_type_rate(const Corpus& corpus, const Vocabulary& vocab);

// Corpus tokenized through the model's source vocabulary; identical to
// evaluate apart from report labeling.
PerplexityReport cross_lingual_eval(const Model& model, const Corpus& corpus,
                                    const EvalOptions& opts = {});

std::string report_to_json(const PerplexityReport& report);
PerplexityReport report_from_json(const std::string& json_text);
std::string report_to_text(const PerplexityReport& report);

// --- results matrices --------------------------------------------------------

enum class MatrixLayout { table1, table2 };

struct MatrixEntry {
  std::string method;  // ffnn | lstm | ngram
  std::string column;  // table1: ptb | bsl; table2: fine_tuning | substitution
  PerplexityReport report;
};

struct ResultsMatrix {
  MatrixLayout layout = MatrixLayout::table1;
  std::vector<MatrixEntry> cells;  // sorted by (method, column)
};

ResultsMatrix make_results_matrix(std::vector<MatrixEntry> entries, MatrixLayout layout);
std::string matrix_to_json(const ResultsMatrix& matrix);
ResultsMatrix matrix_from_json(const std::string& json_text);
// Aligned text table; missing cells render as a dash.
std::string matrix_to_text(const ResultsMatrix& matrix);

// ISO-8601 UTC; honors SOURCE_DATE_EPOCH for reproducible artifacts.
std::string current_timestamp();

// Evaluation shard parallelism cap from GLOSSLM_THREADS.
int eval_thread_cap(int requested = 0);

}  // namespace glosslm
