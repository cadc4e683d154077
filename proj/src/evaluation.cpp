#include "glosslm/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <set>
#include <ctime>
#include <thread>

#include <json.hpp>

namespace glosslm {

namespace {

using ordered_json = nlohmann::ordered_json;

// One eos-joined id stream with a leading eos, so every corpus token
// (including each sentence's eos) is a prediction target.
std::vector<std::int32_t> eval_stream(const Corpus& corpus, const Vocabulary& vocab) {
  std::vector<std::int32_t> stream;
  stream.push_back(vocab.eos_id());
  for (const GlossSentence& s : corpus.sentences) {
    for (const std::string& t : s.tokens) stream.push_back(vocab.lookup(t));
    stream.push_back(vocab.eos_id());
  }
  return stream;
}

double lstm_nll_sum(const Model& model, const Corpus& corpus, std::size_t* n_targets) {
  const std::vector<std::int32_t> in_stream = eval_stream(corpus, model.input_vocab());
  const std::vector<std::int32_t> tgt_stream =
      model.substituted ? eval_stream(corpus, model.target_vocab()) : in_stream;

  const std::size_t targets = in_stream.size() - 1;
  *n_targets = targets;
  constexpr std::size_t kChunk = 512;

  HiddenState state = zero_state(model, 1);
  KahanSum sum;
  for (std::size_t pos = 0; pos < targets; pos += kChunk) {
    const auto steps = static_cast<int>(std::min(kChunk, targets - pos));
    std::vector<std::int32_t> inputs(in_stream.begin() + pos,
                                     in_stream.begin() + pos + steps);
    std::vector<std::int32_t> tgts(tgt_stream.begin() + pos + 1,
                                   tgt_stream.begin() + pos + 1 + steps);
    LstmOut out = lstm_forward(model, inputs, 1, steps, state, RunMode::eval, 0);
    state = std::move(out.state);
    for (double nll : ops::row_nll(out.logits, tgts)) sum.add(nll);
  }
  return sum.total;
}

// Context windows for one sentence: every token plus the trailing eos is a
// target, contexts left-padded with eos.
void ffnn_sentence_batch(const GlossSentence& sentence, const Vocabulary& in_vocab,
                         const Vocabulary& tgt_vocab, int ctx_len,
                         std::vector<std::int32_t>* contexts,
                         std::vector<std::int32_t>* targets) {
  const std::vector<std::int32_t> in_ids = tokenize(sentence, in_vocab, false);
  const std::vector<std::int32_t> tgt_ids = tokenize(sentence, tgt_vocab, true);
  const auto len = static_cast<int>(in_ids.size());
  contexts->clear();
  targets->clear();
  for (int pos = 0; pos <= len; ++pos) {
    for (int j = pos - ctx_len; j < pos; ++j)
      contexts->push_back(j < 0 ? in_vocab.eos_id() : in_ids[j]);
    targets->push_back(tgt_ids[pos]);
  }
}

double ffnn_nll_sum(const Model& model, const Corpus& corpus, int max_threads,
                    std::size_t* n_targets) {
  const int ctx = model.ffnn.context_len;
  const std::size_t n_sent = corpus.sentences.size();
  std::vector<double> sentence_sums(n_sent, 0.0);
  std::size_t targets = 0;
  for (const GlossSentence& s : corpus.sentences) targets += s.tokens.size() + 1;
  *n_targets = targets;

  auto score_range = [&](std::size_t begin, std::size_t end) {
    std::vector<std::int32_t> contexts, tgts;
    for (std::size_t i = begin; i < end; ++i) {
      ffnn_sentence_batch(corpus.sentences[i], model.input_vocab(), model.target_vocab(),
                          ctx, &contexts, &tgts);
      const Tensor logits = ffnn_forward(model, contexts, static_cast<int>(tgts.size()));
      KahanSum s;
      for (double nll : ops::row_nll(logits, tgts)) s.add(nll);
      sentence_sums[i] = s.total;
    }
  };

  const int threads = std::clamp<int>(eval_thread_cap(max_threads), 1,
                                      static_cast<int>(n_sent));
  if (threads <= 1) {
    score_range(0, n_sent);
  } else {
    std::vector<std::thread> pool;
    const std::size_t per = (n_sent + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      const std::size_t begin = static_cast<std::size_t>(t) * per;
      const std::size_t end = std::min(n_sent, begin + per);
      if (begin < end) pool.emplace_back(score_range, begin, end);
    }
    for (auto& th : pool) th.join();
  }

  // merge in sentence order so totals are independent of the thread count
  KahanSum sum;
  for (double s : sentence_sums) sum.add(s);
  return sum.total;
}

}  // namespace

int eval_thread_cap(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("GLOSSLM_THREADS"); env != nullptr && *env != '\0') {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

double oov_rate(const Corpus& corpus, const Vocabulary& vocab) {
  std::size_t total = 0, unk = 0;
  for (const GlossSentence& s : corpus.sentences) {
    for (const std::string& t : s.tokens) {
      ++total;
      if (vocab.lookup(t) == vocab.unk_id()) ++unk;
    }
  }
  if (total == 0) throw SizeError("oov_rate: empty corpus");
  return static_cast<double>(unk) / static_cast<double>(total);
}

double oov_type_rate(const Corpus& corpus, const Vocabulary& vocab) {
  std::set<std::string> types;
  for (const GlossSentence& s : corpus.sentences)
    for (const std::string& t : s.tokens) types.insert(t);
  if (types.empty()) throw SizeError("oov_type_rate: empty corpus");
  std::size_t unk = 0;
  for (const std::string& t : types)
    if (vocab.lookup(t) == vocab.unk_id()) ++unk;
  return static_cast<double>(unk) / static_cast<double>(types.size());
}

PerplexityReport evaluate(const Model& model, const Corpus& corpus, const EvalOptions& opts) {
  if (corpus.sentences.empty()) throw SizeError("evaluate: empty corpus");

  std::size_t targets = 0;
  double nll_sum = 0.0;
  if (model.arch == Arch::lstm)
    nll_sum = lstm_nll_sum(model, corpus, &targets);
  else
    nll_sum = ffnn_nll_sum(model, corpus, opts.max_threads, &targets);

  PerplexityReport report;
  report.model_id = opts.model_id;
  report.corpus_id = opts.corpus_id;
  report.token_count = targets;
  report.cross_entropy = nll_sum / static_cast<double>(targets);
  report.perplexity = std::exp(report.cross_entropy);
  report.oov_rate = oov_rate(corpus, model.input_vocab());
  report.seed = model.meta.run_seed;
  report.vocab_size = model.input_vocab().size();
  report.timestamp = current_timestamp();
  return report;
}

PerplexityReport cross_lingual_eval(const Model& model, const Corpus& corpus,
                                    const EvalOptions& opts) {
  // tokenization already runs through the model's stored source vocabulary
  return evaluate(model, corpus, opts);
}

// ---------------------------------------------------------------------------
// serialization
// ---------------------------------------------------------------------------

namespace {

ordered_json report_json(const PerplexityReport& r) {
  ordered_json j;
  j["model"] = r.model_id;
  j["corpus"] = r.corpus_id;
  j["tokens"] = r.token_count;
  j["cross_entropy"] = r.cross_entropy;
  j["perplexity"] = r.perplexity;
  j["oov_rate"] = r.oov_rate;
  j["seed"] = r.seed;
  j["vocab_size"] = r.vocab_size;
  j["timestamp"] = r.timestamp;
  return j;
}

PerplexityReport report_from(const ordered_json& j) {
  PerplexityReport r;
  r.model_id = j.at("model").get<std::string>();
  r.corpus_id = j.at("corpus").get<std::string>();
  r.token_count = j.at("tokens").get<std::size_t>();
  r.cross_entropy = j.at("cross_entropy").get<double>();
  r.perplexity = j.at("perplexity").get<double>();
  r.oov_rate = j.at("oov_rate").get<double>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.vocab_size = j.at("vocab_size").get<std::int32_t>();
  r.timestamp = j.at("timestamp").get<std::string>();
  return r;
}

std::string format_double(double v, const char* fmt) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

const char* layout_name(MatrixLayout l) {
  return l == MatrixLayout::table1 ? "table1" : "table2";
}

MatrixLayout layout_from_name(const std::string& s) {
  if (s == "table1") return MatrixLayout::table1;
  if (s == "table2") return MatrixLayout::table2;
  throw ValidationError("unknown matrix layout '" + s + "'");
}

std::vector<std::string> layout_columns(MatrixLayout l) {
  if (l == MatrixLayout::table1) return {"ptb", "bsl"};
  return {"fine_tuning", "substitution"};
}

const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> methods = {"ffnn", "lstm", "ngram"};
  return methods;
}

}  // namespace

std::string report_to_json(const PerplexityReport& report) {
  return report_json(report).dump(2) + "\n";
}

PerplexityReport report_from_json(const std::string& json_text) {
  try {
    return report_from(ordered_json::parse(json_text));
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError(std::string("malformed perplexity report: ") + e.what());
  }
}

std::string report_to_text(const PerplexityReport& r) {
  std::string out;
  out += "model            " + r.model_id + "\n";
  out += "corpus           " + r.corpus_id + "\n";
  out += "tokens           " + std::to_string(r.token_count) + "\n";
  out += "cross_entropy    " + format_double(r.cross_entropy, "%.6f") + "\n";
  out += "perplexity       " + format_double(r.perplexity, "%.4f") + "\n";
  out += "oov_rate         " + format_double(100.0 * r.oov_rate, "%.2f") + "%\n";
  out += "vocab_size       " + std::to_string(r.vocab_size) + "\n";
  out += "seed             " + std::to_string(r.seed) + "\n";
  return out;
}

ResultsMatrix make_results_matrix(std::vector<MatrixEntry> entries, MatrixLayout layout) {
  const std::vector<std::string> columns = layout_columns(layout);
  for (const MatrixEntry& e : entries) {
    if (std::find(columns.begin(), columns.end(), e.column) == columns.end())
      throw ValidationError("matrix column '" + e.column + "' not in layout " +
                            layout_name(layout));
    if (std::find(known_methods().begin(), known_methods().end(), e.method) ==
        known_methods().end())
      throw ValidationError("unknown matrix method '" + e.method + "'");
  }
  std::sort(entries.begin(), entries.end(), [](const MatrixEntry& a, const MatrixEntry& b) {
    return a.method != b.method ? a.method < b.method : a.column < b.column;
  });
  for (std::size_t i = 1; i < entries.size(); ++i) {
    if (entries[i].method == entries[i - 1].method &&
        entries[i].column == entries[i - 1].column)
      throw ConflictError("duplicate matrix cell (" + entries[i].method + ", " +
                          entries[i].column + ")");
  }
  return ResultsMatrix{layout, std::move(entries)};
}

std::string matrix_to_json(const ResultsMatrix& matrix) {
  ordered_json j;
  j["layout"] = layout_name(matrix.layout);
  ordered_json cells = ordered_json::array();
  for (const MatrixEntry& e : matrix.cells) {
    ordered_json cell;
    cell["method"] = e.method;
    cell["column"] = e.column;
    cell["report"] = report_json(e.report);
    cells.push_back(std::move(cell));
  }
  j["cells"] = std::move(cells);
  return j.dump(2) + "\n";
}

ResultsMatrix matrix_from_json(const std::string& json_text) {
  try {
    const ordered_json j = ordered_json::parse(json_text);
    std::vector<MatrixEntry> entries;
    for (const auto& cell : j.at("cells")) {
      MatrixEntry e;
      e.method = cell.at("method").get<std::string>();
      e.column = cell.at("column").get<std::string>();
      e.report = report_from(cell.at("report"));
      entries.push_back(std::move(e));
    }
    return make_results_matrix(std::move(entries), layout_from_name(j.at("layout")));
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError(std::string("malformed results matrix: ") + e.what());
  }
}

std::string matrix_to_text(const ResultsMatrix& matrix) {
  const std::vector<std::string> columns = layout_columns(matrix.layout);
  auto find_cell = [&](const std::string& method, const std::string& column)
      -> const PerplexityReport* {
    for (const MatrixEntry& e : matrix.cells)
      if (e.method == method && e.column == column) return &e.report;
    return nullptr;
  };

  constexpr int kCol = 14;
  auto pad = [](std::string s, int w) {
    while (static_cast<int>(s.size()) < w) s.push_back(' ');
    return s;
  };

  std::string out = pad("method", kCol);
  for (const std::string& c : columns) out += pad(c, kCol);
  out += "\n";

  for (const std::string& method : known_methods()) {
    bool any = false;
    for (const std::string& c : columns) any = any || find_cell(method, c) != nullptr;
    if (!any) continue;
    out += pad(method, kCol);
    for (const std::string& c : columns) {
      const PerplexityReport* r = find_cell(method, c);
      out += pad(r != nullptr ? format_double(r->perplexity, "%.2f") : "—", kCol);
    }
    out += "\n";
  }

  out += pad("oov", kCol);
  for (const std::string& c : columns) {
    const PerplexityReport* r = nullptr;
    for (const std::string& method : known_methods())
      if ((r = find_cell(method, c)) != nullptr) break;
    out += pad(r != nullptr ? format_double(100.0 * r->oov_rate, "%.2f") + "%" : "—", kCol);
  }
  out += "\n";
  return out;
}

std::string current_timestamp() {
  std::time_t t = 0;
  if (const char* env = std::getenv("SOURCE_DATE_EPOCH"); env != nullptr && *env != '\0')
    t = static_cast<std::time_t>(std::strtoll(env, nullptr, 10));
  else
    t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace glosslm
