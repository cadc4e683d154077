#include <doctest.h>

#include <cmath>
#include <cstdlib>

#include "glosslm/evaluation.hpp"
#include "glosslm/models.hpp"
#include "support/synth.hpp"

using namespace glosslm;

namespace {

Vocabulary filler_vocab(int size) {
  Vocabulary v;
  for (int i = v.size(); i < size; ++i) v.add("w" + std::to_string(i));
  return v;
}

Model uniform_ffnn(std::int32_t vocab_size) {
  FfnnConfig cfg;
  cfg.vocab_size = vocab_size;
  cfg.context_len = 2;
  cfg.embed_dim = 3;
  cfg.hidden_dim = 4;
  Model m = build_ffnn(cfg, 1);
  m.vocab = filler_vocab(vocab_size);
  std::fill(m.param("output.weight").value.data.begin(),
            m.param("output.weight").value.data.end(), 0.0f);
  std::fill(m.param("output.bias").value.data.begin(),
            m.param("output.bias").value.data.end(), 0.0f);
  return m;
}

Model random_lstm(std::int32_t vocab_size, std::uint64_t seed) {
  LstmConfig cfg;
  cfg.vocab_size = vocab_size;
  cfg.embed_dim = 4;
  cfg.hidden_dims = {5, 4};
  cfg.weight_drop_p = 0.0f;
  Model m = build_lstm(cfg, seed);
  m.vocab = filler_vocab(vocab_size);
  return m;
}

Corpus w_corpus(std::initializer_list<std::vector<std::string>> sentences) {
  Corpus c;
  for (const auto& tokens : sentences) c.sentences.push_back({tokens, std::nullopt});
  return c;
}

}  // namespace

TEST_SUITE("evaluation") {

TEST_CASE("a uniform model over 668 classes scores perplexity exactly 668") {
  Model m = uniform_ffnn(668);
  const Corpus corpus = w_corpus({{"w2", "w3"}, {"w4"}});
  const PerplexityReport report = evaluate(m, corpus);
  CHECK(report.perplexity == doctest::Approx(668.0).epsilon(1e-6));
  CHECK(report.cross_entropy == doctest::Approx(std::log(668.0)).epsilon(1e-6));
  CHECK(report.token_count == 5);  // three tokens + two eos targets
  CHECK(report.oov_rate == 0.0);
}

TEST_CASE("cross entropy ln 10 exponentiates to perplexity 10") {
  Model m = uniform_ffnn(10);
  const Corpus corpus = w_corpus({{"w2", "w3", "w4"}});
  const PerplexityReport report = evaluate(m, corpus);
  CHECK(report.cross_entropy == doctest::Approx(std::log(10.0)).epsilon(1e-9));
  CHECK(report.perplexity == doctest::Approx(10.0).epsilon(1e-9));
  // perplexity comes from the same accumulator as cross-entropy
  CHECK(report.perplexity == std::exp(report.cross_entropy));
}

TEST_CASE("oov_rate counts unknown tokens, eos excluded") {
  Vocabulary vocab;
  vocab.add("a");
  vocab.add("b");
  CHECK(oov_rate(w_corpus({{"a", "c", "b", "c"}}), vocab) == doctest::Approx(0.5));
  CHECK(oov_rate(w_corpus({{"a", "b"}}), vocab) == 0.0);
  CHECK_THROWS_AS(oov_rate(Corpus{}, vocab), SizeError);
  CHECK_THROWS_AS(evaluate(uniform_ffnn(4), Corpus{}), SizeError);

  // type-level variant: c is one unknown type of three
  CHECK(oov_type_rate(w_corpus({{"a", "c", "b", "c"}}), vocab) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("ffnn evaluation is independent of sentence partitioning and threads") {
  Model f = uniform_ffnn(12);
  Rng rng(4);
  for (float& v : f.param("output.weight").value.data) v = rng.next_uniform(-0.4f, 0.4f);

  Corpus corpus;
  for (int i = 0; i < 9; ++i)
    corpus.sentences.push_back(
        {{"w" + std::to_string(2 + i % 9), "w" + std::to_string(2 + (i * 3) % 9)},
         std::nullopt});

  const PerplexityReport whole = evaluate(f, corpus);

  // sentence-by-sentence exact-sum merge
  KahanSum sum;
  std::size_t tokens = 0;
  for (const GlossSentence& s : corpus.sentences) {
    Corpus single;
    single.sentences.push_back(s);
    const PerplexityReport r = evaluate(f, single);
    sum.add(r.cross_entropy * static_cast<double>(r.token_count));
    tokens += r.token_count;
  }
  CHECK(whole.cross_entropy ==
        doctest::Approx(sum.total / static_cast<double>(tokens)).epsilon(1e-12));

  setenv("GLOSSLM_THREADS", "3", 1);
  const PerplexityReport threaded = evaluate(f, corpus);
  unsetenv("GLOSSLM_THREADS");
  CHECK(threaded.cross_entropy == whole.cross_entropy);  // merge order fixed
}

TEST_CASE("lstm evaluation equals sentence-by-sentence scoring with threaded state") {
  Model m = random_lstm(12, 9);
  Corpus corpus;
  for (int i = 0; i < 6; ++i)
    corpus.sentences.push_back({{"w" + std::to_string(2 + i % 10),
                                 "w" + std::to_string(2 + (i * 7) % 10),
                                 "w" + std::to_string(2 + (i * 5) % 10)},
                                std::nullopt});
  const PerplexityReport whole = evaluate(m, corpus);

  // manual pass: one stream, per-sentence chunks, state threaded across them
  HiddenState state = zero_state(m, 1);
  KahanSum sum;
  std::size_t tokens = 0;
  std::int32_t prev = m.vocab.eos_id();
  for (const GlossSentence& s : corpus.sentences) {
    std::vector<std::int32_t> ids = tokenize(s, m.vocab, true);
    std::vector<std::int32_t> inputs;
    inputs.push_back(prev);
    inputs.insert(inputs.end(), ids.begin(), ids.end() - 1);
    LstmOut out = lstm_forward(m, inputs, 1, static_cast<int>(inputs.size()), state,
                               RunMode::eval, 0);
    state = std::move(out.state);
    for (double nll : ops::row_nll(out.logits, ids)) sum.add(nll);
    tokens += ids.size();
    prev = m.vocab.eos_id();
  }
  CHECK(tokens == whole.token_count);
  CHECK(whole.cross_entropy ==
        doctest::Approx(sum.total / static_cast<double>(tokens)).epsilon(1e-6));
}

TEST_CASE("duplicating a corpus of uniform per-token difficulty keeps perplexity") {
  Model f = uniform_ffnn(16);
  const Corpus once = w_corpus({{"w2", "w5"}, {"w3"}});
  Corpus twice = once;
  for (const auto& s : once.sentences) twice.sentences.push_back(s);
  const double a = evaluate(f, once).perplexity;
  const double b = evaluate(f, twice).perplexity;
  CHECK(a == doctest::Approx(b).epsilon(1e-12));
}

TEST_CASE("perplexity is bounded below by 1") {
  const synth::ClassGrammar grammar{3, 4, 2, 8};
  const Corpus corpus = grammar.sample(1, 12);
  Model m = random_lstm(40, 11);
  const PerplexityReport r = evaluate(m, corpus);
  CHECK(r.perplexity >= 1.0);
}

TEST_CASE("cross-lingual evaluation of the model's own corpus is the identity") {
  Model m = random_lstm(12, 13);
  const Corpus corpus = w_corpus({{"w2", "w7"}, {"w4", "w3", "w9"}});
  const PerplexityReport in_domain = evaluate(m, corpus);
  const PerplexityReport cross = cross_lingual_eval(m, corpus);
  CHECK(cross.cross_entropy == in_domain.cross_entropy);
  CHECK(cross.perplexity == in_domain.perplexity);
}

TEST_CASE("reports round-trip through json") {
  PerplexityReport r;
  r.model_id = "lstm:test";
  r.corpus_id = "bsl";
  r.token_count = 123;
  r.cross_entropy = 2.5;
  r.perplexity = std::exp(2.5);
  r.oov_rate = 0.127;
  r.seed = 44;
  r.vocab_size = 668;
  r.timestamp = "2020-01-01T00:00:00Z";
  const std::string json_text = report_to_json(r);
  const PerplexityReport back = report_from_json(json_text);
  CHECK(report_to_json(back) == json_text);
  CHECK(back.perplexity == r.perplexity);
  CHECK_THROWS_AS(report_from_json("{not json"), ParseError);
}

TEST_CASE("results matrices render, serialize and reject duplicates") {
  PerplexityReport a;
  a.model_id = "ffnn";
  a.perplexity = 190.46;
  a.oov_rate = 0.0609;
  PerplexityReport b = a;
  b.model_id = "lstm";
  b.perplexity = 65.91;

  std::vector<MatrixEntry> entries = {{"ffnn", "ptb", a}, {"lstm", "ptb", b}};
  const ResultsMatrix matrix = make_results_matrix(entries, MatrixLayout::table1);

  const std::string text = matrix_to_text(matrix);
  CHECK(text.find("190.46") != std::string::npos);
  CHECK(text.find("65.91") != std::string::npos);
  CHECK(text.find("—") != std::string::npos);  // two missing bsl cells
  CHECK(text.find("6.09%") != std::string::npos);

  // byte-deterministic on identical input
  CHECK(matrix_to_text(make_results_matrix(entries, MatrixLayout::table1)) == text);
  const std::string json_text = matrix_to_json(matrix);
  CHECK(matrix_to_json(make_results_matrix(entries, MatrixLayout::table1)) == json_text);

  const ResultsMatrix parsed = matrix_from_json(json_text);
  CHECK(matrix_to_json(parsed) == json_text);  // parse-render round trip

  entries.push_back({"ffnn", "ptb", a});
  CHECK_THROWS_AS(make_results_matrix(entries, MatrixLayout::table1), ConflictError);

  CHECK_THROWS_AS(
      make_results_matrix({{"ffnn", "nowhere", a}}, MatrixLayout::table1), ValidationError);
  CHECK_NOTHROW(make_results_matrix({{"ffnn", "fine_tuning", a}}, MatrixLayout::table2));
}

}  // TEST_SUITE
