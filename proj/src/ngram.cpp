#include "glosslm/ngram.hpp"

#include <cmath>

#include <json.hpp>

namespace glosslm {

namespace {
using ordered_json = nlohmann::ordered_json;
}

const char* smoothing_name(Smoothing s) {
  return s == Smoothing::add_k ? "add_k" : "witten_bell";
}

Smoothing smoothing_from_name(const std::string& s) {
  if (s == "add_k") return Smoothing::add_k;
  if (s == "witten_bell") return Smoothing::witten_bell;
  throw UsageError("unknown smoothing '" + s + "' (expected add_k or witten_bell)");
}

double NgramModel::prob(std::span<const std::int32_t> context, std::int32_t word) const {
  const int ctx_len = order - 1;
  const auto take = std::min<std::size_t>(context.size(), static_cast<std::size_t>(ctx_len));
  std::vector<std::int32_t> ctx(context.end() - take, context.end());
  const double v = static_cast<double>(vocab.size());

  if (smoothing == Smoothing::add_k) {
    // add-k over the highest available order
    std::uint64_t pair_count = 0, ctx_count = 0;
    auto it = tables[ctx.size()].find(ctx);
    if (it != tables[ctx.size()].end()) {
      ctx_count = it->second.total;
      auto wit = it->second.counts.find(word);
      if (wit != it->second.counts.end()) pair_count = wit->second;
    }
    const double denom = static_cast<double>(ctx_count) + k * v;
    if (denom == 0.0) return 1.0 / v;  // k = 0 with an unseen context
    return (static_cast<double>(pair_count) + k) / denom;
  }

  // interpolated Witten-Bell, uniform base distribution
  double p = 1.0 / v;
  for (std::size_t c = 0; c <= ctx.size(); ++c) {
    std::vector<std::int32_t> suffix(ctx.end() - c, ctx.end());
    auto it = tables[c].find(suffix);
    if (it == tables[c].end()) continue;  // no events: back off entirely
    const NgramModel::ContextCell& cell = it->second;
    const double types = static_cast<double>(cell.counts.size());
    const double total = static_cast<double>(cell.total);
    double cw = 0.0;
    auto wit = cell.counts.find(word);
    if (wit != cell.counts.end()) cw = static_cast<double>(wit->second);
    p = (cw + types * p) / (total + types);
  }
  return p;
}

double NgramModel::logprob(std::span<const std::int32_t> context, std::int32_t word) const {
  if (word < 0 || word >= vocab.size())
    throw IndexError("ngram logprob: word id out of vocabulary range");
  return std::log(prob(context, word));
}

NgramModel fit_ngram(const Corpus& corpus, const Vocabulary& vocab, int order,
                     Smoothing smoothing, double k) {
  if (order < 1) throw DomainError("fit_ngram: order must be >= 1");
  if (k < 0.0) throw DomainError("fit_ngram: add-k constant must be non-negative");
  if (corpus.sentences.empty()) throw SizeError("fit_ngram: empty corpus");

  NgramModel model;
  model.order = order;
  model.smoothing = smoothing;
  model.k = k;
  model.vocab = vocab;
  model.tables.resize(static_cast<std::size_t>(order));

  for (const GlossSentence& sentence : corpus.sentences) {
    std::vector<std::int32_t> context(static_cast<std::size_t>(order - 1), vocab.eos_id());
    for (std::int32_t w : tokenize(sentence, vocab, /*append_eos=*/true)) {
      for (int c = 0; c < order; ++c) {
        std::vector<std::int32_t> suffix(context.end() - c, context.end());
        NgramModel::ContextCell& cell = model.tables[c][std::move(suffix)];
        ++cell.total;
        ++cell.counts[w];
      }
      if (order > 1) {
        context.erase(context.begin());
        context.push_back(w);
      }
    }
  }
  return model;
}

PerplexityReport ngram_perplexity(const NgramModel& model, const Corpus& corpus,
                                  const EvalOptions& opts) {
  if (corpus.sentences.empty()) throw SizeError("ngram_perplexity: empty corpus");

  KahanSum sum;
  std::size_t targets = 0;
  for (const GlossSentence& sentence : corpus.sentences) {
    std::vector<std::int32_t> context(static_cast<std::size_t>(model.order - 1),
                                      model.vocab.eos_id());
    for (std::int32_t w : tokenize(sentence, model.vocab, /*append_eos=*/true)) {
      sum.add(-model.logprob(context, w));
      ++targets;
      if (model.order > 1) {
        context.erase(context.begin());
        context.push_back(w);
      }
    }
  }

  PerplexityReport report;
  report.model_id = opts.model_id;
  report.corpus_id = opts.corpus_id;
  report.token_count = targets;
  report.cross_entropy = sum.total / static_cast<double>(targets);
  report.perplexity = std::exp(report.cross_entropy);
  report.oov_rate = oov_rate(corpus, model.vocab);
  report.vocab_size = model.vocab.size();
  report.timestamp = current_timestamp();
  return report;
}

std::string ngram_to_json(const NgramModel& model) {
  ordered_json j;
  j["order"] = model.order;
  j["smoothing"] = smoothing_name(model.smoothing);
  j["k"] = model.k;
  j["vocab"] = model.vocab.words();
  ordered_json tables = ordered_json::array();
  for (const NgramModel::Table& table : model.tables) {
    ordered_json entries = ordered_json::array();
    for (const auto& [ctx, cell] : table) {
      ordered_json entry;
      entry["context"] = ctx;
      ordered_json counts = ordered_json::array();
      for (const auto& [word, count] : cell.counts)
        counts.push_back(ordered_json::array({word, count}));
      entry["counts"] = std::move(counts);
      entries.push_back(std::move(entry));
    }
    tables.push_back(std::move(entries));
  }
  j["tables"] = std::move(tables);
  return j.dump() + "\n";
}

NgramModel ngram_from_json(const std::string& json_text) {
  try {
    const ordered_json j = ordered_json::parse(json_text);
    NgramModel model;
    model.order = j.at("order").get<int>();
    model.smoothing = smoothing_from_name(j.at("smoothing").get<std::string>());
    model.k = j.at("k").get<double>();
    model.vocab = Vocabulary(j.at("vocab").get<std::vector<std::string>>());
    const ordered_json& tables = j.at("tables");
    if (static_cast<int>(tables.size()) != model.order)
      throw CorruptionError("ngram dump: table count does not match order");
    model.tables.resize(tables.size());
    for (std::size_t c = 0; c < tables.size(); ++c) {
      for (const auto& entry : tables[c]) {
        auto ctx = entry.at("context").get<std::vector<std::int32_t>>();
        if (ctx.size() != c) throw CorruptionError("ngram dump: context length mismatch");
        NgramModel::ContextCell cell;
        for (const auto& pair : entry.at("counts")) {
          const auto word = pair.at(0).get<std::int32_t>();
          const auto count = pair.at(1).get<std::uint64_t>();
          cell.counts[word] = count;
          cell.total += count;
        }
        model.tables[c].emplace(std::move(ctx), std::move(cell));
      }
    }
    return model;
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError(std::string("malformed ngram dump: ") + e.what());
  }
}

}  // namespace glosslm
