#pragma once

// Count-based n-gram language model with add-k or interpolated Witten-Bell
// smoothing, used for the cross-lingual perplexity baseline.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "glosslm/corpus.hpp"
#include "glosslm/evaluation.hpp"

namespace glosslm {

enum class Smoothing { add_k, witten_bell };

const char* smoothing_name(Smoothing s);
Smoothing smoothing_from_name(const std::string& s);

class NgramModel {
 public:
  struct ContextCell {
    std::uint64_t total = 0;
    std::map<std::int32_t, std::uint64_t> counts;
  };
  // tables[c] maps length-c contexts to continuation counts
  using Table = std::map<std::vector<std::int32_t>, ContextCell>;

  int order = 3;
  Smoothing smoothing = Smoothing::witten_bell;
  double k = 1.0;  // add-k constant; k = 0 is the MLE view
  Vocabulary vocab;
  std::vector<Table> tables;

  // Natural-log smoothed probability of word after context (last order-1 ids
  // are used). Never -inf for k > 0 or Witten-Bell.
  double logprob(std::span<const std::int32_t> context, std::int32_t word) const;

  // Linear probability, exposed for normalization property tests.
  double prob(std::span<const std::int32_t> context, std::int32_t word) const;
};

NgramModel fit_ngram(const Corpus& corpus, const Vocabulary& vocab, int order,
                     Smoothing smoothing, double k = 1.0);

PerplexityReport ngram_perplexity(const NgramModel& model, const Corpus& corpus,
                                  const EvalOptions& opts = {});

std::string ngram_to_json(const NgramModel& model);
NgramModel ngram_from_json(const std::string& json_text);

}  // namespace glosslm
