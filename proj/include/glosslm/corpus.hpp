#pragma once

// Gloss corpus ingestion: ELAN tab-separated tier exports, plain line
// corpora, gloss normalization, sentence segmentation, vocabulary
// construction, deterministic splits and corpus statistics.

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "glosslm/common.hpp"

namespace glosslm {

struct GlossInterval {
  long long start_ms = 0;
  long long end_ms = 0;
  std::string label;
};

struct AnnotationDoc {
  std::vector<GlossInterval> rh_glosses;
  std::vector<GlossInterval> lh_glosses;
  std::vector<GlossInterval> free_translations;
};

struct TierNames {
  std::string rh = "RH-IDgloss";
  std::string lh = "LH-IDgloss";
  std::string free_translation = "Free Translation";
};

struct GlossSentence {
  std::vector<std::string> tokens;
  // absent for plain-text corpora
  std::optional<std::pair<long long, long long>> source_span;
};

struct Corpus {
  std::vector<GlossSentence> sentences;
  std::string name;
};

struct CorpusStats {
  std::size_t sentence_count = 0;
  double mean_len = 0.0;
  std::size_t min_len = 0;
  std::size_t max_len = 0;
  std::size_t vocab_size = 0;   // distinct corpus token types, reserved excluded
  std::size_t token_count = 0;  // eos excluded
};

// Gloss classes dropped during normalization, keyed by the label prefix
// before the first ':' (or the whole label when there is none).
struct GlossFilter {
  std::set<std::string> excluded_prefixes = {"PT", "G", "PALM-UP"};
};

enum class HandPolicy { rh_only, rh_plus_lh_exclusive };

// Tab-separated ELAN export: tier \t start_ms \t end_ms \t annotation.
// Header row optional (detected by a non-numeric second column). Rows of
// undeclared tiers are ignored; each declared tier must appear, intervals
// are returned sorted by start and must not overlap within a tier.
AnnotationDoc parse_elan_export(const std::string& path, const TierNames& tiers);

// Lowercased token with annotation prefixes stripped, or nullopt when the
// gloss belongs to an excluded class.
std::optional<std::string> normalize_gloss(const std::string& raw, const GlossFilter& filter);

std::vector<GlossSentence> segment_sentences(const AnnotationDoc& doc, HandPolicy policy,
                                             const GlossFilter& filter);

// One sentence per non-blank line, whitespace-separated, lowercased.
Corpus load_line_corpus(const std::string& path);

void write_line_corpus(const Corpus& corpus, const std::string& path);

constexpr std::int32_t kUnkId = 0;
constexpr std::int32_t kEosId = 1;
inline const char* kUnkToken = "<unk>";
inline const char* kEosToken = "<eos>";

class Vocabulary {
 public:
  Vocabulary();
  explicit Vocabulary(const std::vector<std::string>& words_in_index_order);

  std::int32_t add(const std::string& word);  // idempotent
  std::int32_t lookup(const std::string& word) const;  // unk_id when absent
  bool contains(const std::string& word) const;
  const std::string& word_of(std::int32_t id) const;
  std::int32_t size() const { return static_cast<std::int32_t>(words_.size()); }
  const std::vector<std::string>& words() const { return words_; }

  std::int32_t unk_id() const { return kUnkId; }
  std::int32_t eos_id() const { return kEosId; }

 private:
  std::unordered_map<std::string, std::int32_t> id_of_;
  std::vector<std::string> words_;
};

// Every token with frequency >= min_count, ids by descending frequency then
// lexicographic, after the reserved unk/eos pair.
Vocabulary build_vocabulary(const Corpus& corpus, std::size_t min_count = 1);

std::vector<std::int32_t> tokenize(const GlossSentence& sentence, const Vocabulary& vocab,
                                   bool append_eos);

std::vector<std::string> detokenize(const std::vector<std::int32_t>& ids,
                                    const Vocabulary& vocab);

struct CorpusSplit {
  Corpus train;
  Corpus valid;
  Corpus test;
};

// Seeded shuffle, then floor(0.85*N) to train and the remainder split evenly
// between validation and test, odd sentence to validation.
CorpusSplit split_corpus(const Corpus& corpus, std::uint64_t seed);

CorpusStats corpus_stats(const Corpus& corpus);

}  // namespace glosslm
