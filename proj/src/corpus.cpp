#include "glosslm/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

namespace glosslm {

namespace {

std::string to_lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string to_upper(std::string s) {
  for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

bool is_integer(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!std::isdigit(static_cast<unsigned char>(c))) return false;
  return true;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return out;
}

void sort_and_check_tier(std::vector<GlossInterval>& tier, const std::string& name,
                         const std::string& path) {
  std::stable_sort(tier.begin(), tier.end(),
                   [](const GlossInterval& a, const GlossInterval& b) {
                     return a.start_ms < b.start_ms;
                   });
  for (std::size_t i = 1; i < tier.size(); ++i) {
    if (tier[i].start_ms < tier[i - 1].end_ms)
      throw ValidationError(path + ": overlapping intervals in tier '" + name + "' around " +
                            std::to_string(tier[i].start_ms) + "ms");
  }
}

}  // namespace

AnnotationDoc parse_elan_export(const std::string& path, const TierNames& tiers) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open annotation file: " + path);

  AnnotationDoc doc;
  std::string line;
  std::size_t line_no = 0;
  bool saw_rh = false, saw_lh = false, saw_ft = false;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> cols = split_tabs(line);
    if (cols.size() < 4) {
      if (line_no == 1) continue;  // tolerate short header rows
      throw ParseError(path + ":" + std::to_string(line_no) +
                       ": expected 4 tab-separated columns, got " +
                       std::to_string(cols.size()));
    }
    if (line_no == 1 && !is_integer(cols[1])) continue;  // header row

    if (!is_integer(cols[1]) || !is_integer(cols[2]))
      throw ParseError(path + ":" + std::to_string(line_no) + ": non-numeric time column");

    GlossInterval iv;
    iv.start_ms = std::stoll(cols[1]);
    iv.end_ms = std::stoll(cols[2]);
    iv.label = cols[3];
    if (iv.start_ms >= iv.end_ms)
      throw ValidationError(path + ":" + std::to_string(line_no) +
                            ": interval start must precede end");

    if (cols[0] == tiers.rh) {
      doc.rh_glosses.push_back(std::move(iv));
      saw_rh = true;
    } else if (cols[0] == tiers.lh) {
      doc.lh_glosses.push_back(std::move(iv));
      saw_lh = true;
    } else if (cols[0] == tiers.free_translation) {
      doc.free_translations.push_back(std::move(iv));
      saw_ft = true;
    }
    // rows of undeclared tiers are ignored
  }

  if (!saw_rh) throw ValidationError(path + ": missing tier '" + tiers.rh + "'");
  if (!saw_lh) throw ValidationError(path + ": missing tier '" + tiers.lh + "'");
  if (!saw_ft) throw ValidationError(path + ": missing tier '" + tiers.free_translation + "'");

  sort_and_check_tier(doc.rh_glosses, tiers.rh, path);
  sort_and_check_tier(doc.lh_glosses, tiers.lh, path);
  sort_and_check_tier(doc.free_translations, tiers.free_translation, path);
  return doc;
}

std::optional<std::string> normalize_gloss(const std::string& raw, const GlossFilter& filter) {
  std::string s = raw;
  // uncertainty marker
  while (!s.empty() && s.front() == '?') s.erase(s.begin());
  if (s.empty()) return std::nullopt;

  const std::string upper = to_upper(s);
  const std::size_t colon = upper.find(':');
  const std::string prefix = colon == std::string::npos ? upper : upper.substr(0, colon);
  if (filter.excluded_prefixes.count(prefix) > 0) return std::nullopt;

  std::string body;
  if (upper.rfind("DS", 0) == 0) {
    // depicting/classifier construction: lexical content sits after the
    // final ':' when present, otherwise the gloss carries none
    const std::size_t last = s.rfind(':');
    if (last == std::string::npos) return std::nullopt;
    body = s.substr(last + 1);
  } else if (colon != std::string::npos) {
    body = s.substr(s.rfind(':') + 1);
  } else {
    body = s;
  }

  body = to_lower(body);
  // tokens may not contain whitespace
  std::string token;
  bool pending_sep = false;
  for (char c : body) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_sep = !token.empty();
      continue;
    }
    if (pending_sep) {
      token.push_back('-');
      pending_sep = false;
    }
    token.push_back(c);
  }
  if (token.empty()) return std::nullopt;
  return token;
}

std::vector<GlossSentence> segment_sentences(const AnnotationDoc& doc, HandPolicy policy,
                                             const GlossFilter& filter) {
  // gather candidate glosses with a tier rank for stable merging
  struct Candidate {
    long long start_ms;
    long long end_ms;
    int tier_rank;  // 0 = RH, 1 = LH
    const std::string* label;
  };
  std::vector<Candidate> candidates;
  candidates.reserve(doc.rh_glosses.size() + doc.lh_glosses.size());
  for (const GlossInterval& g : doc.rh_glosses)
    candidates.push_back({g.start_ms, g.end_ms, 0, &g.label});

  if (policy == HandPolicy::rh_plus_lh_exclusive) {
    for (const GlossInterval& lh : doc.lh_glosses) {
      bool overlaps_rh = false;
      for (const GlossInterval& rh : doc.rh_glosses) {
        if (lh.start_ms < rh.end_ms && rh.start_ms < lh.end_ms) {
          overlaps_rh = true;
          break;
        }
      }
      if (!overlaps_rh) candidates.push_back({lh.start_ms, lh.end_ms, 1, &lh.label});
    }
  }

  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    return a.start_ms != b.start_ms ? a.start_ms < b.start_ms : a.tier_rank < b.tier_rank;
  });

  std::vector<GlossSentence> sentences;
  for (const GlossInterval& ft : doc.free_translations) {
    GlossSentence sent;
    sent.source_span = {ft.start_ms, ft.end_ms};
    for (const Candidate& c : candidates) {
      if (c.start_ms < ft.start_ms || c.start_ms >= ft.end_ms) continue;
      if (auto token = normalize_gloss(*c.label, filter)) sent.tokens.push_back(*token);
    }
    if (!sent.tokens.empty()) sentences.push_back(std::move(sent));
  }
  return sentences;
}

Corpus load_line_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus file: " + path);
  Corpus corpus;
  corpus.name = path;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    GlossSentence sent;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) sent.tokens.push_back(to_lower(tok));
    if (!sent.tokens.empty()) corpus.sentences.push_back(std::move(sent));
  }
  return corpus;
}

void write_line_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write corpus file: " + path);
  for (const GlossSentence& sent : corpus.sentences) {
    for (std::size_t i = 0; i < sent.tokens.size(); ++i) {
      if (i > 0) out << ' ';
      out << sent.tokens[i];
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

Vocabulary::Vocabulary() {
  add(kUnkToken);
  add(kEosToken);
}

Vocabulary::Vocabulary(const std::vector<std::string>& words_in_index_order) {
  if (words_in_index_order.size() < 2 || words_in_index_order[0] != kUnkToken ||
      words_in_index_order[1] != kEosToken)
    throw ValidationError("vocabulary must start with reserved unk/eos tokens");
  for (const std::string& w : words_in_index_order) add(w);
  if (size() != static_cast<std::int32_t>(words_in_index_order.size()))
    throw ValidationError("vocabulary contains duplicate words");
}

std::int32_t Vocabulary::add(const std::string& word) {
  auto it = id_of_.find(word);
  if (it != id_of_.end()) return it->second;
  const auto id = static_cast<std::int32_t>(words_.size());
  id_of_.emplace(word, id);
  words_.push_back(word);
  return id;
}

std::int32_t Vocabulary::lookup(const std::string& word) const {
  auto it = id_of_.find(word);
  return it == id_of_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(const std::string& word) const { return id_of_.count(word) > 0; }

const std::string& Vocabulary::word_of(std::int32_t id) const {
  if (id < 0 || id >= size())
    throw IndexError("vocabulary id " + std::to_string(id) + " out of range");
  return words_[id];
}

Vocabulary build_vocabulary(const Corpus& corpus, std::size_t min_count) {
  if (corpus.sentences.empty()) throw SizeError("build_vocabulary: empty corpus");
  if (min_count < 1) throw DomainError("build_vocabulary: min_count must be >= 1");

  std::unordered_map<std::string, std::size_t> freq;
  for (const GlossSentence& s : corpus.sentences)
    for (const std::string& t : s.tokens) ++freq[t];
  freq.erase(kUnkToken);
  freq.erase(kEosToken);

  std::vector<std::pair<std::string, std::size_t>> entries(freq.begin(), freq.end());
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });

  Vocabulary vocab;
  for (const auto& [word, count] : entries)
    if (count >= min_count) vocab.add(word);
  return vocab;
}

std::vector<std::int32_t> tokenize(const GlossSentence& sentence, const Vocabulary& vocab,
                                   bool append_eos) {
  std::vector<std::int32_t> ids;
  ids.reserve(sentence.tokens.size() + (append_eos ? 1 : 0));
  for (const std::string& t : sentence.tokens) ids.push_back(vocab.lookup(t));
  if (append_eos) ids.push_back(vocab.eos_id());
  return ids;
}

std::vector<std::string> detokenize(const std::vector<std::int32_t>& ids,
                                    const Vocabulary& vocab) {
  std::vector<std::string> words;
  words.reserve(ids.size());
  for (std::int32_t id : ids) words.push_back(vocab.word_of(id));
  return words;
}

CorpusSplit split_corpus(const Corpus& corpus, std::uint64_t seed) {
  const std::size_t n = corpus.sentences.size();
  if (n < 3) throw SizeError("split_corpus: need at least 3 sentences, got " + std::to_string(n));

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(mix_seed(seed, 1));
  for (std::size_t i = n - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(rng.next_below(i + 1));
    std::swap(order[i], order[j]);
  }

  const std::size_t n_train = static_cast<std::size_t>(0.85 * static_cast<double>(n));
  const std::size_t rest = n - n_train;
  const std::size_t n_test = rest / 2;           // odd leftover goes to validation
  const std::size_t n_valid = rest - n_test;

  CorpusSplit split;
  split.train.name = corpus.name + ".train";
  split.valid.name = corpus.name + ".valid";
  split.test.name = corpus.name + ".test";
  for (std::size_t i = 0; i < n; ++i) {
    const GlossSentence& s = corpus.sentences[order[i]];
    if (i < n_train)
      split.train.sentences.push_back(s);
    else if (i < n_train + n_valid)
      split.valid.sentences.push_back(s);
    else
      split.test.sentences.push_back(s);
  }
  return split;
}

CorpusStats corpus_stats(const Corpus& corpus) {
  if (corpus.sentences.empty()) throw SizeError("corpus_stats: empty corpus");
  CorpusStats stats;
  stats.sentence_count = corpus.sentences.size();
  stats.min_len = corpus.sentences.front().tokens.size();
  std::set<std::string> types;
  for (const GlossSentence& s : corpus.sentences) {
    const std::size_t len = s.tokens.size();
    stats.token_count += len;
    stats.min_len = std::min(stats.min_len, len);
    stats.max_len = std::max(stats.max_len, len);
    for (const std::string& t : s.tokens) types.insert(t);
  }
  stats.vocab_size = types.size();
  stats.mean_len =
      static_cast<double>(stats.token_count) / static_cast<double>(stats.sentence_count);
  return stats;
}

}  // namespace glosslm
