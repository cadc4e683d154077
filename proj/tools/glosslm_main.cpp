// glosslm: gloss-corpus preprocessing, LM training, transfer learning and
// perplexity evaluation behind one executable.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "glosslm/corpus.hpp"
#include "glosslm/evaluation.hpp"
#include "glosslm/models.hpp"
#include "glosslm/ngram.hpp"
#include "glosslm/trainer.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;
using namespace glosslm;

namespace {

constexpr const char* kToolVersion = "0.1.0";

std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open input for hashing: " + path);
  std::uint64_t h = 0xCBF29CE484222325ull;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
    h = fnv1a64(buf, static_cast<std::size_t>(in.gcount()), h);
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write file: " + path.string());
  out << contents;
  if (!out) throw IoError("write failed: " + path.string());
}

// Re-run provenance: resolved config, input hashes and planned outputs,
// written into the output directory before any artifact.
struct Manifest {
  ordered_json j;

  Manifest(const std::string& subcommand, std::uint64_t seed) {
    j["subcommand"] = subcommand;
    j["tool_version"] = kToolVersion;
    j["seed"] = seed;
    j["timestamp"] = current_timestamp();
    j["config"] = ordered_json::object();
    j["inputs"] = ordered_json::object();
    j["outputs"] = ordered_json::array();
  }

  template <typename T>
  void config(const std::string& key, const T& value) {
    j["config"][key] = value;
  }

  void input(const std::string& path) { j["inputs"][path] = file_hash(path); }

  void output(const fs::path& path) { j["outputs"].push_back(path.string()); }

  void write(const fs::path& out_dir) const {
    write_file(out_dir / "manifest.json", j.dump(2) + "\n");
  }
};

fs::path prepare_out_dir(const std::string& out) {
  if (out.empty()) throw UsageError("--out directory is required");
  fs::path dir(out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory: " + out);
  return dir;
}

ordered_json stats_json(const CorpusStats& s) {
  ordered_json j;
  j["sentences"] = s.sentence_count;
  j["mean_len"] = s.mean_len;
  j["min_len"] = s.min_len;
  j["max_len"] = s.max_len;
  j["vocab_size"] = s.vocab_size;
  j["tokens"] = s.token_count;
  return j;
}

GlossFilter parse_filter(const std::string& csv) {
  GlossFilter filter;
  filter.excluded_prefixes.clear();
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) filter.excluded_prefixes.insert(item);
  return filter;
}

std::vector<int> parse_dims(const std::string& csv) {
  std::vector<int> dims;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      dims.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw UsageError("bad --hidden-dims entry '" + item + "'");
    }
  }
  return dims;
}

// ---------------------------------------------------------------------------
// subcommand state
// ---------------------------------------------------------------------------

struct CommonArgs {
  std::uint64_t seed = 0;
  std::string out;
  bool json = false;
};

struct TrainArgs {
  std::string train_path;
  std::string valid_path;
  TrainConfig config;
  bool no_clip = false;

  void resolve() {
    if (no_clip) config.clip_norm.reset();
  }
};

void add_train_flags(CLI::App* cmd, TrainArgs* args) {
  cmd->add_option("--train", args->train_path, "training corpus (plain text)")->required();
  cmd->add_option("--valid", args->valid_path, "validation corpus (plain text)")->required();
  cmd->add_option("--epochs", args->config.epochs, "training epochs")->capture_default_str();
  cmd->add_option("--batch-size", args->config.batch_size, "batch size")->capture_default_str();
  cmd->add_option("--bptt", args->config.bptt, "BPTT window length")->capture_default_str();
  cmd->add_option("--lr", args->config.lr, "initial learning rate")->capture_default_str();
  cmd->add_option("--anneal-factor", args->config.anneal_factor, "lr divisor on plateau")
      ->capture_default_str();
  cmd->add_option("--anneal-patience", args->config.anneal_patience,
                  "epochs without improvement before annealing")
      ->capture_default_str();
  cmd->add_option(
         "--clip-norm",
         [args](const CLI::results_t& res) {
           args->config.clip_norm = std::stof(res[0]);
           return true;
         },
         "global gradient-norm clip")
      ->type_name("FLOAT")
      ->expected(1);
  cmd->add_flag("--no-clip", args->no_clip, "disable gradient clipping");
}

void manifest_train_config(Manifest& m, const TrainArgs& args) {
  m.config("train", args.train_path);
  m.config("valid", args.valid_path);
  m.config("epochs", args.config.epochs);
  m.config("batch_size", args.config.batch_size);
  m.config("bptt", args.config.bptt);
  m.config("lr", args.config.lr);
  m.config("anneal_factor", args.config.anneal_factor);
  m.config("anneal_patience", args.config.anneal_patience);
  if (args.config.clip_norm.has_value())
    m.config("clip_norm", *args.config.clip_norm);
  else
    m.config("clip_norm", nullptr);
}

// Streams history.jsonl while training runs; wall seconds are zeroed when
// SOURCE_DATE_EPOCH pins artifacts for byte reproducibility.
class HistoryWriter {
 public:
  explicit HistoryWriter(const fs::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot write history: " + path.string());
  }

  void operator()(const EpochRecord& record) {
    EpochRecord r = record;
    if (std::getenv("SOURCE_DATE_EPOCH") != nullptr) r.wall_seconds = 0.0;
    out_ << epoch_record_to_json(r) << "\n";
    out_.flush();
  }

 private:
  std::ofstream out_;
};

void report_out(const PerplexityReport& report, const CommonArgs& common,
                const fs::path* out_dir) {
  if (common.json)
    std::cout << report_to_json(report);
  else
    std::cout << report_to_text(report);
  if (out_dir != nullptr) write_file(*out_dir / "report.json", report_to_json(report));
}

// ---------------------------------------------------------------------------
// subcommands
// ---------------------------------------------------------------------------

int cmd_preprocess(const CommonArgs& common, const std::string& elan_dir,
                   const std::string& plain, const TierNames& tiers,
                   const std::string& hand_policy, const std::string& exclude_csv) {
  if (elan_dir.empty() == plain.empty())
    throw UsageError("preprocess: give exactly one of --elan-dir or --plain");

  const fs::path out_dir = prepare_out_dir(common.out);
  Manifest manifest("preprocess", common.seed);
  manifest.config("hand_policy", hand_policy);
  manifest.config("exclude", exclude_csv);

  HandPolicy policy;
  if (hand_policy == "rh_only")
    policy = HandPolicy::rh_only;
  else if (hand_policy == "rh_plus_lh_exclusive")
    policy = HandPolicy::rh_plus_lh_exclusive;
  else
    throw UsageError("preprocess: unknown --hand-policy '" + hand_policy +
                     "' (expected rh_only or rh_plus_lh_exclusive)");

  Corpus corpus;
  if (!elan_dir.empty()) {
    const GlossFilter filter = parse_filter(exclude_csv);
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(elan_dir))
      if (entry.is_regular_file()) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw UsageError("preprocess: no annotation files in " + elan_dir);
    for (const fs::path& f : files) {
      manifest.input(f.string());
      const AnnotationDoc doc = parse_elan_export(f.string(), tiers);
      for (GlossSentence& s : segment_sentences(doc, policy, filter))
        corpus.sentences.push_back(std::move(s));
    }
    corpus.name = elan_dir;
  } else {
    manifest.input(plain);
    corpus = load_line_corpus(plain);
  }

  for (const char* name : {"corpus.txt", "train.txt", "valid.txt", "test.txt", "stats.json"})
    manifest.output(out_dir / name);
  manifest.write(out_dir);

  write_line_corpus(corpus, (out_dir / "corpus.txt").string());
  const CorpusSplit split = split_corpus(corpus, common.seed);
  write_line_corpus(split.train, (out_dir / "train.txt").string());
  write_line_corpus(split.valid, (out_dir / "valid.txt").string());
  write_line_corpus(split.test, (out_dir / "test.txt").string());

  ordered_json stats;
  stats["corpus"] = stats_json(corpus_stats(corpus));
  stats["seed"] = common.seed;
  stats["split"] = {{"train", split.train.sentences.size()},
                    {"valid", split.valid.sentences.size()},
                    {"test", split.test.sentences.size()}};
  write_file(out_dir / "stats.json", stats.dump(2) + "\n");

  std::cout << "preprocess: " << corpus.sentences.size() << " sentences -> "
            << split.train.sentences.size() << "/" << split.valid.sentences.size() << "/"
            << split.test.sentences.size() << " train/valid/test\n";
  return 0;
}

int cmd_train(const CommonArgs& common, TrainArgs& targs, const std::string& arch_name_str,
              std::size_t min_count, int embed_dim, const std::string& hidden_dims_csv,
              int hidden_dim, int context_len, bool untied, float weight_drop) {
  targs.resolve();
  targs.config.seed = common.seed;
  const fs::path out_dir = prepare_out_dir(common.out);
  const Arch arch = arch_from_name(arch_name_str);

  const Corpus train_corpus = load_line_corpus(targs.train_path);
  const Corpus valid_corpus = load_line_corpus(targs.valid_path);
  const Vocabulary vocab = build_vocabulary(train_corpus, min_count);

  Model model;
  if (arch == Arch::lstm) {
    LstmConfig cfg;
    cfg.vocab_size = vocab.size();
    cfg.embed_dim = embed_dim;
    if (!hidden_dims_csv.empty()) cfg.hidden_dims = parse_dims(hidden_dims_csv);
    cfg.tie_weights = !untied;
    cfg.weight_drop_p = weight_drop;
    model = build_lstm(cfg, mix_seed(common.seed, 0x11));
  } else {
    FfnnConfig cfg;
    cfg.vocab_size = vocab.size();
    cfg.embed_dim = embed_dim;
    cfg.hidden_dim = hidden_dim;
    cfg.context_len = context_len;
    model = build_ffnn(cfg, mix_seed(common.seed, 0x11));
  }
  model.vocab = vocab;

  Manifest manifest("train", common.seed);
  manifest.config("arch", arch_name_str);
  manifest.config("min_count", min_count);
  manifest.config("embed_dim", embed_dim);
  if (arch == Arch::lstm) {
    manifest.config("hidden_dims", model.lstm.hidden_dims);
    manifest.config("tie_weights", model.lstm.tie_weights);
    manifest.config("weight_drop_p", model.lstm.weight_drop_p);
  } else {
    manifest.config("hidden_dim", hidden_dim);
    manifest.config("context_len", context_len);
  }
  manifest_train_config(manifest, targs);
  manifest.config("vocab_size", vocab.size());
  manifest.input(targs.train_path);
  manifest.input(targs.valid_path);
  manifest.output(out_dir / "best.ckpt");
  manifest.output(out_dir / "history.jsonl");
  manifest.write(out_dir);

  HistoryWriter history(out_dir / "history.jsonl");
  const RunResult result = train(model, train_corpus, valid_corpus, targs.config,
                                 (out_dir / "best.ckpt").string(), std::ref(history));
  std::cout << "train: best validation perplexity " << result.best_valid_ppl << " at epoch "
            << result.selection_epoch << "\n";
  return 0;
}

int cmd_transfer(const CommonArgs& common, TrainArgs& targs, const std::string& checkpoint,
                 std::size_t min_count, bool substitute) {
  targs.resolve();
  targs.config.seed = common.seed;
  const fs::path out_dir = prepare_out_dir(common.out);

  const Corpus train_corpus = load_line_corpus(targs.train_path);
  const Corpus valid_corpus = load_line_corpus(targs.valid_path);

  Manifest manifest(substitute ? "substitute" : "finetune", common.seed);
  manifest.config("checkpoint", checkpoint);
  if (substitute) manifest.config("min_count", min_count);
  manifest_train_config(manifest, targs);
  manifest.input(checkpoint);
  manifest.input(targs.train_path);
  manifest.input(targs.valid_path);
  manifest.output(out_dir / "best.ckpt");
  manifest.output(out_dir / "history.jsonl");
  manifest.write(out_dir);

  HistoryWriter history(out_dir / "history.jsonl");
  RunResult result;
  if (substitute) {
    const Vocabulary target_vocab = build_vocabulary(train_corpus, min_count);
    result = train_substituted(checkpoint, target_vocab, train_corpus, valid_corpus,
                               targs.config, (out_dir / "best.ckpt").string(), nullptr,
                               std::ref(history));
  } else {
    result = finetune(checkpoint, train_corpus, valid_corpus, targs.config,
                      (out_dir / "best.ckpt").string(), nullptr, std::ref(history));
  }
  std::cout << (substitute ? "substitute" : "finetune") << ": best validation perplexity "
            << result.best_valid_ppl << " at epoch " << result.selection_epoch << "\n";
  return 0;
}

int cmd_eval(const CommonArgs& common, const std::string& checkpoint,
             const std::string& ngram_model_path, const std::string& corpus_path, bool cross,
             bool oov_types, std::string model_id, std::string corpus_id,
             const std::string& matrix_layout, const std::vector<std::string>& matrix_cells) {
  if (!matrix_layout.empty()) {
    MatrixLayout layout;
    if (matrix_layout == "table1")
      layout = MatrixLayout::table1;
    else if (matrix_layout == "table2")
      layout = MatrixLayout::table2;
    else
      throw UsageError("--matrix expects table1 or table2");
    std::vector<MatrixEntry> entries;
    for (const std::string& cell : matrix_cells) {
      const std::size_t p1 = cell.find(':');
      const std::size_t p2 = p1 == std::string::npos ? p1 : cell.find(':', p1 + 1);
      if (p1 == std::string::npos || p2 == std::string::npos)
        throw UsageError("--cell expects method:column:report.json, got '" + cell + "'");
      MatrixEntry e;
      e.method = cell.substr(0, p1);
      e.column = cell.substr(p1 + 1, p2 - p1 - 1);
      e.report = report_from_json(read_file(cell.substr(p2 + 1)));
      entries.push_back(std::move(e));
    }
    const ResultsMatrix matrix = make_results_matrix(std::move(entries), layout);
    if (common.json)
      std::cout << matrix_to_json(matrix);
    else
      std::cout << matrix_to_text(matrix);
    if (!common.out.empty()) {
      const fs::path out_dir = prepare_out_dir(common.out);
      Manifest manifest("eval", common.seed);
      manifest.config("matrix", matrix_layout);
      manifest.output(out_dir / "matrix.json");
      manifest.write(out_dir);
      write_file(out_dir / "matrix.json", matrix_to_json(matrix));
    }
    return 0;
  }

  if (checkpoint.empty() == ngram_model_path.empty())
    throw UsageError("eval: give exactly one of --checkpoint or --ngram-model");
  if (corpus_path.empty()) throw UsageError("eval: --corpus is required");

  const Corpus corpus = load_line_corpus(corpus_path);
  if (corpus_id.empty()) corpus_id = fs::path(corpus_path).stem().string();

  EvalOptions opts;
  opts.corpus_id = corpus_id;

  PerplexityReport report;
  if (!checkpoint.empty()) {
    const Model model = load_checkpoint(checkpoint);
    opts.model_id = model_id.empty() ? std::string(arch_name(model.arch)) + ":" +
                                           fs::path(checkpoint).stem().string()
                                     : model_id;
    report = cross ? cross_lingual_eval(model, corpus, opts) : evaluate(model, corpus, opts);
    if (oov_types) report.oov_rate = oov_type_rate(corpus, model.input_vocab());
  } else {
    const NgramModel model = ngram_from_json(read_file(ngram_model_path));
    opts.model_id =
        model_id.empty() ? "ngram:" + fs::path(ngram_model_path).stem().string() : model_id;
    report = ngram_perplexity(model, corpus, opts);
    if (oov_types) report.oov_rate = oov_type_rate(corpus, model.vocab);
  }

  if (!common.out.empty()) {
    const fs::path out_dir = prepare_out_dir(common.out);
    Manifest manifest("eval", common.seed);
    manifest.config("cross", cross);
    if (!checkpoint.empty()) manifest.input(checkpoint);
    if (!ngram_model_path.empty()) manifest.input(ngram_model_path);
    manifest.input(corpus_path);
    manifest.output(out_dir / "report.json");
    manifest.write(out_dir);
    report_out(report, common, &out_dir);
  } else {
    report_out(report, common, nullptr);
  }
  return 0;
}

int cmd_ngram(const CommonArgs& common, const std::string& train_path,
              const std::string& model_path, const std::string& corpus_path, int order,
              const std::string& smoothing_str, double k, std::size_t min_count) {
  if (!model_path.empty()) {
    if (corpus_path.empty()) throw UsageError("ngram: --corpus required with --model");
    const NgramModel model = ngram_from_json(read_file(model_path));
    EvalOptions opts;
    opts.model_id = "ngram:" + fs::path(model_path).stem().string();
    opts.corpus_id = fs::path(corpus_path).stem().string();
    const PerplexityReport report =
        ngram_perplexity(model, load_line_corpus(corpus_path), opts);
    report_out(report, common, nullptr);
    return 0;
  }

  if (train_path.empty()) throw UsageError("ngram: give --train to fit or --model to evaluate");
  const Smoothing smoothing = smoothing_from_name(smoothing_str);
  const fs::path out_dir = prepare_out_dir(common.out);

  Manifest manifest("ngram", common.seed);
  manifest.config("order", order);
  manifest.config("smoothing", smoothing_str);
  manifest.config("k", k);
  manifest.config("min_count", min_count);
  manifest.input(train_path);
  manifest.output(out_dir / "ngram.json");
  manifest.write(out_dir);

  const Corpus train_corpus = load_line_corpus(train_path);
  const Vocabulary vocab = build_vocabulary(train_corpus, min_count);
  const NgramModel model = fit_ngram(train_corpus, vocab, order, smoothing, k);
  write_file(out_dir / "ngram.json", ngram_to_json(model));
  std::cout << "ngram: order " << order << ", vocab " << vocab.size() << ", dump written\n";
  return 0;
}

int cmd_stats(const CommonArgs& common, const std::string& corpus_path) {
  const Corpus corpus = load_line_corpus(corpus_path);
  const ordered_json j = stats_json(corpus_stats(corpus));
  std::cout << j.dump(2) << "\n";
  if (!common.out.empty()) {
    const fs::path out_dir = prepare_out_dir(common.out);
    write_file(out_dir / "stats.json", j.dump(2) + "\n");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gloss-level language modeling toolkit"};
  app.require_subcommand(1);
  app.set_config("--config", "", "plain key=value config file");
  app.set_version_flag("--version", kToolVersion);

  CommonArgs common;
  app.add_option("--seed", common.seed, "run seed")->capture_default_str();
  app.add_option("--out", common.out, "output directory");
  app.add_flag("--json", common.json, "emit JSON instead of text where applicable");

  int exit_code = 0;
  auto run = [&](auto&& fn) {
    try {
      exit_code = fn();
    } catch (const Error& e) {
      std::cerr << "error: " << e.what() << "\n";
      exit_code = exit_code_for(e);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      exit_code = 1;
    }
  };

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "parse and split a gloss or plain corpus");
  std::string elan_dir, plain, hand_policy = "rh_only", exclude_csv = "PT,G,PALM-UP";
  TierNames tiers;
  pre->add_option("--elan-dir", elan_dir, "directory of ELAN TSV exports");
  pre->add_option("--plain", plain, "plain line corpus");
  pre->add_option("--tier-rh", tiers.rh, "right-hand gloss tier")->capture_default_str();
  pre->add_option("--tier-lh", tiers.lh, "left-hand gloss tier")->capture_default_str();
  pre->add_option("--tier-ft", tiers.free_translation, "free translation tier")
      ->capture_default_str();
  pre->add_option("--hand-policy", hand_policy, "rh_only | rh_plus_lh_exclusive")
      ->capture_default_str();
  pre->add_option("--exclude", exclude_csv, "excluded gloss prefixes (csv)")
      ->capture_default_str();
  pre->callback([&] {
    run([&] { return cmd_preprocess(common, elan_dir, plain, tiers, hand_policy, exclude_csv); });
  });

  // train
  auto* tr = app.add_subcommand("train", "train a model from scratch");
  TrainArgs train_args;
  std::string arch = "lstm", hidden_dims_csv;
  std::size_t min_count = 1;
  int embed_dim = 400, hidden_dim = 400, context_len = 5;
  bool untied = false;
  float weight_drop = 0.5f;
  add_train_flags(tr, &train_args);
  tr->add_option("--arch", arch, "lstm | ffnn")->capture_default_str();
  tr->add_option("--min-count", min_count, "vocabulary frequency cutoff")->capture_default_str();
  tr->add_option("--embed-dim", embed_dim, "embedding width")->capture_default_str();
  tr->add_option("--hidden-dims", hidden_dims_csv, "LSTM layer widths (csv)");
  tr->add_option("--hidden-dim", hidden_dim, "FFNN hidden width")->capture_default_str();
  tr->add_option("--context-len", context_len, "FFNN context words")->capture_default_str();
  tr->add_flag("--untied", untied, "do not tie embedding and output weights");
  tr->add_option("--weight-drop", weight_drop, "LSTM hidden-to-hidden drop probability")
      ->capture_default_str();
  tr->callback([&] {
    run([&] {
      return cmd_train(common, train_args, arch, min_count, embed_dim, hidden_dims_csv,
                       hidden_dim, context_len, untied, weight_drop);
    });
  });

  // finetune / substitute
  auto* ft = app.add_subcommand("finetune", "continue training a checkpoint on a new corpus");
  TrainArgs ft_args;
  std::string ft_checkpoint;
  add_train_flags(ft, &ft_args);
  ft->add_option("--checkpoint", ft_checkpoint, "source checkpoint")->required();
  ft->callback([&] {
    run([&] { return cmd_transfer(common, ft_args, ft_checkpoint, 1, /*substitute=*/false); });
  });

  auto* sub = app.add_subcommand(
      "substitute", "replace the output layer for a new vocabulary and train only it");
  TrainArgs sub_args;
  std::string sub_checkpoint;
  std::size_t sub_min_count = 1;
  add_train_flags(sub, &sub_args);
  sub->add_option("--checkpoint", sub_checkpoint, "source checkpoint")->required();
  sub->add_option("--min-count", sub_min_count, "target vocabulary frequency cutoff")
      ->capture_default_str();
  sub->callback([&] {
    run([&] {
      return cmd_transfer(common, sub_args, sub_checkpoint, sub_min_count, /*substitute=*/true);
    });
  });

  // eval
  auto* ev = app.add_subcommand("eval", "perplexity evaluation and results matrices");
  std::string ev_checkpoint, ev_ngram, ev_corpus, ev_model_id, ev_corpus_id, ev_matrix;
  std::vector<std::string> ev_cells;
  bool ev_cross = false, ev_oov_types = false;
  ev->add_option("--checkpoint", ev_checkpoint, "model checkpoint");
  ev->add_option("--ngram-model", ev_ngram, "ngram dump (json)");
  ev->add_option("--corpus", ev_corpus, "corpus to score");
  ev->add_flag("--cross", ev_cross, "cross-lingual evaluation through the source vocabulary");
  ev->add_flag("--oov-types", ev_oov_types, "report type-level instead of token-level OOV");
  ev->add_option("--model-id", ev_model_id, "report label");
  ev->add_option("--corpus-id", ev_corpus_id, "report label");
  ev->add_option("--matrix", ev_matrix, "emit a results matrix: table1 | table2");
  ev->add_option("--cell", ev_cells, "matrix cell method:column:report.json (repeatable)");
  ev->callback([&] {
    run([&] {
      return cmd_eval(common, ev_checkpoint, ev_ngram, ev_corpus, ev_cross, ev_oov_types,
                      ev_model_id, ev_corpus_id, ev_matrix, ev_cells);
    });
  });

  // ngram
  auto* ng = app.add_subcommand("ngram", "fit or evaluate the count-based baseline");
  std::string ng_train, ng_model, ng_corpus, ng_smoothing = "witten_bell";
  int ng_order = 3;
  double ng_k = 1.0;
  std::size_t ng_min_count = 1;
  ng->add_option("--train", ng_train, "training corpus (fits a model)");
  ng->add_option("--model", ng_model, "existing dump (evaluates)");
  ng->add_option("--corpus", ng_corpus, "corpus to score");
  ng->add_option("--order", ng_order, "n-gram order")->capture_default_str();
  ng->add_option("--smoothing", ng_smoothing, "add_k | witten_bell")->capture_default_str();
  ng->add_option("--k", ng_k, "add-k constant")->capture_default_str();
  ng->add_option("--min-count", ng_min_count, "vocabulary frequency cutoff")
      ->capture_default_str();
  ng->callback([&] {
    run([&] {
      return cmd_ngram(common, ng_train, ng_model, ng_corpus, ng_order, ng_smoothing, ng_k,
                       ng_min_count);
    });
  });

  // stats
  auto* st = app.add_subcommand("stats", "corpus statistics");
  std::string st_corpus;
  st->add_option("--corpus", st_corpus, "plain corpus file")->required();
  st->callback([&] { run([&] { return cmd_stats(common, st_corpus); }); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  }
  return exit_code;
}
