// Checkpoint container: magic "GLMC", u32 version, u32 header length, a JSON
// header {arch, config, vocab, params manifest, metadata}, then concatenated
// little-endian float32 parameter blobs in manifest order.

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "glosslm/models.hpp"

namespace glosslm {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr char kMagic[4] = {'G', 'L', 'M', 'C'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

struct ParamSpec {
  std::string name;
  int rows;
  int cols;
};

std::vector<ParamSpec> expected_params(const Model& m) {
  std::vector<ParamSpec> specs;
  if (m.arch == Arch::lstm) {
    const LstmConfig& c = m.lstm;
    specs.push_back({"embedding", c.vocab_size, c.embed_dim});
    int in_dim = c.embed_dim;
    for (std::size_t l = 0; l < c.hidden_dims.size(); ++l) {
      const int h = c.hidden_dims[l];
      const std::string base = "lstm" + std::to_string(l) + ".";
      specs.push_back({base + "weight_ih", in_dim, 4 * h});
      specs.push_back({base + "weight_hh", h, 4 * h});
      specs.push_back({base + "bias_ih", 1, 4 * h});
      specs.push_back({base + "bias_hh", 1, 4 * h});
      in_dim = h;
    }
    const std::int32_t out_dim = m.output_dim();
    if (m.substituted || !c.tie_weights)
      specs.push_back({"output.weight", in_dim, out_dim});
    specs.push_back({"output.bias", 1, out_dim});
  } else {
    const FfnnConfig& c = m.ffnn;
    specs.push_back({"embedding", c.vocab_size, c.embed_dim});
    specs.push_back({"hidden.weight", c.context_len * c.embed_dim, c.hidden_dim});
    specs.push_back({"hidden.bias", 1, c.hidden_dim});
    const std::int32_t out_dim = m.output_dim();
    specs.push_back({"output.weight", c.hidden_dim, out_dim});
    specs.push_back({"output.bias", 1, out_dim});
  }
  return specs;
}

ordered_json config_json(const Model& m) {
  ordered_json cfg;
  if (m.arch == Arch::lstm) {
    cfg["vocab_size"] = m.lstm.vocab_size;
    cfg["embed_dim"] = m.lstm.embed_dim;
    cfg["hidden_dims"] = m.lstm.hidden_dims;
    cfg["tie_weights"] = m.lstm.tie_weights;
    cfg["weight_drop_p"] = m.lstm.weight_drop_p;
  } else {
    cfg["vocab_size"] = m.ffnn.vocab_size;
    cfg["context_len"] = m.ffnn.context_len;
    cfg["embed_dim"] = m.ffnn.embed_dim;
    cfg["hidden_dim"] = m.ffnn.hidden_dim;
  }
  cfg["substituted"] = m.substituted;
  if (m.substituted) cfg["output_vocab"] = m.output_vocab->words();
  return cfg;
}

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
  if (model.vocab.size() != (model.arch == Arch::lstm ? model.lstm.vocab_size
                                                      : model.ffnn.vocab_size))
    throw InternalError("save_checkpoint: vocabulary size disagrees with config");

  const std::vector<ParamSpec> specs = expected_params(model);
  if (specs.size() != model.params.size())
    throw InternalError("save_checkpoint: parameter list does not match architecture");

  ordered_json manifest = ordered_json::array();
  std::uint64_t offset = 0;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const Parameter& p = *model.params[i];
    if (p.name != specs[i].name || p.value.rows != specs[i].rows ||
        p.value.cols != specs[i].cols)
      throw InternalError("save_checkpoint: parameter '" + p.name +
                          "' does not match the declared architecture");
    ordered_json entry;
    entry["name"] = p.name;
    entry["rows"] = p.value.rows;
    entry["cols"] = p.value.cols;
    entry["trainable"] = p.trainable;
    entry["offset"] = offset;
    manifest.push_back(std::move(entry));
    offset += p.value.size() * sizeof(float);
  }

  ordered_json header;
  header["arch"] = arch_name(model.arch);
  header["config"] = config_json(model);
  header["vocab"] = model.vocab.words();
  header["params"] = std::move(manifest);
  ordered_json meta;
  meta["epoch"] = model.meta.epoch;
  meta["validation_perplexity"] = model.meta.validation_perplexity;
  meta["run_seed"] = model.meta.run_seed;
  meta["init"] = "uniform(-0.1,0.1), forget bias +1";
  header["metadata"] = std::move(meta);

  const std::string header_bytes = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(kMagic, 4);
  write_u32(out, kVersion);
  write_u32(out, static_cast<std::uint32_t>(header_bytes.size()));
  out.write(header_bytes.data(), static_cast<std::streamsize>(header_bytes.size()));
  for (const auto& p : model.params)
    out.write(reinterpret_cast<const char*>(p->value.ptr()),
              static_cast<std::streamsize>(p->value.size() * sizeof(float)));
  if (!out) throw IoError("checkpoint write failed: " + path);
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  const auto file_size = static_cast<std::uint64_t>(in.tellg());
  in.seekg(0);

  char magic[4];
  std::uint32_t version = 0, header_len = 0;
  if (file_size < 12 || !in.read(magic, 4)) throw FormatError(path + ": not a checkpoint file");
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError(path + ": bad magic, not a GLMC checkpoint");
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&header_len), 4);
  if (version != kVersion)
    throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version));
  if (12 + static_cast<std::uint64_t>(header_len) > file_size)
    throw CorruptionError(path + ": truncated header");

  std::string header_bytes(header_len, '\0');
  if (!in.read(header_bytes.data(), header_len))
    throw CorruptionError(path + ": truncated header");

  ordered_json header;
  try {
    header = ordered_json::parse(header_bytes);
  } catch (const std::exception& e) {
    throw CorruptionError(path + ": unreadable header: " + e.what());
  }

  Model m;
  try {
    m.arch = arch_from_name(header.at("arch").get<std::string>());
    const ordered_json& cfg = header.at("config");
    if (m.arch == Arch::lstm) {
      m.lstm.vocab_size = cfg.at("vocab_size").get<std::int32_t>();
      m.lstm.embed_dim = cfg.at("embed_dim").get<int>();
      m.lstm.hidden_dims = cfg.at("hidden_dims").get<std::vector<int>>();
      m.lstm.tie_weights = cfg.at("tie_weights").get<bool>();
      m.lstm.weight_drop_p = cfg.at("weight_drop_p").get<float>();
    } else {
      m.ffnn.vocab_size = cfg.at("vocab_size").get<std::int32_t>();
      m.ffnn.context_len = cfg.at("context_len").get<int>();
      m.ffnn.embed_dim = cfg.at("embed_dim").get<int>();
      m.ffnn.hidden_dim = cfg.at("hidden_dim").get<int>();
    }
    m.substituted = cfg.at("substituted").get<bool>();
    if (m.substituted)
      m.output_vocab = Vocabulary(cfg.at("output_vocab").get<std::vector<std::string>>());
    m.vocab = Vocabulary(header.at("vocab").get<std::vector<std::string>>());
    const ordered_json& meta = header.at("metadata");
    m.meta.epoch = meta.at("epoch").get<int>();
    m.meta.validation_perplexity = meta.at("validation_perplexity").get<double>();
    m.meta.run_seed = meta.at("run_seed").get<std::uint64_t>();
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw CorruptionError(path + ": malformed header: " + e.what());
  }

  if (m.vocab.size() != (m.arch == Arch::lstm ? m.lstm.vocab_size : m.ffnn.vocab_size))
    throw CorruptionError(path + ": vocabulary size disagrees with config");

  const std::vector<ParamSpec> specs = expected_params(m);
  const ordered_json& manifest = header.at("params");
  if (!manifest.is_array() || manifest.size() != specs.size())
    throw CorruptionError(path + ": parameter manifest does not match architecture");

  const std::uint64_t blob_base = 12 + header_len;
  const std::uint64_t blob_size = file_size - blob_base;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const ordered_json& entry = manifest[i];
    const auto name = entry.at("name").get<std::string>();
    const int rows = entry.at("rows").get<int>();
    const int cols = entry.at("cols").get<int>();
    if (name != specs[i].name || rows != specs[i].rows || cols != specs[i].cols)
      throw CorruptionError(path + ": parameter '" + name + "' shape " +
                            std::to_string(rows) + "x" + std::to_string(cols) +
                            " does not match the declared architecture");
    const auto offset = entry.at("offset").get<std::uint64_t>();
    const std::uint64_t bytes = static_cast<std::uint64_t>(rows) * cols * sizeof(float);
    if (offset + bytes > blob_size)
      throw CorruptionError(path + ": truncated blob for parameter '" + name + "'");

    Tensor t(rows, cols);
    in.seekg(static_cast<std::streamoff>(blob_base + offset));
    if (!in.read(reinterpret_cast<char*>(t.ptr()), static_cast<std::streamsize>(bytes)))
      throw CorruptionError(path + ": read failed for parameter '" + name + "'");
    auto p = std::make_shared<Parameter>(name, std::move(t));
    p->trainable = entry.at("trainable").get<bool>();
    m.params.push_back(std::move(p));
  }

  m.verify_invariants();
  return m;
}

}  // namespace glosslm
