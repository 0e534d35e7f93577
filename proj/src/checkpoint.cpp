#include "balm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace balm::translator {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are written as little-endian float32");

namespace {

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

std::string join_tokens(const text::Vocab& vocab) {
  std::string out;
  for (const auto& tok : vocab.tokens()) {
    if (!out.empty()) out.push_back(' ');
    out += tok;
  }
  return out;
}

text::Vocab split_tokens(const std::string& joined) {
  std::vector<std::string> tokens;
  std::istringstream in(joined);
  std::string tok;
  while (in >> tok) tokens.push_back(tok);
  return text::Vocab::from_tokens(std::move(tokens));
}

void write_params(std::ostream& out, const std::string& prefix, const NamedParams& named) {
  for (const auto& [name, tensor] : named) {
    out << prefix << name << '\n';
    const auto& shape = tensor.shape();
    for (size_t i = 0; i < shape.size(); ++i) {
      if (i) out << ' ';
      out << shape[i];
    }
    out << '\n';
    out.write(reinterpret_cast<const char*>(tensor.data()),
              static_cast<std::streamsize>(tensor.numel() * sizeof(float)));
  }
}

void open_and_write(const std::filesystem::path& path,
                    const std::map<std::string, std::string>& header,
                    const std::vector<std::pair<std::string, NamedParams>>& sections) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write("BALM", 4);
  const uint32_t version = kCheckpointVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  for (const auto& [key, value] : header) out << key << '=' << value << '\n';
  out << '\n';
  for (const auto& [prefix, named] : sections) write_params(out, prefix, named);
  if (!out) throw IoError("failed writing " + path.string());
}

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw IoError("cannot open " + path.string());
  }

  void check_magic_and_version() {
    char magic[4] = {0, 0, 0, 0};
    in_.read(magic, 4);
    if (in_.gcount() != 4 || std::memcmp(magic, "BALM", 4) != 0) {
      throw CheckpointError(CheckpointError::Kind::bad_magic,
                            path_.string() + ": not a BALM checkpoint");
    }
    uint32_t version = 0;
    in_.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (in_.gcount() != sizeof(version)) {
      throw CheckpointError(CheckpointError::Kind::truncated,
                            path_.string() + ": truncated before version field");
    }
    if (version != kCheckpointVersion) {
      throw CheckpointError(CheckpointError::Kind::bad_version,
                            path_.string() + ": format version " + std::to_string(version) +
                                ", this build reads version " +
                                std::to_string(kCheckpointVersion));
    }
  }

  std::map<std::string, std::string> read_header() {
    std::map<std::string, std::string> header;
    std::string line;
    for (;;) {
      if (!std::getline(in_, line)) {
        throw CheckpointError(CheckpointError::Kind::truncated,
                              path_.string() + ": truncated inside header");
      }
      if (line.empty()) break;
      const size_t eq = line.find('=');
      if (eq == std::string::npos) {
        throw CheckpointError(CheckpointError::Kind::malformed,
                              path_.string() + ": header line without '=': " + line);
      }
      header[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return header;
  }

  // Reads one parameter record into `expected`, validating name and shape.
  void read_param(const std::string& expected_name, Tensor& expected) {
    std::string name;
    if (!std::getline(in_, name)) {
      throw CheckpointError(CheckpointError::Kind::truncated,
                            path_.string() + ": missing parameter " + expected_name);
    }
    if (name != expected_name) {
      throw CheckpointError(CheckpointError::Kind::malformed,
                            path_.string() + ": expected parameter " + expected_name +
                                ", found " + name);
    }
    std::string shape_line;
    if (!std::getline(in_, shape_line)) {
      throw CheckpointError(CheckpointError::Kind::truncated,
                            path_.string() + ": missing shape for " + expected_name);
    }
    std::istringstream ss(shape_line);
    std::vector<int> shape;
    int d;
    while (ss >> d) shape.push_back(d);
    if (shape != expected.shape()) {
      throw CheckpointError(CheckpointError::Kind::shape_mismatch,
                            path_.string() + ": " + expected_name + " has shape " +
                                shape_str(shape) + ", expected " + shape_str(expected.shape()));
    }
    in_.read(reinterpret_cast<char*>(expected.data()),
             static_cast<std::streamsize>(expected.numel() * sizeof(float)));
    if (in_.gcount() != static_cast<std::streamsize>(expected.numel() * sizeof(float))) {
      throw CheckpointError(CheckpointError::Kind::truncated,
                            path_.string() + ": payload of " + expected_name + " is truncated");
    }
  }

  void expect_eof() {
    char extra;
    if (in_.read(&extra, 1).gcount() != 0) {
      throw CheckpointError(CheckpointError::Kind::malformed,
                            path_.string() + ": trailing bytes after final parameter");
    }
  }

 private:
  std::ifstream in_;
  std::filesystem::path path_;
};

int header_int(const std::map<std::string, std::string>& header, const std::string& key) {
  auto it = header.find(key);
  if (it == header.end()) {
    throw CheckpointError(CheckpointError::Kind::malformed, "checkpoint header missing " + key);
  }
  return std::stoi(it->second);
}

std::string header_str(const std::map<std::string, std::string>& header, const std::string& key) {
  auto it = header.find(key);
  if (it == header.end()) {
    throw CheckpointError(CheckpointError::Kind::malformed, "checkpoint header missing " + key);
  }
  return it->second;
}

encoder::EncoderConfig read_encoder_config(const std::map<std::string, std::string>& header,
                                           const std::string& prefix, int k) {
  encoder::EncoderConfig cfg;
  cfg.vocab_size = header_int(header, prefix + "vocab_size");
  cfg.embed_dim = k;
  cfg.num_layers = header_int(header, prefix + "layers");
  cfg.num_heads = header_int(header, prefix + "heads");
  cfg.ffn_hidden = header_int(header, prefix + "ffn_hidden");
  cfg.max_positions = header_int(header, prefix + "max_positions");
  return cfg;
}

encoder::EncoderParams blank_encoder(const encoder::EncoderConfig& cfg) {
  Rng rng(0);
  return encoder::EncoderParams::init(cfg, rng);
}

decoder::DecoderParams blank_decoder(int vocab_size, int k) {
  Rng rng(0);
  return decoder::DecoderParams::init(vocab_size, k, rng);
}

FfnParams blank_ffn(int k) {
  Rng rng(0);
  return FfnParams::init(k, rng);
}

std::map<std::string, std::string> common_header(const std::string& kind, int k) {
  return {{"kind", kind},
          {"k", std::to_string(k)},
          {"tokenizer_rule_version", std::to_string(kTokenizerRuleVersion)}};
}

}  // namespace

void add_encoder_header(std::map<std::string, std::string>& header,
                        const encoder::EncoderConfig& cfg) {
  header["encoder.vocab_size"] = std::to_string(cfg.vocab_size);
  header["encoder.layers"] = std::to_string(cfg.num_layers);
  header["encoder.heads"] = std::to_string(cfg.num_heads);
  header["encoder.ffn_hidden"] = std::to_string(cfg.ffn_hidden);
  header["encoder.max_positions"] = std::to_string(cfg.max_positions);
}

void save_encoder_checkpoint(const encoder::EncoderParams& params, const text::Vocab& vocab,
                             const std::filesystem::path& path) {
  auto header = common_header("encoder", params.config.embed_dim);
  add_encoder_header(header, params.config);
  header["vocab"] = join_tokens(vocab);
  open_and_write(path, header, {{"encoder.", params.named_parameters()}});
}

void save_checkpoint(const AutoencoderModel& model, const text::Vocab& vocab,
                     const std::filesystem::path& path) {
  model.validate();
  auto header = common_header("autoencoder", model.k());
  add_encoder_header(header, model.enc.config);
  header["vocab"] = join_tokens(vocab);
  open_and_write(path, header,
                 {{"encoder.", model.enc.named_parameters()},
                  {"decoder.", model.dec.named_parameters()}});
}

void save_checkpoint(const TranslatorModel& model, const text::Vocab& src_vocab,
                     const text::Vocab& tgt_vocab, const std::filesystem::path& path) {
  model.validate();
  auto header = common_header("translator", model.k());
  add_encoder_header(header, model.src_enc.config);
  header["decoder.vocab_size"] = std::to_string(model.tgt_dec.vocab_size);
  header["src_vocab"] = join_tokens(src_vocab);
  header["tgt_vocab"] = join_tokens(tgt_vocab);
  open_and_write(path, header,
                 {{"encoder.", model.src_enc.named_parameters()},
                  {"ffn.", model.ffn.named_parameters()},
                  {"decoder.", model.tgt_dec.named_parameters()}});
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  Reader reader(path);
  reader.check_magic_and_version();
  auto header = reader.read_header();

  Checkpoint ckpt;
  ckpt.kind = header_str(header, "kind");
  const int k = header_int(header, "k");
  const int rule_version = header_int(header, "tokenizer_rule_version");
  if (rule_version != kTokenizerRuleVersion) {
    throw CheckpointError(CheckpointError::Kind::bad_version,
                          path.string() + ": tokenizer rule version " +
                              std::to_string(rule_version) + ", this build uses " +
                              std::to_string(kTokenizerRuleVersion));
  }

  auto read_section = [&](const std::string& prefix, NamedParams named) {
    for (auto& [name, tensor] : named) reader.read_param(prefix + name, tensor);
  };

  if (ckpt.kind == "encoder" || ckpt.kind == "autoencoder") {
    ckpt.vocab = split_tokens(header_str(header, "vocab"));
    auto cfg = read_encoder_config(header, "encoder.", k);
    encoder::EncoderParams enc = blank_encoder(cfg);
    read_section("encoder.", enc.named_parameters());
    if (ckpt.kind == "encoder") {
      ckpt.encoder_params = std::move(enc);
    } else {
      AutoencoderModel model;
      model.enc = std::move(enc);
      decoder::DecoderParams dec = blank_decoder(cfg.vocab_size, k);
      read_section("decoder.", dec.named_parameters());
      model.dec = std::move(dec);
      model.validate();
      ckpt.autoencoder = std::move(model);
    }
  } else if (ckpt.kind == "translator") {
    ckpt.src_vocab = split_tokens(header_str(header, "src_vocab"));
    ckpt.tgt_vocab = split_tokens(header_str(header, "tgt_vocab"));
    auto cfg = read_encoder_config(header, "encoder.", k);
    TranslatorModel model;
    model.src_enc = blank_encoder(cfg);
    read_section("encoder.", model.src_enc.named_parameters());
    model.ffn = blank_ffn(k);
    read_section("ffn.", model.ffn.named_parameters());
    model.tgt_dec = blank_decoder(header_int(header, "decoder.vocab_size"), k);
    read_section("decoder.", model.tgt_dec.named_parameters());
    model.validate();
    ckpt.translator = std::move(model);
  } else {
    throw CheckpointError(CheckpointError::Kind::malformed,
                          path.string() + ": unknown model kind '" + ckpt.kind + "'");
  }
  reader.expect_eof();
  return ckpt;
}

}  // namespace balm::translator
