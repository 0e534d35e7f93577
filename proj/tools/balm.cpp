// Command-line surface for the whole pipeline: vocabulary building, masked
// language model pretraining, two-phase training with decoder transfer,
// evaluation, one-shot translation, and the synthetic cipher-corpus
// generator.
//
// Exit codes: 0 success, 1 runtime/training failure, 2 usage/input error.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "balm/checkpoint.hpp"
#include "balm/encoder.hpp"
#include "balm/eval.hpp"
#include "balm/synthetic.hpp"
#include "balm/text.hpp"
#include "balm/translator.hpp"

namespace {

using namespace balm;

// Effective run configuration; flags override --config file entries which
// override these defaults.
struct RunConfig {
  std::string src, tgt, vocab, checkpoint, encoder_checkpoint, autoencoder_checkpoint;
  std::string out, history;
  std::string sentence;
  int k = 64;
  int layers = 2;
  int heads = 4;
  int ffn_hidden = 128;
  int max_len = 64;
  int epochs = 30;
  int batch_size = 32;
  float lr = 1e-3f;
  float fine_tune_scale = 0.1f;
  float encoder_lr_scale = 1.0f;
  float dropout = 0.1f;
  uint64_t seed = 0;
  int min_freq = 1;
  int max_vocab = 20000;
  // Synthetic generator.
  int vocab_size = 110;
  int n_sentences = 500;
  std::string cipher = "identity";
  uint64_t cipher_seed = 1;

  void validate_dims() const {
    if (k <= 0 || layers <= 0 || heads <= 0 || ffn_hidden <= 0 || max_len < 2 || epochs < 1 ||
        batch_size < 1) {
      throw ConfigError("all model and training dimensions must be positive");
    }
    if (fine_tune_scale <= 0.0f || fine_tune_scale > 1.0f) {
      throw ConfigError("--fine-tune-scale must be in (0, 1]");
    }
  }
};

std::vector<std::vector<int>> encode_corpus(const std::vector<std::string>& lines,
                                            const text::Vocab& vocab) {
  std::vector<std::vector<int>> ids;
  ids.reserve(lines.size());
  for (const auto& line : lines) {
    ids.push_back(text::encode_ids(text::tokenize(line), vocab, /*add_bos_eos=*/true));
  }
  return ids;
}

std::vector<std::string> load_corpus_lines(const std::string& path) {
  auto lines = text::read_lines(path);
  for (size_t i = 0; i < lines.size(); ++i) {
    if (!text::utf8_valid(lines[i])) {
      throw EncodingError(path + " line " + std::to_string(i + 1) + " is not valid UTF-8");
    }
  }
  if (lines.empty()) throw EmptyInputError(path + " has no sentences");
  return lines;
}

// Every history CSV records the effective configuration that produced it.
std::vector<std::string> config_comments(const std::string& command, const RunConfig& rc,
                                         bool model_dims_from_flags) {
  std::vector<std::string> lines;
  lines.push_back("command=" + command);
  auto add = [&](const std::string& key, const std::string& value) {
    if (!value.empty()) lines.push_back(key + "=" + value);
  };
  add("src", rc.src);
  add("tgt", rc.tgt);
  add("vocab", rc.vocab);
  add("checkpoint", rc.checkpoint);
  add("encoder_checkpoint", rc.encoder_checkpoint);
  add("autoencoder_checkpoint", rc.autoencoder_checkpoint);
  add("out", rc.out);
  if (model_dims_from_flags) {
    // Otherwise the dimensions come from the loaded checkpoints.
    add("k", std::to_string(rc.k));
    add("layers", std::to_string(rc.layers));
    add("heads", std::to_string(rc.heads));
    add("ffn_hidden", std::to_string(rc.ffn_hidden));
  }
  add("max_len", std::to_string(rc.max_len));
  add("epochs", std::to_string(rc.epochs));
  add("batch_size", std::to_string(rc.batch_size));
  add("lr", std::to_string(rc.lr));
  add("fine_tune_scale", std::to_string(rc.fine_tune_scale));
  add("encoder_lr_scale", std::to_string(rc.encoder_lr_scale));
  add("dropout", std::to_string(rc.dropout));
  add("seed", std::to_string(rc.seed));
  return lines;
}

std::string default_history_path(const std::string& out) { return out + ".history.csv"; }

encoder::EncoderConfig encoder_config(const RunConfig& rc, int vocab_size) {
  encoder::EncoderConfig cfg;
  cfg.vocab_size = vocab_size;
  cfg.embed_dim = rc.k;
  cfg.num_layers = rc.layers;
  cfg.num_heads = rc.heads;
  cfg.ffn_hidden = rc.ffn_hidden;
  cfg.max_positions = rc.max_len;
  cfg.dropout_rate = rc.dropout;
  return cfg;
}

translator::TrainConfig train_config(const RunConfig& rc) {
  translator::TrainConfig tc;
  tc.epochs = rc.epochs;
  tc.batch_size = rc.batch_size;
  tc.lr = rc.lr;
  tc.fine_tune_lr_scale = rc.fine_tune_scale;
  tc.encoder_lr_scale = rc.encoder_lr_scale;
  tc.dropout_rate = rc.dropout;
  tc.max_len = rc.max_len;
  return tc;
}

int cmd_build_vocab(const RunConfig& rc) {
  auto lines = load_corpus_lines(rc.src);
  std::vector<std::vector<std::string>> tokens;
  tokens.reserve(lines.size());
  for (const auto& line : lines) tokens.push_back(text::tokenize(line));
  text::Vocab vocab = text::Vocab::build(tokens, rc.min_freq, rc.max_vocab);
  vocab.save(rc.out);
  std::printf("vocab size %d written to %s\n", vocab.size(), rc.out.c_str());
  return 0;
}

int cmd_make_synthetic(const RunConfig& rc) {
  synthetic::CipherSpec spec{synthetic::parse_cipher_kind(rc.cipher), rc.cipher_seed};
  auto corpus = synthetic::make_synthetic(rc.vocab_size, rc.n_sentences, rc.seed, spec);
  auto write = [](const std::string& path, const std::vector<std::string>& lines) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    for (const auto& line : lines) out << line << '\n';
  };
  write(rc.src, corpus.source);
  write(rc.tgt, corpus.target);
  std::printf("wrote %zu sentence pairs to %s / %s\n", corpus.source.size(), rc.src.c_str(),
              rc.tgt.c_str());
  return 0;
}

int cmd_pretrain_encoder(const RunConfig& rc) {
  rc.validate_dims();
  auto lines = load_corpus_lines(rc.src);
  text::Vocab vocab = text::Vocab::load(rc.vocab);
  auto ids = encode_corpus(lines, vocab);

  Rng rng(rc.seed);
  encoder::EncoderParams params = encoder::EncoderParams::init(encoder_config(rc, vocab.size()), rng);
  encoder::MlmConfig mc;
  mc.epochs = rc.epochs;
  mc.batch_size = rc.batch_size;
  mc.lr = rc.lr;
  mc.max_len = rc.max_len;
  mc.dropout_rate = rc.dropout;
  TrainHistory history = encoder::mlm_pretrain(params, ids, mc, rc.seed);

  translator::save_encoder_checkpoint(params, vocab, rc.out);
  const std::string hist_path = rc.history.empty() ? default_history_path(rc.out) : rc.history;
  eval::export_history(history, hist_path, config_comments("pretrain-encoder", rc, true));
  std::printf("final train loss %.6f val loss %.6f\n", history.back().train_loss,
              history.back().val_loss);
  std::printf("checkpoint %s, history %s\n", rc.out.c_str(), hist_path.c_str());
  return 0;
}

int cmd_train_autoencoder(const RunConfig& rc) {
  rc.validate_dims();
  auto ckpt = translator::load_checkpoint(rc.checkpoint);
  if (!ckpt.encoder_params.has_value()) {
    throw ConfigError(rc.checkpoint + " is a " + ckpt.kind +
                      " checkpoint; train-autoencoder needs a pretrained encoder");
  }
  auto lines = load_corpus_lines(rc.src);
  auto ids = encode_corpus(lines, ckpt.vocab);

  translator::TrainConfig tc = train_config(rc);
  auto [model, history] = translator::train_autoencoder(*ckpt.encoder_params, ids, tc, rc.seed);
  translator::save_checkpoint(model, ckpt.vocab, rc.out);
  const std::string hist_path = rc.history.empty() ? default_history_path(rc.out) : rc.history;
  eval::export_history(history, hist_path, config_comments("train-autoencoder", rc, false));
  std::printf("final train loss %.6f val loss %.6f\n", history.back().train_loss,
              history.back().val_loss);
  std::printf("checkpoint %s, history %s\n", rc.out.c_str(), hist_path.c_str());
  return 0;
}

int cmd_train_translator(const RunConfig& rc) {
  rc.validate_dims();
  auto enc_ckpt = translator::load_checkpoint(rc.encoder_checkpoint);
  if (!enc_ckpt.encoder_params.has_value()) {
    throw ConfigError(rc.encoder_checkpoint + " is a " + enc_ckpt.kind +
                      " checkpoint; --encoder-checkpoint needs a pretrained encoder");
  }
  auto ae_ckpt = translator::load_checkpoint(rc.autoencoder_checkpoint);
  if (!ae_ckpt.autoencoder.has_value()) {
    throw ConfigError(rc.autoencoder_checkpoint + " is a " + ae_ckpt.kind +
                      " checkpoint; --autoencoder-checkpoint needs an autoencoder");
  }
  const int enc_k = enc_ckpt.encoder_params->config.embed_dim;
  const int dec_k = ae_ckpt.autoencoder->dec.k;
  if (enc_k != dec_k) {
    throw ConfigError("k mismatch between checkpoints: encoder k=" + std::to_string(enc_k) +
                      ", transferred decoder k=" + std::to_string(dec_k));
  }

  text::ParallelCorpus corpus = text::load_parallel_corpus(rc.src, rc.tgt);
  auto src_ids = encode_corpus(corpus.source, enc_ckpt.vocab);
  auto tgt_ids = encode_corpus(corpus.target, ae_ckpt.vocab);

  translator::TrainConfig tc = train_config(rc);
  auto [model, history] =
      translator::train_translator(*enc_ckpt.encoder_params, ae_ckpt.autoencoder->dec, src_ids,
                                   tgt_ids, tc, rc.seed);
  translator::save_checkpoint(model, enc_ckpt.vocab, ae_ckpt.vocab, rc.out);
  const std::string hist_path = rc.history.empty() ? default_history_path(rc.out) : rc.history;
  eval::export_history(history, hist_path, config_comments("train-translator", rc, false));

  // Corpus BLEU on the rows this run held out for validation.
  auto [train_idx, val_idx] = translator::validation_split(src_ids.size(), tc.val_fraction, rc.seed);
  std::vector<eval::TokenSeq> cands, refs;
  for (size_t i : val_idx) {
    std::string out = translator::translate(model, corpus.source[i], enc_ckpt.vocab,
                                            ae_ckpt.vocab, rc.max_len);
    cands.push_back(text::tokenize(out));
    refs.push_back(text::tokenize(corpus.target[i]));
  }
  std::printf("final train loss %.6f val loss %.6f\n", history.back().train_loss,
              history.back().val_loss);
  if (!cands.empty()) {
    std::printf("validation BLEU %.4f over %zu held-out pairs\n",
                eval::bleu(cands, refs).score, cands.size());
  }
  std::printf("checkpoint %s, history %s\n", rc.out.c_str(), hist_path.c_str());
  return 0;
}

int cmd_evaluate(const RunConfig& rc) {
  auto ckpt = translator::load_checkpoint(rc.checkpoint);
  auto src_lines = load_corpus_lines(rc.src);

  std::vector<std::string> outputs, references;
  double loss_sum = 0.0;
  long loss_count = 0;
  long vocab_size = 0;

  if (ckpt.kind == "autoencoder") {
    const auto& model = *ckpt.autoencoder;
    vocab_size = ckpt.vocab.size();
    auto ids = encode_corpus(src_lines, ckpt.vocab);
    references = src_lines;
    for (const auto& line : src_lines) {
      outputs.push_back(translator::reconstruct(model, line, ckpt.vocab, rc.max_len));
    }
    for (const auto& batch : text::make_batches(ids, rc.batch_size, rc.max_len, 0)) {
      Tensor loss = translator::autoencode_loss(model, batch, 0.0f, nullptr);
      long count = 0;
      for (int len : batch.lengths) count += len - 1;
      loss_sum += static_cast<double>(loss.item()) * static_cast<double>(count);
      loss_count += count;
    }
  } else if (ckpt.kind == "translator") {
    const auto& model = *ckpt.translator;
    vocab_size = ckpt.tgt_vocab.size();
    if (rc.tgt.empty()) {
      throw ConfigError("evaluating a translator needs --tgt with reference translations");
    }
    text::ParallelCorpus corpus = text::load_parallel_corpus(rc.src, rc.tgt);
    src_lines = corpus.source;
    references = corpus.target;
    for (const auto& line : corpus.source) {
      outputs.push_back(
          translator::translate(model, line, ckpt.src_vocab, ckpt.tgt_vocab, rc.max_len));
    }
    auto src_ids = encode_corpus(corpus.source, ckpt.src_vocab);
    auto tgt_ids = encode_corpus(corpus.target, ckpt.tgt_vocab);
    for (const auto& [sb, tb] :
         text::make_parallel_batches(src_ids, tgt_ids, rc.batch_size, rc.max_len, 0)) {
      Tensor loss = translator::translator_loss(model, sb, tb, 0.0f, nullptr);
      long count = 0;
      for (int len : tb.lengths) count += len - 1;
      loss_sum += static_cast<double>(loss.item()) * static_cast<double>(count);
      loss_count += count;
    }
  } else {
    throw ConfigError(rc.checkpoint + " is an encoder checkpoint; evaluate needs an autoencoder "
                                      "or translator");
  }

  std::vector<eval::TokenSeq> cands, refs;
  for (size_t i = 0; i < outputs.size(); ++i) {
    cands.push_back(text::tokenize(outputs[i]));
    refs.push_back(text::tokenize(references[i]));
  }
  const double bleu_score = eval::bleu(cands, refs).score;
  const double mean_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
  std::printf("corpus BLEU %.4f\n", bleu_score);
  std::printf("mean cross-entropy %.6f\n", mean_loss);
  std::printf("perplexity-equivalent probability %.6f\n", eval::perplexity_equivalent(mean_loss));
  std::printf("random-guess bound ln(V=%ld) = %.4f\n", vocab_size,
              eval::random_guess_bound(vocab_size));
  if (!rc.out.empty()) {
    eval::reconstruction_report(src_lines, outputs, references, rc.out);
    std::printf("report written to %s\n", rc.out.c_str());
  }
  return 0;
}

int cmd_translate(const RunConfig& rc) {
  if (text::tokenize(rc.sentence).empty()) {
    throw ContractError("translate: the sentence is empty after tokenization");
  }
  auto ckpt = translator::load_checkpoint(rc.checkpoint);
  std::string out;
  if (ckpt.kind == "translator") {
    out = translator::translate(*ckpt.translator, rc.sentence, ckpt.src_vocab, ckpt.tgt_vocab,
                                rc.max_len);
  } else if (ckpt.kind == "autoencoder") {
    out = translator::reconstruct(*ckpt.autoencoder, rc.sentence, ckpt.vocab, rc.max_len);
  } else {
    throw ConfigError(rc.checkpoint + " is an encoder checkpoint; translate needs an autoencoder "
                                      "or translator");
  }
  std::printf("%s\n", out.c_str());
  return 0;
}

void add_model_flags(CLI::App* cmd, RunConfig& rc) {
  cmd->add_option("--k", rc.k, "embedding dimension");
  cmd->add_option("--layers", rc.layers, "encoder layers");
  cmd->add_option("--heads", rc.heads, "attention heads");
  cmd->add_option("--ffn-hidden", rc.ffn_hidden, "encoder feedforward width");
  cmd->add_option("--max-len", rc.max_len, "maximum sequence length");
}

void add_train_flags(CLI::App* cmd, RunConfig& rc) {
  cmd->add_option("--epochs", rc.epochs, "training epochs");
  cmd->add_option("--batch-size", rc.batch_size, "batch size");
  cmd->add_option("--lr", rc.lr, "Adam learning rate");
  cmd->add_option("--dropout", rc.dropout, "dropout rate during training");
  cmd->add_option("--seed", rc.seed, "RNG seed (runs are deterministic per seed)")->required();
  cmd->add_option("--history", rc.history, "history CSV path (default: <out>.history.csv)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BALM: autoencoder-transfer machine translation at desk scale"};
  app.require_subcommand(1);
  app.set_config("--config", "",
                 "key=value config file; keys live in a [subcommand] section (or use "
                 "subcommand.key=value) and explicit flags override them");

  RunConfig rc;

  CLI::App* build_vocab = app.add_subcommand("build-vocab", "build a vocabulary file from a corpus");
  build_vocab->add_option("--src", rc.src, "corpus file, one sentence per line")->required();
  build_vocab->add_option("--out", rc.out, "vocabulary file to write")->required();
  build_vocab->add_option("--min-freq", rc.min_freq, "minimum token frequency");
  build_vocab->add_option("--max-vocab", rc.max_vocab, "maximum vocabulary size");

  CLI::App* make_syn = app.add_subcommand("make-synthetic", "generate a cipher-language corpus pair");
  make_syn->add_option("--src", rc.src, "source corpus file to write")->required();
  make_syn->add_option("--tgt", rc.tgt, "target corpus file to write")->required();
  make_syn->add_option("--vocab-size", rc.vocab_size, "approximate lexicon size (>= 10)");
  make_syn->add_option("--n", rc.n_sentences, "number of sentence pairs");
  make_syn->add_option("--seed", rc.seed, "generator seed")->required();
  make_syn->add_option("--cipher", rc.cipher, "identity | substitution | substitution-swap");
  make_syn->add_option("--cipher-seed", rc.cipher_seed, "seed of the substitution permutation");

  CLI::App* pretrain = app.add_subcommand("pretrain-encoder",
                                          "masked-language-model pretraining of an encoder");
  pretrain->add_option("--src", rc.src, "monolingual corpus")->required();
  pretrain->add_option("--vocab", rc.vocab, "vocabulary file")->required();
  pretrain->add_option("--out", rc.out, "encoder checkpoint to write")->required();
  add_model_flags(pretrain, rc);
  add_train_flags(pretrain, rc);

  CLI::App* train_ae = app.add_subcommand("train-autoencoder",
                                          "train encode->pool->decode reconstruction");
  train_ae->add_option("--src", rc.src, "monolingual corpus")->required();
  train_ae->add_option("--checkpoint", rc.checkpoint, "pretrained encoder checkpoint")->required();
  train_ae->add_option("--out", rc.out, "autoencoder checkpoint to write")->required();
  train_ae->add_option("--max-len", rc.max_len, "maximum sequence length");
  train_ae->add_option("--encoder-lr-scale", rc.encoder_lr_scale,
                       "encoder fine-tune rate as a fraction of --lr");
  add_train_flags(train_ae, rc);

  CLI::App* train_tr = app.add_subcommand("train-translator",
                                          "train the thought translator with decoder transfer");
  train_tr->add_option("--src", rc.src, "source-language corpus")->required();
  train_tr->add_option("--tgt", rc.tgt, "target-language corpus, line-aligned")->required();
  train_tr->add_option("--encoder-checkpoint", rc.encoder_checkpoint,
                       "pretrained source-language encoder")->required();
  train_tr->add_option("--autoencoder-checkpoint", rc.autoencoder_checkpoint,
                       "target-language autoencoder providing the transferred decoder")->required();
  train_tr->add_option("--out", rc.out, "translator checkpoint to write")->required();
  train_tr->add_option("--max-len", rc.max_len, "maximum sequence length");
  train_tr->add_option("--fine-tune-scale", rc.fine_tune_scale,
                       "learning-rate scale for the transferred modules");
  add_train_flags(train_tr, rc);

  CLI::App* evaluate = app.add_subcommand("evaluate", "corpus BLEU, cross-entropy, and reports");
  evaluate->add_option("--checkpoint", rc.checkpoint, "autoencoder or translator checkpoint")
      ->required();
  evaluate->add_option("--src", rc.src, "evaluation corpus (source side)")->required();
  evaluate->add_option("--tgt", rc.tgt, "reference translations (translator checkpoints)");
  evaluate->add_option("--out", rc.out, "reconstruction report to write");
  evaluate->add_option("--max-len", rc.max_len, "maximum sequence length");
  evaluate->add_option("--batch-size", rc.batch_size, "evaluation batch size");

  CLI::App* translate = app.add_subcommand("translate", "translate one sentence to stdout");
  translate->add_option("--checkpoint", rc.checkpoint, "translator or autoencoder checkpoint")
      ->required();
  translate->add_option("--sentence", rc.sentence, "sentence to translate")->required();
  translate->add_option("--max-len", rc.max_len, "maximum output length");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (build_vocab->parsed()) return cmd_build_vocab(rc);
    if (make_syn->parsed()) return cmd_make_synthetic(rc);
    if (pretrain->parsed()) return cmd_pretrain_encoder(rc);
    if (train_ae->parsed()) return cmd_train_autoencoder(rc);
    if (train_tr->parsed()) return cmd_train_translator(rc);
    if (evaluate->parsed()) return cmd_evaluate(rc);
    if (translate->parsed()) return cmd_translate(rc);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const CheckpointError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const VocabError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const AlignmentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const EncodingError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const EmptyInputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ContractError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
