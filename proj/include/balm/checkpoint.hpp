#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "balm/text.hpp"
#include "balm/translator.hpp"

namespace balm::translator {

// Checkpoint container: "BALM" magic, little-endian u32 format version, a
// UTF-8 key=value header block terminated by a blank line, then each
// parameter as a name line, a shape line, and raw little-endian float32
// payload. Vocabularies ride along in the header so a checkpoint is
// self-contained; round-trips are bit-exact.
inline constexpr uint32_t kCheckpointVersion = 1;
inline constexpr int kTokenizerRuleVersion = 1;

struct Checkpoint {
  std::string kind;  // "encoder" | "autoencoder" | "translator"
  std::optional<encoder::EncoderParams> encoder_params;  // kind == encoder
  std::optional<AutoencoderModel> autoencoder;
  std::optional<TranslatorModel> translator;
  text::Vocab vocab;      // encoder / autoencoder
  text::Vocab src_vocab;  // translator
  text::Vocab tgt_vocab;
};

void save_encoder_checkpoint(const encoder::EncoderParams& params, const text::Vocab& vocab,
                             const std::filesystem::path& path);
void save_checkpoint(const AutoencoderModel& model, const text::Vocab& vocab,
                     const std::filesystem::path& path);
void save_checkpoint(const TranslatorModel& model, const text::Vocab& src_vocab,
                     const text::Vocab& tgt_vocab, const std::filesystem::path& path);

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace balm::translator
