#pragma once

#include <stdexcept>
#include <string>

namespace balm {

// Base type for everything this library throws on contract violations.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor/parameter shapes disagree.
struct DimensionError : Error {
  using Error::Error;
};

// A stated precondition was violated (non-scalar loss, malformed targets, ...).
struct ContractError : Error {
  using Error::Error;
};

// Token id outside the vocabulary, or a malformed vocab file.
struct VocabError : Error {
  using Error::Error;
};

// Sequence longer than the model's position table.
struct SequenceLengthError : Error {
  using Error::Error;
};

// Parallel corpus files have different line counts.
struct AlignmentError : Error {
  using Error::Error;
};

// Input bytes are not valid UTF-8.
struct EncodingError : Error {
  using Error::Error;
};

// Empty corpus, all-PAD row, all targets ignored, ...
struct EmptyInputError : Error {
  using Error::Error;
};

// Incompatible module configuration (k mismatch between checkpoints, ...).
struct ConfigError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

// Checkpoint files fail loudly with the specific defect.
struct CheckpointError : Error {
  enum class Kind { bad_magic, bad_version, truncated, shape_mismatch, malformed };
  Kind kind;
  CheckpointError(Kind k, const std::string& msg) : Error(msg), kind(k) {}
};

}  // namespace balm
