#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace capel {

enum class ErrorCode {
  // numerics
  ZeroNorm,
  LengthMismatch,
  NonFinite,
  // datastore
  BadMagic,
  BadVersion,
  BadFlags,
  SizeMismatch,
  NormOutOfRange,
  RaggedBank,
  EmptyPrompt,
  ParseError,
  DimMismatch,
  IoError,
  // model / objective / trainer
  InvalidArgument,
  InvalidM,
  LabelOutOfRange,
  MissingLabels,
  InsufficientSamples,
  EmptyTrainingSet,
  EmptyTestSet,
  RejectionExhausted,
  // broken internal invariant (e.g. non-finite loss during training)
  Internal,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace capel
