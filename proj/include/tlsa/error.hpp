#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tlsa {

enum class ErrorCode {
  IoError,
  MalformedHeader,
  DimensionMismatch,
  DuplicateId,
  NonFiniteValue,
  NotNormalized,
  ZeroNormRow,
  MalformedRecord,
  MissingEmbedding,
  MalformedLine,
  EmptyDatabase,
  InvalidArgument,
  TooFewScores,
  EmptyBank,
  LabelCollision,
  ShapeMismatch,
  NoPrivateSamples,
  MissingTruth,
  EmptyEval,
  ConfigError,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above so the
/// CLI can emit a machine-readable report.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code), detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace tlsa
