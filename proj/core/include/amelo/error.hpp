#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace amelo {

enum class ErrorCode {
  EmptyLabelSet,
  InvalidRulePack,
  DimensionMismatch,
  EmptyInput,
  MalformedJson,
  SchemaViolation,
  Transport,
  AuthFailure,
  ExhaustedRetries,
  EmptyCorpus,
  ZeroVector,
  EmptySet,
  NonFiniteValue,
  UnknownCase,
  EmptyIndex,
  ZeroQuery,
  TooFewRows,
  KTooLarge,
  RangeInvalid,
  Io,
  FormatVersionMismatch,
  ChecksumMismatch,
  OutOfRangeDistance,
  EmptyQuery,
  EmptyRepository,
  NoMethods,
  NoQueries,
  NonPositive,
  EmptyQuerySet,
  MissingQueryVector,
  CorruptLog,
  PortInUse,
  NotFound,
  Conflict,
  InvalidArgument,
  IndexRebuilding,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above; `path`
/// is a field path or byte offset when one applies.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string path = {});

  ErrorCode code() const noexcept { return code_; }
  const std::string& path() const noexcept { return path_; }
  /// The message without the code prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
  std::string path_;
};

}  // namespace amelo
