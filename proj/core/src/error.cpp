#include "amelo/error.hpp"

namespace amelo {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::EmptyLabelSet: return "EmptyLabelSet";
    case ErrorCode::InvalidRulePack: return "InvalidRulePack";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::MalformedJson: return "MalformedJson";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
    case ErrorCode::Transport: return "Transport";
    case ErrorCode::AuthFailure: return "AuthFailure";
    case ErrorCode::ExhaustedRetries: return "ExhaustedRetries";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::UnknownCase: return "UnknownCase";
    case ErrorCode::EmptyIndex: return "EmptyIndex";
    case ErrorCode::ZeroQuery: return "ZeroQuery";
    case ErrorCode::TooFewRows: return "TooFewRows";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::RangeInvalid: return "RangeInvalid";
    case ErrorCode::Io: return "Io";
    case ErrorCode::FormatVersionMismatch: return "FormatVersionMismatch";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::OutOfRangeDistance: return "OutOfRangeDistance";
    case ErrorCode::EmptyQuery: return "EmptyQuery";
    case ErrorCode::EmptyRepository: return "EmptyRepository";
    case ErrorCode::NoMethods: return "NoMethods";
    case ErrorCode::NoQueries: return "NoQueries";
    case ErrorCode::NonPositive: return "NonPositive";
    case ErrorCode::EmptyQuerySet: return "EmptyQuerySet";
    case ErrorCode::MissingQueryVector: return "MissingQueryVector";
    case ErrorCode::CorruptLog: return "CorruptLog";
    case ErrorCode::PortInUse: return "PortInUse";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::Conflict: return "Conflict";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IndexRebuilding: return "IndexRebuilding";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message, std::string path)
    : std::runtime_error(std::string(to_string(code)) + ": " + message),
      code_(code),
      message_(message),
      path_(std::move(path)) {}

}  // namespace amelo
