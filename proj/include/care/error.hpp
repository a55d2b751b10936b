#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace care {

enum class ErrorCode {
  InvalidArgument,
  MalformedCsv,
  TooShort,
  BadRate,
  UnsupportedFormat,
  HeaderMismatch,
  IoError,
  DuplicateRecordId,
  NotFound,
  LeadNotFound,
  NoPeaks,
  EncodeFailure,
  InsufficientData,
  SchemaMismatch,
  UnknownNode,
  UnknownState,
  OrderingIncomplete,
  ConstraintConflict,
  ZeroProbabilityEvidence,
  EmptyCorpus,
  RemoteUnavailable,
  Timeout,
  LengthMismatch,
  MissingArtifact,
  SpecInvalid,
  UsageError,
  BindFailure,
};

std::string_view to_string(ErrorCode code);

/// Exception carrying a stable error code. Every failure path in the library
/// raises this type so adapters (CLI, HTTP) can map codes to exit/status values.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail),
        code_(code),
        detail_(detail) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace care
