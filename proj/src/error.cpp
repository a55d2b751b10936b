#include "care/error.hpp"

namespace care {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::MalformedCsv: return "MalformedCsv";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::BadRate: return "BadRate";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::HeaderMismatch: return "HeaderMismatch";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::DuplicateRecordId: return "DuplicateRecordId";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::LeadNotFound: return "LeadNotFound";
    case ErrorCode::NoPeaks: return "NoPeaks";
    case ErrorCode::EncodeFailure: return "EncodeFailure";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::UnknownNode: return "UnknownNode";
    case ErrorCode::UnknownState: return "UnknownState";
    case ErrorCode::OrderingIncomplete: return "OrderingIncomplete";
    case ErrorCode::ConstraintConflict: return "ConstraintConflict";
    case ErrorCode::ZeroProbabilityEvidence: return "ZeroProbabilityEvidence";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::RemoteUnavailable: return "RemoteUnavailable";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::MissingArtifact: return "MissingArtifact";
    case ErrorCode::SpecInvalid: return "SpecInvalid";
    case ErrorCode::UsageError: return "UsageError";
    case ErrorCode::BindFailure: return "BindFailure";
  }
  return "Unknown";
}

}  // namespace care
