#include "cds/error.hpp"

namespace cds {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NormTooSmall: return "NormTooSmall";
    case ErrorCode::InvalidTemperature: return "InvalidTemperature";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::InfiniteLoss: return "InfiniteLoss";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::CacheMismatch: return "CacheMismatch";
    case ErrorCode::EmptyDomain: return "EmptyDomain";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::EmptyReference: return "EmptyReference";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace cds
