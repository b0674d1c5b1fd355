#include "asdbank/error.hpp"

namespace asdbank {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::io: return "io";
    case ErrorCode::bad_magic: return "bad_magic";
    case ErrorCode::unsupported_version: return "unsupported_version";
    case ErrorCode::unsupported_dtype: return "unsupported_dtype";
    case ErrorCode::size_mismatch: return "size_mismatch";
    case ErrorCode::non_finite: return "non_finite";
    case ErrorCode::parse: return "parse";
    case ErrorCode::duplicate_id: return "duplicate_id";
    case ErrorCode::invariant: return "invariant";
    case ErrorCode::empty_input: return "empty_input";
    case ErrorCode::ragged: return "ragged";
    case ErrorCode::dim_mismatch: return "dim_mismatch";
    case ErrorCode::k_too_large: return "k_too_large";
    case ErrorCode::degenerate: return "degenerate";
    case ErrorCode::single_class: return "single_class";
    case ErrorCode::unknown_label: return "unknown_label";
    case ErrorCode::out_of_range: return "out_of_range";
    case ErrorCode::missing_layer: return "missing_layer";
  }
  return "unknown";
}

}  // namespace asdbank
