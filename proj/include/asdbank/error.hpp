#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace asdbank {

enum class ErrorCode {
  io,
  bad_magic,
  unsupported_version,
  unsupported_dtype,
  size_mismatch,
  non_finite,
  parse,
  duplicate_id,
  invariant,
  empty_input,
  ragged,
  dim_mismatch,
  k_too_large,
  degenerate,
  single_class,
  unknown_label,
  out_of_range,
  missing_layer,
};

std::string_view to_string(ErrorCode code);

// Every failure in the toolkit surfaces as this type; callers that care
// about the cause switch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace asdbank
