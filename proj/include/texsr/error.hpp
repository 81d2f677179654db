#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace texsr {

/// Failure categories. Callers (the CLI in particular) map these onto exit
/// codes, so every throw site picks the most specific one.
enum class Errc {
  malformed_header,
  unsupported_bit_depth,
  truncated_payload,
  io_failure,
  invalid_argument,
  shape_mismatch,
  version_mismatch,
  missing_reference,
  empty_input,
  mode_mismatch,
  numeric_failure,
};

std::string_view to_string(Errc code) noexcept;

class Error : public std::runtime_error {
public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

private:
  Errc code_;
};

} // namespace texsr
