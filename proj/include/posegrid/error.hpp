#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace posegrid {

/// Error categories raised by the library. Every failure surfaces as a
/// posegrid::Error carrying one of these codes.
enum class Errc {
  bounds,
  dimension,
  validation,
  empty_mask,
  parameter,
  batch_size,
  batch_contract,
  degenerate_orientation,
  not_found,
  build,
  insufficient_data,
  length_mismatch,
  io,
  bad_magic,
  bad_version,
  truncated,
  non_finite,
  bad_mask,
  count_mismatch,
};

std::string_view to_string(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what);

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace posegrid
