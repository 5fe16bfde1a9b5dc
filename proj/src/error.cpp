#include "posegrid/error.hpp"

namespace posegrid {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::bounds: return "bounds";
    case Errc::dimension: return "dimension";
    case Errc::validation: return "validation";
    case Errc::empty_mask: return "empty_mask";
    case Errc::parameter: return "parameter";
    case Errc::batch_size: return "batch_size";
    case Errc::batch_contract: return "batch_contract";
    case Errc::degenerate_orientation: return "degenerate_orientation";
    case Errc::not_found: return "not_found";
    case Errc::build: return "build";
    case Errc::insufficient_data: return "insufficient_data";
    case Errc::length_mismatch: return "length_mismatch";
    case Errc::io: return "io";
    case Errc::bad_magic: return "bad_magic";
    case Errc::bad_version: return "bad_version";
    case Errc::truncated: return "truncated";
    case Errc::non_finite: return "non_finite";
    case Errc::bad_mask: return "bad_mask";
    case Errc::count_mismatch: return "count_mismatch";
  }
  return "unknown";
}

Error::Error(Errc code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

}  // namespace posegrid
