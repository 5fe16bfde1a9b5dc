#include <string>

#include "kernels_internal.hpp"
#include "posegrid/error.hpp"

namespace posegrid::kernels {

bool available(Isa isa) noexcept {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(POSEGRID_HAVE_AVX2)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::neon:
#if defined(POSEGRID_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Isa best_available() noexcept {
  if (available(Isa::avx2)) return Isa::avx2;
  if (available(Isa::neon)) return Isa::neon;
  return Isa::scalar;
}

ScoreFn score_fn(Isa isa) {
  if (!available(isa)) {
    throw Error(Errc::parameter, "kernel variant '" + std::string(name(isa)) + "' is not available on this CPU");
  }
  switch (isa) {
#if defined(POSEGRID_HAVE_AVX2)
    case Isa::avx2: return &score_avx2;
#endif
#if defined(POSEGRID_HAVE_NEON)
    case Isa::neon: return &score_neon;
#endif
    default: return &score_scalar;
  }
}

std::string_view name(Isa isa) noexcept {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    case Isa::neon: return "neon";
  }
  return "unknown";
}

Isa parse_isa(std::string_view text) {
  if (text == "auto") return best_available();
  if (text == "scalar") return Isa::scalar;
  if (text == "avx2") return Isa::avx2;
  if (text == "neon") return Isa::neon;
  throw Error(Errc::parameter, "unknown kernel variant '" + std::string(text) + "'");
}

}  // namespace posegrid::kernels
