#pragma once

// Fused template scoring kernels over pre-normalized f32 feature arenas.
//
// One call scores a single template: for every masked cell it takes the
// C-length dot product of the (unit) query and template descriptors, applies
// the optional occlusion threshold, and accumulates. The scalar kernel is the
// reference; vector variants must agree with it to float rounding.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace posegrid::kernels {

enum class Isa { scalar, avx2, neon };

struct ScoreParams {
  float delta = 0.2f;
  bool use_occlusion = true;
};

struct CellSums {
  float sum = 0.0f;          // sum of surviving cell similarities
  std::uint32_t active = 0;  // number of surviving cells
};

/// `query` and `tmpl` hold cells * channels floats, `mask` holds cells bytes
/// (0 or 1).
using ScoreFn = CellSums (*)(const float* query, const float* tmpl, const std::uint8_t* mask,
                             std::size_t cells, std::size_t channels, ScoreParams params);

CellSums score_scalar(const float* query, const float* tmpl, const std::uint8_t* mask, std::size_t cells,
                      std::size_t channels, ScoreParams params);

/// Whether the variant is compiled in and supported by the running CPU.
bool available(Isa isa) noexcept;
/// Widest available variant.
Isa best_available() noexcept;
/// Throws Errc::parameter if the variant is unavailable.
ScoreFn score_fn(Isa isa);
std::string_view name(Isa isa) noexcept;
/// Parses "scalar", "avx2", "neon" or "auto"; throws Errc::parameter.
Isa parse_isa(std::string_view text);

}  // namespace posegrid::kernels
