#pragma once

#include "posegrid/kernels.hpp"

namespace posegrid::kernels {

#if defined(POSEGRID_HAVE_AVX2)
CellSums score_avx2(const float* query, const float* tmpl, const std::uint8_t* mask, std::size_t cells,
                    std::size_t channels, ScoreParams params);
#endif

#if defined(POSEGRID_HAVE_NEON)
CellSums score_neon(const float* query, const float* tmpl, const std::uint8_t* mask, std::size_t cells,
                    std::size_t channels, ScoreParams params);
#endif

}  // namespace posegrid::kernels
