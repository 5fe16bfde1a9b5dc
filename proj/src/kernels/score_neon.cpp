#include <arm_neon.h>

#include "kernels_internal.hpp"

namespace posegrid::kernels {

CellSums score_neon(const float* query, const float* tmpl, const std::uint8_t* mask, std::size_t cells,
                    std::size_t channels, ScoreParams params) {
  const std::size_t body = channels & ~std::size_t{3};
  CellSums out;
  for (std::size_t l = 0; l < cells; ++l) {
    if (!mask[l]) continue;
    const float* q = query + l * channels;
    const float* t = tmpl + l * channels;
    float32x4_t acc = vdupq_n_f32(0.0f);
    std::size_t k = 0;
    for (; k < body; k += 4) acc = vfmaq_f32(acc, vld1q_f32(q + k), vld1q_f32(t + k));
    float s = vaddvq_f32(acc);
    for (; k < channels; ++k) s += q[k] * t[k];
    if (params.use_occlusion && !(s > params.delta)) continue;
    out.sum += s;
    ++out.active;
  }
  return out;
}

}  // namespace posegrid::kernels
