#include "posegrid/kernels.hpp"

namespace posegrid::kernels {

CellSums score_scalar(const float* query, const float* tmpl, const std::uint8_t* mask, std::size_t cells,
                      std::size_t channels, ScoreParams params) {
  CellSums out;
  for (std::size_t l = 0; l < cells; ++l) {
    if (!mask[l]) continue;
    const float* q = query + l * channels;
    const float* t = tmpl + l * channels;
    float s = 0.0f;
    for (std::size_t k = 0; k < channels; ++k) s += q[k] * t[k];
    if (params.use_occlusion && !(s > params.delta)) continue;
    out.sum += s;
    ++out.active;
  }
  return out;
}

}  // namespace posegrid::kernels
