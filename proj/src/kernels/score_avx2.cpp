// AVX2 + FMA scoring kernel. Compiled with -mavx2 -mfma; only reached after
// the runtime CPU check in dispatch.cpp.

#include <immintrin.h>

#include <cstring>

#include "kernels_internal.hpp"

namespace posegrid::kernels {
namespace {

inline __m256i tail_lanes(std::size_t count) {
  alignas(32) static constexpr std::int32_t ramp[8] = {0, 1, 2, 3, 4, 5, 6, 7};
  const __m256i idx = _mm256_load_si256(reinterpret_cast<const __m256i*>(ramp));
  return _mm256_cmpgt_epi32(_mm256_set1_epi32(static_cast<int>(count)), idx);
}

// Lane-wise partial products of one cell; the horizontal sum is deferred.
inline __m256 cell_products(const float* q, const float* t, std::size_t channels, std::size_t body,
                            __m256i tail) {
  __m256 acc = _mm256_setzero_ps();
  std::size_t k = 0;
  for (; k < body; k += 8) acc = _mm256_fmadd_ps(_mm256_loadu_ps(q + k), _mm256_loadu_ps(t + k), acc);
  if (k < channels) {
    acc = _mm256_fmadd_ps(_mm256_maskload_ps(q + k, tail), _mm256_maskload_ps(t + k, tail), acc);
  }
  return acc;
}

// Eight vectors in, one vector of their eight horizontal sums out.
inline __m256 transpose_sum(const __m256 (&v)[8]) {
  const __m256 a01 = _mm256_hadd_ps(v[0], v[1]);
  const __m256 a23 = _mm256_hadd_ps(v[2], v[3]);
  const __m256 a45 = _mm256_hadd_ps(v[4], v[5]);
  const __m256 a67 = _mm256_hadd_ps(v[6], v[7]);
  const __m256 b03 = _mm256_hadd_ps(a01, a23);
  const __m256 b47 = _mm256_hadd_ps(a45, a67);
  const __m256 lo = _mm256_permute2f128_ps(b03, b47, 0x20);
  const __m256 hi = _mm256_permute2f128_ps(b03, b47, 0x31);
  return _mm256_add_ps(lo, hi);
}

inline float horizontal_sum(__m256 v) {
  const __m128 s = _mm_add_ps(_mm256_castps256_ps128(v), _mm256_extractf128_ps(v, 1));
  const __m128 h = _mm_add_ps(s, _mm_movehl_ps(s, s));
  return _mm_cvtss_f32(_mm_add_ss(h, _mm_shuffle_ps(h, h, 1)));
}

}  // namespace

CellSums score_avx2(const float* query, const float* tmpl, const std::uint8_t* mask, std::size_t cells,
                    std::size_t channels, ScoreParams params) {
  const std::size_t body = channels & ~std::size_t{7};
  const __m256i tail = tail_lanes(channels - body);
  const __m256 delta = _mm256_set1_ps(params.delta);
  __m256 total = _mm256_setzero_ps();
  std::uint32_t active = 0;

  for (std::size_t l0 = 0; l0 < cells; l0 += 8) {
    const std::size_t n = cells - l0 < 8 ? cells - l0 : 8;
    std::uint64_t mask_bits = 0;
    std::memcpy(&mask_bits, mask + l0, n);
    if (mask_bits == 0) continue;

    __m256 products[8];
    for (std::size_t j = 0; j < 8; ++j) {
      products[j] = j < n ? cell_products(query + (l0 + j) * channels, tmpl + (l0 + j) * channels, channels,
                                          body, tail)
                          : _mm256_setzero_ps();
    }
    const __m256 sims = transpose_sum(products);

    const __m256i mask_lanes = _mm256_cvtepu8_epi32(_mm_cvtsi64_si128(static_cast<long long>(mask_bits)));
    __m256 keep = _mm256_castsi256_ps(_mm256_cmpgt_epi32(mask_lanes, _mm256_setzero_si256()));
    if (params.use_occlusion) keep = _mm256_and_ps(keep, _mm256_cmp_ps(sims, delta, _CMP_GT_OQ));

    total = _mm256_add_ps(total, _mm256_and_ps(sims, keep));
    active += static_cast<std::uint32_t>(__builtin_popcount(static_cast<unsigned>(_mm256_movemask_ps(keep))));
  }
  return {horizontal_sum(total), active};
}

}  // namespace posegrid::kernels
