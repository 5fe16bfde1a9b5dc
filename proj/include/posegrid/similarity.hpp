#pragma once

#include <cstddef>

#include "posegrid/feature_grid.hpp"

namespace posegrid {

/// What the masked sum is divided by. `mask_area` is |M| and is the default;
/// `active_cells` divides by the number of cells surviving the occlusion
/// threshold (0 when none survive) and exists for ablations.
enum class Normalizer { mask_area, active_cells };

/// Occlusion threshold used at run time.
inline constexpr double kDefaultDelta = 0.2;

struct SimilarityReport {
  double score = 0.0;
  SimMap sim_map;
  BinaryMask occlusion_map;  // all ones when occlusion handling is off
  std::size_t mask_popcount = 0;
  Normalizer normalizer = Normalizer::mask_area;

  /// Score recomputed from the report's own maps and the template mask.
  double recompute(const BinaryMask& mask) const;
};

/// (1/|M|) sum_l M_l S(q_l, t_l). Throws Errc::empty_mask for an all-zero
/// mask and Errc::dimension on shape mismatch.
SimilarityReport sim_masked(const FeatureGrid& query, const FeatureGrid& tmpl, const BinaryMask& mask);

/// O_l = 1 iff S_l > delta (strictly).
BinaryMask occlusion_map(const SimMap& sim, double delta);

/// (1/|M|) sum_l M_l O_l S_l. Occluded cells contribute zero but remain in
/// the |M| normalizer unless `normalizer` says otherwise.
SimilarityReport sim_occlusion_aware(const FeatureGrid& query, const FeatureGrid& tmpl, const BinaryMask& mask,
                                     double delta, Normalizer normalizer = Normalizer::mask_area);

/// Fused single-pass versions that return only the score.
double score_masked(const FeatureGrid& query, const FeatureGrid& tmpl, const BinaryMask& mask);
double score_occlusion_aware(const FeatureGrid& query, const FeatureGrid& tmpl, const BinaryMask& mask,
                             double delta, Normalizer normalizer = Normalizer::mask_area);

}  // namespace posegrid
