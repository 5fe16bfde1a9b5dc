#include "posegrid/similarity.hpp"

#include <string>

#include "posegrid/error.hpp"

namespace posegrid {
namespace {

void check_inputs(const FeatureGrid& query, const FeatureGrid& tmpl, const BinaryMask& mask) {
  if (!query.same_shape(tmpl)) throw Error(Errc::dimension, "query and template grids differ in shape");
  if (mask.height() != query.height() || mask.width() != query.width()) {
    throw Error(Errc::dimension, "mask " + std::to_string(mask.height()) + "x" + std::to_string(mask.width()) +
                                     " does not match grid " + std::to_string(query.height()) + "x" +
                                     std::to_string(query.width()));
  }
  if (mask.popcount() == 0) throw Error(Errc::empty_mask, "template mask has no visible cells");
}

void check_delta(double delta) {
  if (!(delta >= -1.0 && delta <= 1.0)) throw Error(Errc::parameter, "delta must lie in [-1, 1]");
}

double finish(double sum, std::size_t active, std::size_t popcount, Normalizer normalizer) {
  if (normalizer == Normalizer::mask_area) return sum / static_cast<double>(popcount);
  return active == 0 ? 0.0 : sum / static_cast<double>(active);
}

}  // namespace

double SimilarityReport::recompute(const BinaryMask& mask) const {
  double sum = 0.0;
  std::size_t active = 0;
  for (std::size_t l = 0; l < sim_map.values.size(); ++l) {
    if (mask[l] && occlusion_map[l]) {
      sum += sim_map.values[l];
      ++active;
    }
  }
  return finish(sum, active, mask_popcount, normalizer);
}

SimilarityReport sim_masked(const FeatureGrid& query, const FeatureGrid& tmpl, const BinaryMask& mask) {
  check_inputs(query, tmpl, mask);
  SimilarityReport report;
  report.sim_map = local_cosine(query, tmpl);
  report.occlusion_map = BinaryMask::full(mask.height(), mask.width());
  report.mask_popcount = mask.popcount();
  double sum = 0.0;
  for (std::size_t l = 0; l < mask.size(); ++l) {
    if (mask[l]) sum += report.sim_map.values[l];
  }
  report.score = sum / static_cast<double>(mask.popcount());
  return report;
}

BinaryMask occlusion_map(const SimMap& sim, double delta) {
  BinaryMask out(sim.height, sim.width);
  for (std::size_t l = 0; l < sim.values.size(); ++l) out.set(l, sim.values[l] > delta);
  return out;
}

SimilarityReport sim_occlusion_aware(const FeatureGrid& query, const FeatureGrid& tmpl, const BinaryMask& mask,
                                     double delta, Normalizer normalizer) {
  check_inputs(query, tmpl, mask);
  check_delta(delta);
  SimilarityReport report;
  report.sim_map = local_cosine(query, tmpl);
  report.occlusion_map = occlusion_map(report.sim_map, delta);
  report.mask_popcount = mask.popcount();
  report.normalizer = normalizer;
  report.score = report.recompute(mask);
  return report;
}

double score_masked(const FeatureGrid& query, const FeatureGrid& tmpl, const BinaryMask& mask) {
  check_inputs(query, tmpl, mask);
  double sum = 0.0;
  for (std::size_t l = 0; l < mask.size(); ++l) {
    if (mask[l]) sum += cell_cosine(query.cell(l), tmpl.cell(l));
  }
  return sum / static_cast<double>(mask.popcount());
}

double score_occlusion_aware(const FeatureGrid& query, const FeatureGrid& tmpl, const BinaryMask& mask,
                             double delta, Normalizer normalizer) {
  check_inputs(query, tmpl, mask);
  check_delta(delta);
  double sum = 0.0;
  std::size_t active = 0;
  for (std::size_t l = 0; l < mask.size(); ++l) {
    if (!mask[l]) continue;
    const double s = cell_cosine(query.cell(l), tmpl.cell(l));
    if (s > delta) {
      sum += s;
      ++active;
    }
  }
  return finish(sum, active, mask.popcount(), normalizer);
}

}  // namespace posegrid
