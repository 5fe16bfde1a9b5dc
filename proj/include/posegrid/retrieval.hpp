#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "posegrid/feature_grid.hpp"
#include "posegrid/kernels.hpp"
#include "posegrid/similarity.hpp"
#include "posegrid/translation.hpp"
#include "posegrid/viewsphere.hpp"

namespace posegrid {

/// How a template was rendered; enough to recover the query translation.
struct RenderMeta {
  double t_temp_z_mm = 1.0;
  double bb_diag_px = 1.0;
  double focal_px = 1.0;
  Vec2 bb_center_px{0.0, 0.0};
};

struct TemplateRecord {
  std::uint32_t object_id = 0;
  std::uint32_t template_index = 0;
  Viewpoint viewpoint;
  RotationMatrix rotation;
  FeatureGrid features;  // unit or zero cells
  BinaryMask mask;
  RenderMeta render_meta;
};

/// Per-template metadata kept next to the feature arena.
struct TemplateEntry {
  std::uint32_t object_id = 0;
  std::uint32_t template_index = 0;
  Viewpoint viewpoint;
  RotationMatrix rotation;
  RenderMeta render_meta;
  std::uint32_t mask_popcount = 0;
};

/// Immutable template collection. Entries are ordered by (object_id,
/// template_index); features live in one contiguous f32 arena in
/// (template, row, col, channel) order with masks in a parallel byte arena.
class TemplateDB {
 public:
  TemplateDB() = default;

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t channels() const noexcept { return channels_; }
  std::size_t cells() const noexcept { return height_ * width_; }

  std::span<const TemplateEntry> entries() const noexcept { return entries_; }
  const TemplateEntry& entry(std::size_t pos) const { return entries_[pos]; }
  std::span<const float> features(std::size_t pos) const {
    return {arena_.data() + pos * cells() * channels_, cells() * channels_};
  }
  std::span<const std::uint8_t> mask_bytes(std::size_t pos) const {
    return {masks_.data() + pos * cells(), cells()};
  }
  std::span<const float> feature_arena() const noexcept { return arena_; }

  /// Object ids in ascending order.
  std::vector<std::uint32_t> object_ids() const;
  /// Half-open range of positions holding `object_id`; empty if absent.
  std::pair<std::size_t, std::size_t> object_range(std::uint32_t object_id) const;

  /// Materialized record (features widened to double).
  TemplateRecord record(std::size_t pos) const;

  /// Adopts pre-built arenas. Validates ordering, uniqueness, masks and cell
  /// normalization; throws Errc::build.
  static TemplateDB from_arenas(std::size_t height, std::size_t width, std::size_t channels,
                                std::vector<TemplateEntry> entries, std::vector<float> arena,
                                std::vector<std::uint8_t> masks);

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t channels_ = 0;
  std::vector<TemplateEntry> entries_;
  std::vector<float> arena_;
  std::vector<std::uint8_t> masks_;
};

/// Tolerance on |cell|^2 - 1 accepted as "unit" when loading into a DB.
inline constexpr double kUnitCellTolerance = 1e-4;

/// Sorts records by (object_id, template_index) and packs them. Throws
/// Errc::build on an empty set, mixed grid shapes, a duplicate index, an
/// empty mask, a non-positive render depth or non-unit cells.
TemplateDB build_db(std::vector<TemplateRecord> records);

struct MatchOptions {
  std::size_t k = 1;
  double delta = kDefaultDelta;
  bool use_occlusion = true;
  std::optional<std::uint32_t> restrict_object;
  Normalizer normalizer = Normalizer::mask_area;
  std::size_t threads = 1;
  kernels::Isa isa = kernels::best_available();
  /// Attach a full SimilarityReport for the top candidate.
  bool with_report = false;
};

struct Candidate {
  std::uint32_t object_id = 0;
  std::uint32_t template_index = 0;
  double score = 0.0;
  std::size_t position = 0;  // index into the DB
};

/// Total order used for ranking: score descending, then (object_id,
/// template_index) ascending.
bool ranks_before(const Candidate& a, const Candidate& b) noexcept;

struct MatchResult {
  std::vector<Candidate> ranked;
  std::optional<SimilarityReport> top_report;
};

/// Scores every (restricted) template and returns the top k. k larger than
/// the candidate count truncates. Throws Errc::dimension on a shape mismatch,
/// Errc::parameter for k == 0, Errc::not_found for an absent restriction.
MatchResult match(const FeatureGrid& query, const TemplateDB& db, const MatchOptions& options = {});

/// Scores of all templates in DB order, no ranking.
std::vector<double> score_all(const FeatureGrid& query, const TemplateDB& db, const MatchOptions& options = {});

struct PosePrediction {
  std::uint32_t object_id = 0;
  Viewpoint viewpoint;
};

/// Fraction of predictions with the right object and pose error < 15 degrees
/// (z-symmetric pose error for listed objects). Throws Errc::length_mismatch.
double acc15(std::span<const PosePrediction> predictions, std::span<const PosePrediction> ground_truth,
             std::span<const std::uint32_t> symmetric_object_ids = {});

/// Class-incorrect predictions count as this many degrees.
inline constexpr double kWrongClassPoseErrorDeg = 180.0;

double mean_pose_error(std::span<const PosePrediction> predictions, std::span<const PosePrediction> ground_truth,
                       std::span<const std::uint32_t> symmetric_object_ids = {});

/// Pose error honouring the symmetric-object list.
double pose_error_for(std::uint32_t object_id, const Viewpoint& a, const Viewpoint& b,
                      std::span<const std::uint32_t> symmetric_object_ids);

/// Spearman rank correlation with average ranks for ties. Throws
/// Errc::insufficient_data for fewer than 3 pairs and Errc::length_mismatch.
double spearman(std::span<const double> x, std::span<const double> y);

struct LabeledQuery {
  FeatureGrid features;
  Viewpoint viewpoint;
};

/// Spearman correlation between pose distance and (1 - score) over every
/// query/template pair of one object. Pairs farther apart than
/// max_pose_deg are dropped.
double rank_correlation_diag(std::span<const LabeledQuery> queries, const TemplateDB& db, std::uint32_t object_id,
                             const MatchOptions& options = {}, double max_pose_deg = 180.0);

/// Projective translation estimate for a retrieved template.
Vec3 translation_for(const TemplateEntry& entry, const BBox& query_box, const Intrinsics& query_camera);

}  // namespace posegrid
