#pragma once

// End-to-end plumbing over synthetic objects: template DBs, query sets,
// training batches and evaluation. Shared by the CLI and the test suites.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "posegrid/retrieval.hpp"
#include "posegrid/synthlab.hpp"
#include "posegrid/trainer.hpp"

namespace posegrid {

/// Pixels per grid cell and camera used for the synthetic render metadata.
inline constexpr double kSynthPixelsPerCell = 8.0;
inline constexpr double kSynthFocalPx = 572.0;
inline constexpr double kSynthDepthMm = 600.0;
inline constexpr Vec2 kSynthPrincipalPoint{320.0, 240.0};

std::vector<SynthObject> make_objects(std::span<const std::uint32_t> ids, std::uint64_t seed,
                                      std::size_t channels = kRawChannels);
/// first, first + 1, ..., first + count - 1
std::vector<std::uint32_t> id_range(std::uint32_t first, std::size_t count);

/// Render metadata for a synthetic template: box diagonal from the mask's
/// bounding rectangle, box centred on the principal point.
RenderMeta synth_render_meta(const BinaryMask& mask);

Embedding identity_embedding(std::size_t channels);

/// Clean renders of every object at every view; raw (unembedded) features.
/// template_index is the view's position in `views`.
std::vector<TemplateRecord> render_templates(std::span<const SynthObject> objects, std::span<const Viewpoint> views,
                                             const RenderOptions& render = {});

/// Embeds then normalizes a record's features.
TemplateRecord embed_record(const TemplateRecord& raw, const Embedding& embedding);

TemplateDB build_synth_db(std::span<const SynthObject> objects, std::span<const Viewpoint> views,
                          const Embedding& embedding, const RenderOptions& render = {});

/// Same features with every mask set to all ones.
TemplateDB with_full_masks(const TemplateDB& db);

struct QuerySpec {
  double sigma = 1.0;
  bool clutter = true;
  double occlusion = 0.0;
  double min_z = 0.0;
};

struct SynthQuery {
  std::uint32_t object_id = 0;
  Viewpoint viewpoint;
  FeatureGrid raw;
};

SynthQuery make_query(const SynthObject& object, const Viewpoint& view, const QuerySpec& spec, std::uint64_t seed,
                      const RenderOptions& render = {});

/// `count` queries cycling over the objects at seeded random upper-hemisphere
/// directions (in-plane 0).
std::vector<SynthQuery> sample_queries(std::span<const SynthObject> objects, std::size_t count,
                                       const QuerySpec& spec, std::uint64_t seed, const RenderOptions& render = {});

/// Top-1 prediction per query.
std::vector<PosePrediction> predict(std::span<const SynthQuery> queries, const TemplateDB& db,
                                    const Embedding& embedding, const MatchOptions& options = {});
std::vector<PosePrediction> ground_truth(std::span<const SynthQuery> queries);

struct TrainDemoConfig {
  TrainConfig train;
  QuerySpec query;
  /// Query directions are the template direction moved by less than this.
  double jitter_deg = 4.0;
};

/// Mutually negative batch: each pair is a clean template at a codebook
/// view plus a noisy query within jitter_deg of it.
std::vector<TrainingPair> sample_batch(std::span<const SynthObject> objects, std::span<const Viewpoint> codebook,
                                       const TrainDemoConfig& config, std::mt19937_64& rng,
                                       const RenderOptions& render = {});

struct TrainDemoResult {
  Embedding embedding;
  std::vector<double> losses;  // pre-update loss of each step
};

/// config.train.steps gradient steps, each on a freshly sampled batch.
TrainDemoResult train_demo(std::span<const SynthObject> objects, std::span<const Viewpoint> codebook,
                           const TrainDemoConfig& config, const RenderOptions& render = {});

}  // namespace posegrid
