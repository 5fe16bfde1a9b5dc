#include "posegrid/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "posegrid/error.hpp"

namespace posegrid {
namespace {

constexpr int kMaxBatchAttempts = 10000;

}  // namespace

std::vector<SynthObject> make_objects(std::span<const std::uint32_t> ids, std::uint64_t seed, std::size_t channels) {
  std::vector<SynthObject> out;
  out.reserve(ids.size());
  for (std::uint32_t id : ids) out.push_back(make_synth_object(id, seed, channels));
  return out;
}

std::vector<std::uint32_t> id_range(std::uint32_t first, std::size_t count) {
  std::vector<std::uint32_t> ids(count);
  for (std::size_t i = 0; i < count; ++i) ids[i] = first + static_cast<std::uint32_t>(i);
  return ids;
}

RenderMeta synth_render_meta(const BinaryMask& mask) {
  std::size_t r0 = mask.height(), r1 = 0, c0 = mask.width(), c1 = 0;
  for (std::size_t r = 0; r < mask.height(); ++r)
    for (std::size_t c = 0; c < mask.width(); ++c)
      if (mask.at(r, c)) {
        r0 = std::min(r0, r);
        r1 = std::max(r1, r + 1);
        c0 = std::min(c0, c);
        c1 = std::max(c1, c + 1);
      }
  RenderMeta meta;
  meta.t_temp_z_mm = kSynthDepthMm;
  meta.focal_px = kSynthFocalPx;
  meta.bb_center_px = kSynthPrincipalPoint;
  const double dh = r1 > r0 ? static_cast<double>(r1 - r0) : 1.0;
  const double dw = c1 > c0 ? static_cast<double>(c1 - c0) : 1.0;
  meta.bb_diag_px = std::hypot(dh, dw) * kSynthPixelsPerCell;
  return meta;
}

Embedding identity_embedding(std::size_t channels) {
  Embedding e;
  e.output = LinearEmbedding::identity(channels);
  return e;
}

std::vector<TemplateRecord> render_templates(std::span<const SynthObject> objects, std::span<const Viewpoint> views,
                                             const RenderOptions& render) {
  std::vector<TemplateRecord> out;
  out.reserve(objects.size() * views.size());
  for (const auto& obj : objects) {
    for (std::size_t i = 0; i < views.size(); ++i) {
      SynthRender r = render_synth(obj, views[i], 0.0, 0, render);
      TemplateRecord rec;
      rec.object_id = obj.object_id;
      rec.template_index = static_cast<std::uint32_t>(i);
      rec.viewpoint = views[i];
      rec.rotation = viewpoint_to_rotation(views[i]);
      rec.render_meta = synth_render_meta(r.mask);
      rec.features = std::move(r.raw);
      rec.mask = std::move(r.mask);
      out.push_back(std::move(rec));
    }
  }
  return out;
}

TemplateRecord embed_record(const TemplateRecord& raw, const Embedding& embedding) {
  TemplateRecord out = raw;
  out.features = normalize_cells(embed(raw.features, embedding));
  return out;
}

TemplateDB build_synth_db(std::span<const SynthObject> objects, std::span<const Viewpoint> views,
                          const Embedding& embedding, const RenderOptions& render) {
  std::vector<TemplateRecord> records = render_templates(objects, views, render);
  for (auto& r : records) r.features = normalize_cells(embed(r.features, embedding));
  return build_db(std::move(records));
}

TemplateDB with_full_masks(const TemplateDB& db) {
  std::vector<TemplateEntry> entries(db.entries().begin(), db.entries().end());
  std::vector<float> arena(db.feature_arena().begin(), db.feature_arena().end());
  std::vector<std::uint8_t> masks(db.size() * db.cells(), 1);
  return TemplateDB::from_arenas(db.height(), db.width(), db.channels(), std::move(entries), std::move(arena),
                                 std::move(masks));
}

SynthQuery make_query(const SynthObject& object, const Viewpoint& view, const QuerySpec& spec, std::uint64_t seed,
                      const RenderOptions& render) {
  SynthRender r = render_synth(object, view, spec.sigma, seed, render);
  FeatureGrid g = std::move(r.raw);
  if (spec.clutter) g = apply_clutter(g, r.mask, mix_seed(seed, 1));
  if (spec.occlusion > 0.0) g = apply_occlusion(g, r.mask, spec.occlusion, mix_seed(seed, 2));
  return {object.object_id, view, std::move(g)};
}

std::vector<SynthQuery> sample_queries(std::span<const SynthObject> objects, std::size_t count,
                                       const QuerySpec& spec, std::uint64_t seed, const RenderOptions& render) {
  if (objects.empty()) throw Error(Errc::parameter, "no objects to sample queries from");
  std::mt19937_64 rng(seed);
  std::vector<SynthQuery> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const SynthObject& obj = objects[i % objects.size()];
    const Viewpoint view(random_direction(rng, spec.min_z));
    out.push_back(make_query(obj, view, spec, rng(), render));
  }
  return out;
}

std::vector<PosePrediction> predict(std::span<const SynthQuery> queries, const TemplateDB& db,
                                    const Embedding& embedding, const MatchOptions& options) {
  MatchOptions top1 = options;
  top1.k = 1;
  std::vector<PosePrediction> out;
  out.reserve(queries.size());
  for (const auto& q : queries) {
    const FeatureGrid f = normalize_cells(embed(q.raw, embedding));
    const MatchResult m = match(f, db, top1);
    const TemplateEntry& e = db.entry(m.ranked.front().position);
    out.push_back({e.object_id, e.viewpoint});
  }
  return out;
}

std::vector<PosePrediction> ground_truth(std::span<const SynthQuery> queries) {
  std::vector<PosePrediction> out;
  out.reserve(queries.size());
  for (const auto& q : queries) out.push_back({q.object_id, q.viewpoint});
  return out;
}

std::vector<TrainingPair> sample_batch(std::span<const SynthObject> objects, std::span<const Viewpoint> codebook,
                                       const TrainDemoConfig& config, std::mt19937_64& rng,
                                       const RenderOptions& render) {
  if (objects.empty() || codebook.empty()) throw Error(Errc::parameter, "training needs objects and a codebook");
  if (!(config.jitter_deg < config.train.angle_thresh_deg)) {
    throw Error(Errc::parameter, "query jitter must stay below the positive-pair threshold");
  }
  std::uniform_int_distribution<std::size_t> pick_obj(0, objects.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_view(0, codebook.size() - 1);
  std::vector<TrainingPair> batch;
  batch.reserve(config.train.batch_pairs);
  for (int attempt = 0; batch.size() < config.train.batch_pairs; ++attempt) {
    if (attempt >= kMaxBatchAttempts) {
      throw Error(Errc::batch_contract, "could not sample enough mutually negative pairs");
    }
    const SynthObject& obj = objects[pick_obj(rng)];
    const Viewpoint& tv = codebook[pick_view(rng)];
    const Viewpoint qv(perturb_direction(tv.direction(), config.jitter_deg, rng), tv.inplane_deg());
    const PairLabel ql{obj.object_id, qv}, tl{obj.object_id, tv};
    const std::uint64_t seed = rng();
    const bool clash = std::any_of(batch.begin(), batch.end(), [&](const TrainingPair& p) {
      return is_positive_pair(ql, p.template_label, config.train.angle_thresh_deg) ||
             is_positive_pair(p.query_label, tl, config.train.angle_thresh_deg);
    });
    if (clash) continue;
    SynthRender t = render_synth(obj, tv, 0.0, 0, render);
    SynthQuery q = make_query(obj, qv, config.query, seed, render);
    batch.push_back({std::move(q.raw), std::move(t.raw), std::move(t.mask), ql, tl});
  }
  return batch;
}

TrainDemoResult train_demo(std::span<const SynthObject> objects, std::span<const Viewpoint> codebook,
                           const TrainDemoConfig& config, const RenderOptions& render) {
  config.train.validate();
  if (objects.empty()) throw Error(Errc::parameter, "training needs at least one object");
  TrainDemoResult result{initial_embedding(objects.front().channels(), config.train), {}};
  result.losses.reserve(config.train.steps);
  std::mt19937_64 rng(mix_seed(config.train.seed, 0x7a1));
  for (std::size_t step = 0; step < config.train.steps; ++step) {
    const std::vector<TrainingPair> batch = sample_batch(objects, codebook, config, rng, render);
    StepResult s = train_step(batch, result.embedding, config.train);
    result.embedding = std::move(s.embedding);
    result.losses.push_back(s.loss);
  }
  return result;
}

}  // namespace posegrid
