#include "posegrid/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <string>
#include <thread>

#include "posegrid/error.hpp"

namespace posegrid {
namespace {

bool entry_order(const TemplateEntry& a, const TemplateEntry& b) {
  return std::tie(a.object_id, a.template_index) < std::tie(b.object_id, b.template_index);
}

std::vector<float> pack_query(const FeatureGrid& query) {
  const FeatureGrid unit = normalize_cells(query);
  std::vector<float> out(unit.data().size());
  std::transform(unit.data().begin(), unit.data().end(), out.begin(),
                 [](double x) { return static_cast<float>(x); });
  return out;
}

struct WorstOnTop {
  bool operator()(const Candidate& a, const Candidate& b) const noexcept { return ranks_before(a, b); }
};

using BoundedHeap = std::priority_queue<Candidate, std::vector<Candidate>, WorstOnTop>;

void push_bounded(BoundedHeap& heap, const Candidate& c, std::size_t k) {
  if (heap.size() < k) {
    heap.push(c);
  } else if (ranks_before(c, heap.top())) {
    heap.pop();
    heap.push(c);
  }
}

// Scores positions [begin, end) with the selected kernel.
class Scorer {
 public:
  Scorer(const FeatureGrid& query, const TemplateDB& db, const MatchOptions& options)
      : db_(db), options_(options), query_(pack_query(query)), fn_(kernels::score_fn(options.isa)) {
    params_.delta = static_cast<float>(options.delta);
    params_.use_occlusion = options.use_occlusion;
  }

  double score(std::size_t pos) const {
    const auto sums = fn_(query_.data(), db_.features(pos).data(), db_.mask_bytes(pos).data(), db_.cells(),
                          db_.channels(), params_);
    if (options_.normalizer == Normalizer::mask_area) {
      return static_cast<double>(sums.sum) / static_cast<double>(db_.entry(pos).mask_popcount);
    }
    return sums.active == 0 ? 0.0 : static_cast<double>(sums.sum) / static_cast<double>(sums.active);
  }

 private:
  const TemplateDB& db_;
  const MatchOptions& options_;
  std::vector<float> query_;
  kernels::ScoreFn fn_;
  kernels::ScoreParams params_;
};

void check_query(const FeatureGrid& query, const TemplateDB& db, const MatchOptions& options) {
  if (db.empty()) throw Error(Errc::not_found, "template database is empty");
  if (query.height() != db.height() || query.width() != db.width() || query.channels() != db.channels()) {
    throw Error(Errc::dimension, "query grid " + std::to_string(query.height()) + "x" +
                                     std::to_string(query.width()) + "x" + std::to_string(query.channels()) +
                                     " does not match database " + std::to_string(db.height()) + "x" +
                                     std::to_string(db.width()) + "x" + std::to_string(db.channels()));
  }
  if (options.use_occlusion && !(options.delta >= -1.0 && options.delta <= 1.0)) {
    throw Error(Errc::parameter, "delta must lie in [-1, 1]");
  }
}

std::pair<std::size_t, std::size_t> candidate_range(const TemplateDB& db, const MatchOptions& options) {
  if (!options.restrict_object) return {0, db.size()};
  const auto range = db.object_range(*options.restrict_object);
  if (range.first == range.second) {
    throw Error(Errc::not_found, "object " + std::to_string(*options.restrict_object) + " has no templates");
  }
  return range;
}

template <typename Fn>
void parallel_chunks(std::size_t begin, std::size_t end, std::size_t threads, Fn&& fn) {
  const std::size_t count = end - begin;
  const std::size_t workers = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(count, 1));
  if (workers == 1) {
    fn(std::size_t{0}, begin, end);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = begin + count * w / workers;
    const std::size_t hi = begin + count * (w + 1) / workers;
    pool.emplace_back([&fn, w, lo, hi] { fn(w, lo, hi); });
  }
}

bool contains(std::span<const std::uint32_t> ids, std::uint32_t id) {
  return std::find(ids.begin(), ids.end(), id) != ids.end();
}

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) {
    throw Error(Errc::length_mismatch,
                std::to_string(a) + " predictions but " + std::to_string(b) + " ground-truth entries");
  }
}

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

std::vector<std::uint32_t> TemplateDB::object_ids() const {
  std::vector<std::uint32_t> ids;
  for (const auto& e : entries_) {
    if (ids.empty() || ids.back() != e.object_id) ids.push_back(e.object_id);
  }
  return ids;
}

std::pair<std::size_t, std::size_t> TemplateDB::object_range(std::uint32_t object_id) const {
  const auto lo = std::partition_point(entries_.begin(), entries_.end(),
                                       [&](const TemplateEntry& e) { return e.object_id < object_id; });
  const auto hi = std::partition_point(lo, entries_.end(),
                                       [&](const TemplateEntry& e) { return e.object_id == object_id; });
  return {static_cast<std::size_t>(lo - entries_.begin()), static_cast<std::size_t>(hi - entries_.begin())};
}

TemplateRecord TemplateDB::record(std::size_t pos) const {
  const auto& e = entries_.at(pos);
  const auto f = features(pos);
  const auto m = mask_bytes(pos);
  TemplateRecord r;
  r.object_id = e.object_id;
  r.template_index = e.template_index;
  r.viewpoint = e.viewpoint;
  r.rotation = e.rotation;
  r.render_meta = e.render_meta;
  r.features = FeatureGrid(height_, width_, channels_, std::vector<double>(f.begin(), f.end()));
  r.mask = BinaryMask(height_, width_, std::vector<std::uint8_t>(m.begin(), m.end()));
  return r;
}

TemplateDB TemplateDB::from_arenas(std::size_t height, std::size_t width, std::size_t channels,
                                   std::vector<TemplateEntry> entries, std::vector<float> arena,
                                   std::vector<std::uint8_t> masks) {
  if (entries.empty()) throw Error(Errc::build, "template database needs at least one template");
  if (height == 0 || width == 0 || channels == 0) throw Error(Errc::build, "grid dimensions must be positive");
  const std::size_t cells = height * width;
  if (arena.size() != entries.size() * cells * channels || masks.size() != entries.size() * cells) {
    throw Error(Errc::build, "arena sizes do not match the template count");
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (i > 0) {
      if (!entry_order(entries[i - 1], entries[i])) {
        throw Error(Errc::build, "duplicate or unordered template (object " + std::to_string(entries[i].object_id) +
                                     ", index " + std::to_string(entries[i].template_index) + ")");
      }
    }
    if (!(entries[i].render_meta.t_temp_z_mm > 0.0)) {
      throw Error(Errc::build, "template render depth must be positive");
    }
    std::uint32_t pop = 0;
    for (std::size_t l = 0; l < cells; ++l) {
      const std::uint8_t b = masks[i * cells + l];
      if (b > 1) throw Error(Errc::bad_mask, "mask byte " + std::to_string(b) + " outside {0,1}");
      pop += b;
    }
    if (pop == 0) throw Error(Errc::build, "template " + std::to_string(i) + " has an empty mask");
    entries[i].mask_popcount = pop;
    for (std::size_t l = 0; l < cells; ++l) {
      const float* c = arena.data() + (i * cells + l) * channels;
      double n2 = 0.0;
      for (std::size_t k = 0; k < channels; ++k) {
        if (!std::isfinite(c[k])) throw Error(Errc::non_finite, "non-finite feature value");
        n2 += static_cast<double>(c[k]) * c[k];
      }
      if (n2 != 0.0 && std::abs(n2 - 1.0) > kUnitCellTolerance) {
        throw Error(Errc::build, "template features must be unit or zero cells (|cell|^2 = " +
                                     std::to_string(n2) + ")");
      }
    }
  }
  TemplateDB db;
  db.height_ = height;
  db.width_ = width;
  db.channels_ = channels;
  db.entries_ = std::move(entries);
  db.arena_ = std::move(arena);
  db.masks_ = std::move(masks);
  return db;
}

TemplateDB build_db(std::vector<TemplateRecord> records) {
  if (records.empty()) throw Error(Errc::build, "template database needs at least one template");
  const auto& first = records.front().features;
  for (const auto& r : records) {
    if (!r.features.same_shape(first) || r.mask.height() != first.height() || r.mask.width() != first.width()) {
      throw Error(Errc::build, "all templates must share one grid shape");
    }
  }
  std::sort(records.begin(), records.end(), [](const TemplateRecord& a, const TemplateRecord& b) {
    return std::tie(a.object_id, a.template_index) < std::tie(b.object_id, b.template_index);
  });

  const std::size_t cells = first.cells();
  const std::size_t channels = first.channels();
  std::vector<TemplateEntry> entries;
  std::vector<float> arena;
  std::vector<std::uint8_t> masks;
  entries.reserve(records.size());
  arena.reserve(records.size() * cells * channels);
  masks.reserve(records.size() * cells);
  for (const auto& r : records) {
    entries.push_back({r.object_id, r.template_index, r.viewpoint, r.rotation, r.render_meta, 0});
    for (double x : r.features.data()) arena.push_back(static_cast<float>(x));
    masks.insert(masks.end(), r.mask.bytes().begin(), r.mask.bytes().end());
  }
  return TemplateDB::from_arenas(first.height(), first.width(), channels, std::move(entries), std::move(arena),
                                 std::move(masks));
}

bool ranks_before(const Candidate& a, const Candidate& b) noexcept {
  if (a.score != b.score) return a.score > b.score;
  return std::tie(a.object_id, a.template_index) < std::tie(b.object_id, b.template_index);
}

std::vector<double> score_all(const FeatureGrid& query, const TemplateDB& db, const MatchOptions& options) {
  check_query(query, db, options);
  const Scorer scorer(query, db, options);
  std::vector<double> scores(db.size());
  parallel_chunks(0, db.size(), options.threads, [&](std::size_t, std::size_t lo, std::size_t hi) {
    for (std::size_t pos = lo; pos < hi; ++pos) scores[pos] = scorer.score(pos);
  });
  return scores;
}

MatchResult match(const FeatureGrid& query, const TemplateDB& db, const MatchOptions& options) {
  if (options.k == 0) throw Error(Errc::parameter, "k must be at least 1");
  check_query(query, db, options);
  const auto [begin, end] = candidate_range(db, options);
  const Scorer scorer(query, db, options);

  const std::size_t k = std::min(options.k, end - begin);
  const std::size_t workers = std::clamp<std::size_t>(options.threads, 1, end - begin);
  std::vector<BoundedHeap> heaps(workers);
  parallel_chunks(begin, end, workers, [&](std::size_t w, std::size_t lo, std::size_t hi) {
    for (std::size_t pos = lo; pos < hi; ++pos) {
      const auto& e = db.entry(pos);
      push_bounded(heaps[w], {e.object_id, e.template_index, scorer.score(pos), pos}, k);
    }
  });

  MatchResult result;
  for (auto& heap : heaps) {
    while (!heap.empty()) {
      result.ranked.push_back(heap.top());
      heap.pop();
    }
  }
  std::sort(result.ranked.begin(), result.ranked.end(), ranks_before);
  result.ranked.resize(k);

  if (options.with_report) {
    const TemplateRecord top = db.record(result.ranked.front().position);
    result.top_report = options.use_occlusion
                            ? sim_occlusion_aware(query, top.features, top.mask, options.delta, options.normalizer)
                            : sim_masked(query, top.features, top.mask);
  }
  return result;
}

double pose_error_for(std::uint32_t object_id, const Viewpoint& a, const Viewpoint& b,
                      std::span<const std::uint32_t> symmetric_object_ids) {
  return contains(symmetric_object_ids, object_id) ? symmetric_pose_error_deg(a, b) : pose_error_deg(a, b);
}

double acc15(std::span<const PosePrediction> predictions, std::span<const PosePrediction> ground_truth,
             std::span<const std::uint32_t> symmetric_object_ids) {
  check_lengths(predictions.size(), ground_truth.size());
  if (predictions.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& p = predictions[i];
    const auto& g = ground_truth[i];
    if (p.object_id != g.object_id) continue;
    if (below_threshold(pose_error_for(g.object_id, p.viewpoint, g.viewpoint, symmetric_object_ids), 15.0)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

double mean_pose_error(std::span<const PosePrediction> predictions, std::span<const PosePrediction> ground_truth,
                       std::span<const std::uint32_t> symmetric_object_ids) {
  check_lengths(predictions.size(), ground_truth.size());
  if (predictions.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& p = predictions[i];
    const auto& g = ground_truth[i];
    total += p.object_id == g.object_id ? pose_error_for(g.object_id, p.viewpoint, g.viewpoint, symmetric_object_ids)
                                        : kWrongClassPoseErrorDeg;
  }
  return total / static_cast<double>(predictions.size());
}

double spearman(std::span<const double> x, std::span<const double> y) {
  check_lengths(x.size(), y.size());
  if (x.size() < 3) throw Error(Errc::insufficient_data, "rank correlation needs at least 3 pairs");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double mean = (static_cast<double>(x.size()) + 1.0) / 2.0;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    const double dx = rx[i] - mean, dy = ry[i] - mean;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

double rank_correlation_diag(std::span<const LabeledQuery> queries, const TemplateDB& db, std::uint32_t object_id,
                             const MatchOptions& options, double max_pose_deg) {
  const auto [begin, end] = db.object_range(object_id);
  if (begin == end) throw Error(Errc::not_found, "object " + std::to_string(object_id) + " has no templates");
  std::vector<double> pose_dist, repr_dist;
  for (const auto& q : queries) {
    check_query(q.features, db, options);
    const Scorer scorer(q.features, db, options);
    for (std::size_t pos = begin; pos < end; ++pos) {
      const double d = pose_error_deg(q.viewpoint, db.entry(pos).viewpoint);
      if (d > max_pose_deg) continue;
      pose_dist.push_back(d);
      repr_dist.push_back(1.0 - scorer.score(pos));
    }
  }
  return spearman(pose_dist, repr_dist);
}

Vec3 translation_for(const TemplateEntry& entry, const BBox& query_box, const Intrinsics& query_camera) {
  const auto& meta = entry.render_meta;
  // Template crops are centred on the optical axis of the render camera.
  const Intrinsics temp_camera{meta.focal_px, meta.bb_center_px};
  const BBox temp_box{meta.bb_center_px, meta.bb_diag_px};
  return estimate_translation(meta.t_temp_z_mm, temp_box, query_box, temp_camera, query_camera);
}

}  // namespace posegrid
