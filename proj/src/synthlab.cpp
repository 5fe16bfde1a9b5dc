#include "posegrid/synthlab.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "posegrid/error.hpp"

namespace posegrid {
namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr double kImageExtent = 1.0;
constexpr std::uint64_t kDistractorSeed = 0xd157ac7000000001ULL;
constexpr int kOcclusionCandidates = 64;

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Rodrigues rotation taking +z onto d.
RotationMatrix pole_to(const Vec3& d) {
  const Vec3 z{0.0, 0.0, 1.0};
  const Vec3 axis = cross(z, d);
  const double s = norm(axis);
  const double c = d[2];
  RotationMatrix r;
  if (s < 1e-12) {
    if (c < 0.0) r.m = {1, 0, 0, 0, -1, 0, 0, 0, -1};
    return r;
  }
  const Vec3 k = scale(axis, 1.0 / s);
  const double v = 1.0 - c;
  r.m = {c + k[0] * k[0] * v,        k[0] * k[1] * v - k[2] * s, k[0] * k[2] * v + k[1] * s,
         k[1] * k[0] * v + k[2] * s, c + k[1] * k[1] * v,        k[1] * k[2] * v - k[0] * s,
         k[2] * k[0] * v - k[1] * s, k[2] * k[1] * v + k[0] * s, c + k[2] * k[2] * v};
  return r;
}

// Image-plane coordinate of a cell centre in [-extent, extent].
std::pair<double, double> cell_uv(std::size_t row, std::size_t col, std::size_t height, std::size_t width) {
  const double u = (2.0 * (static_cast<double>(col) + 0.5) / static_cast<double>(width) - 1.0) * kImageExtent;
  const double v = (1.0 - 2.0 * (static_cast<double>(row) + 0.5) / static_cast<double>(height)) * kImageExtent;
  return {u, v};
}

// Nearest intersection of the ray origin + t * dir with the ellipsoid.
bool intersect_ellipsoid(const Vec3& origin, const Vec3& dir, const Vec3& axes, Vec3& hit) {
  const Vec3 p{origin[0] / axes[0], origin[1] / axes[1], origin[2] / axes[2]};
  const Vec3 d{dir[0] / axes[0], dir[1] / axes[1], dir[2] / axes[2]};
  const double a = dot(d, d);
  const double b = dot(p, d);
  const double c = dot(p, p) - 1.0;
  const double disc = b * b - a * c;
  if (disc < 0.0) return false;
  const double t = (-b - std::sqrt(disc)) / a;
  hit = add(origin, scale(dir, t));
  return true;
}

// Distractor descriptors: a separate field sampled on a randomly placed slab
// of image-plane coordinates.
class Distractor {
 public:
  Distractor(std::size_t channels, std::uint64_t seed)
      : field_(channels, kSynthComponents, kSynthFrequency, mix_seed(kDistractorSeed, channels), kSynthFeatureMean) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> offset(-20.0, 20.0);
    origin_ = {offset(rng), offset(rng), offset(rng)};
  }
  void at(std::size_t row, std::size_t col, std::size_t height, std::size_t width, std::span<double> out) const {
    const auto [u, v] = cell_uv(row, col, height, width);
    field_.evaluate({origin_[0] + u, origin_[1] + v, origin_[2]}, out);
  }

 private:
  FourierField field_;
  Vec3 origin_{};
};

struct Rect {
  std::size_t r0, c0, r1, c1;  // half-open
};

std::size_t covered(const BinaryMask& mask, const Rect& rect) {
  std::size_t n = 0;
  for (std::size_t r = rect.r0; r < rect.r1; ++r)
    for (std::size_t c = rect.c0; c < rect.c1; ++c) n += mask.at(r, c) ? 1 : 0;
  return n;
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) { return splitmix(splitmix(a) ^ (b + 0x632be59bd9b4e019ULL)); }

FourierField::FourierField(std::size_t channels, std::size_t components, double frequency, std::uint64_t seed,
                           double mean)
    : channels_(channels), mean_(mean) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  frequencies_.resize(components);
  phases_.resize(components);
  amplitudes_.resize(channels * components);
  for (std::size_t k = 0; k < components; ++k) {
    frequencies_[k] = {normal(rng) * frequency, normal(rng) * frequency, normal(rng) * frequency};
    phases_[k] = phase(rng);
  }
  // Unit expected energy per channel.
  const double amp = std::sqrt(2.0 / static_cast<double>(components));
  for (double& a : amplitudes_) a = normal(rng) * amp;
}

void FourierField::evaluate(const Vec3& p, std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  const std::size_t components = phases_.size();
  for (std::size_t k = 0; k < components; ++k) {
    const double w = std::cos(dot(frequencies_[k], p) + phases_[k]);
    for (std::size_t c = 0; c < channels_; ++c) out[c] += amplitudes_[c * components + k] * w;
  }
  for (double& x : out) x += mean_;
}

SynthObject make_synth_object(std::uint32_t object_id, std::uint64_t seed, std::size_t channels) {
  if (channels == 0) throw Error(Errc::parameter, "objects need at least one channel");
  SynthObject obj;
  obj.object_id = object_id;
  obj.seed = mix_seed(seed, object_id);
  std::mt19937_64 rng(obj.seed);
  std::uniform_real_distribution<double> axis(0.45, 0.9);
  obj.semi_axes = {axis(rng), axis(rng), axis(rng)};
  obj.field = FourierField(channels, kSynthComponents, kSynthFrequency, rng(), kSynthFeatureMean);
  return obj;
}

RotationMatrix synth_camera_frame(const Viewpoint& view) {
  const RotationMatrix to_view = pole_to(view.direction());
  const Vec3 x = to_view * Vec3{1.0, 0.0, 0.0};
  const Vec3 y = to_view * Vec3{0.0, 1.0, 0.0};
  const double c = std::cos(view.inplane_deg() * kDeg), s = std::sin(view.inplane_deg() * kDeg);
  RotationMatrix frame;
  for (std::size_t k = 0; k < 3; ++k) {
    frame(0, k) = c * x[k] + s * y[k];
    frame(1, k) = -s * x[k] + c * y[k];
    frame(2, k) = view.direction()[k];
  }
  return frame;
}

SynthRender render_synth(const SynthObject& object, const Viewpoint& view, double noise_sigma, std::uint64_t seed,
                         const RenderOptions& options) {
  if (!(noise_sigma >= 0.0)) throw Error(Errc::parameter, "noise sigma must be non-negative");
  const std::size_t channels = object.channels();
  if (!options.noise_profile.empty() && options.noise_profile.size() != channels) {
    throw Error(Errc::dimension, "noise profile length does not match the object's channels");
  }
  const RotationMatrix frame = synth_camera_frame(view);
  const Vec3 right = frame.row(0), up = frame.row(1), dir = frame.row(2);
  const Vec3 ray = scale(dir, -1.0);

  SynthRender out{FeatureGrid(options.height, options.width, channels), BinaryMask(options.height, options.width)};
  for (std::size_t r = 0; r < options.height; ++r) {
    for (std::size_t c = 0; c < options.width; ++c) {
      const auto [u, v] = cell_uv(r, c, options.height, options.width);
      const Vec3 origin = add(add(scale(right, u), scale(up, v)), scale(dir, 4.0));
      Vec3 hit;
      if (!intersect_ellipsoid(origin, ray, object.semi_axes, hit)) continue;
      out.mask.set(r, c, true);
      object.field.evaluate(hit, out.raw.cell(r, c));
    }
  }
  if (noise_sigma > 0.0) {
    std::mt19937_64 rng(mix_seed(seed, object.seed));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t l = 0; l < out.raw.cells(); ++l) {
      auto cell = out.raw.cell(l);
      for (std::size_t k = 0; k < channels; ++k) {
        const double profile = options.noise_profile.empty() ? 1.0 : options.noise_profile[k];
        cell[k] += noise_sigma * profile * normal(rng);
      }
    }
  }
  return out;
}

BinaryMask plan_occlusion(const BinaryMask& mask, double fraction, std::uint64_t seed) {
  const std::size_t h = mask.height(), w = mask.width();
  BinaryMask region(h, w);
  if (fraction <= 0.0 || mask.popcount() == 0) return region;
  if (fraction >= 1.0) {
    for (std::size_t l = 0; l < mask.size(); ++l) region.set(l, mask[l]);
    return region;
  }
  const double target = fraction * static_cast<double>(mask.popcount());
  std::vector<std::size_t> visible;
  for (std::size_t l = 0; l < mask.size(); ++l)
    if (mask[l]) visible.push_back(l);

  std::mt19937_64 rng(mix_seed(seed, 0x0cc1));
  std::uniform_int_distribution<std::size_t> pick(0, visible.size() - 1);
  std::uniform_real_distribution<double> log_aspect(-0.7, 0.7);
  Rect best{0, 0, 0, 0};
  double best_err = target + 1.0;
  for (int attempt = 0; attempt < kOcclusionCandidates && best_err > 0.5; ++attempt) {
    const std::size_t anchor = visible[pick(rng)];
    const double ar = static_cast<double>(anchor / w), ac = static_cast<double>(anchor % w);
    const double aspect = std::exp(log_aspect(rng));
    // Grow a rectangle centred on the anchor and keep the size whose
    // coverage is closest to the target.
    for (double half = 0.5; half <= static_cast<double>(std::max(h, w)); half += 0.5) {
      const double hr = half * std::sqrt(aspect), hc = half / std::sqrt(aspect);
      Rect rect{static_cast<std::size_t>(std::clamp(std::floor(ar - hr + 0.5), 0.0, static_cast<double>(h))),
                static_cast<std::size_t>(std::clamp(std::floor(ac - hc + 0.5), 0.0, static_cast<double>(w))),
                static_cast<std::size_t>(std::clamp(std::floor(ar + hr + 0.5), 0.0, static_cast<double>(h))),
                static_cast<std::size_t>(std::clamp(std::floor(ac + hc + 0.5), 0.0, static_cast<double>(w)))};
      const double n = static_cast<double>(covered(mask, rect));
      const double err = std::abs(n - target);
      if (err < best_err) {
        best_err = err;
        best = rect;
      }
      if (n > target) break;
    }
  }
  for (std::size_t r = best.r0; r < best.r1; ++r)
    for (std::size_t c = best.c0; c < best.c1; ++c) region.set(r, c, true);
  return region;
}

FeatureGrid apply_occlusion(const FeatureGrid& grid, const BinaryMask& mask, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw Error(Errc::parameter, "occlusion fraction must lie in [0, 1]");
  if (mask.height() != grid.height() || mask.width() != grid.width()) {
    throw Error(Errc::dimension, "mask does not match the grid");
  }
  FeatureGrid out = grid;
  if (fraction == 0.0) return out;
  const BinaryMask region = plan_occlusion(mask, fraction, seed);
  const Distractor distractor(grid.channels(), mix_seed(seed, 0x0cc2));
  for (std::size_t r = 0; r < grid.height(); ++r)
    for (std::size_t c = 0; c < grid.width(); ++c)
      if (region.at(r, c)) distractor.at(r, c, grid.height(), grid.width(), out.cell(r, c));
  return out;
}

FeatureGrid apply_clutter(const FeatureGrid& grid, const BinaryMask& mask, std::uint64_t seed) {
  if (mask.height() != grid.height() || mask.width() != grid.width()) {
    throw Error(Errc::dimension, "mask does not match the grid");
  }
  FeatureGrid out = grid;
  const Distractor distractor(grid.channels(), mix_seed(seed, 0xc1u));
  for (std::size_t r = 0; r < grid.height(); ++r)
    for (std::size_t c = 0; c < grid.width(); ++c)
      if (!mask.at(r, c)) distractor.at(r, c, grid.height(), grid.width(), out.cell(r, c));
  return out;
}

Vec3 random_direction(std::mt19937_64& rng, double min_z) {
  if (min_z > 1.0) throw Error(Errc::parameter, "min_z above 1 admits no direction");
  std::normal_distribution<double> normal(0.0, 1.0);
  for (;;) {
    const Vec3 v{normal(rng), normal(rng), normal(rng)};
    const double n = norm(v);
    if (n < 1e-9) continue;
    const Vec3 d = scale(v, 1.0 / n);
    if (d[2] >= min_z) return d;
  }
}

Vec3 perturb_direction(const Vec3& d, double max_deg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Vec3 helper = std::abs(d[2]) < 0.9 ? Vec3{0.0, 0.0, 1.0} : Vec3{1.0, 0.0, 0.0};
  const Vec3 e1 = normalized(cross(d, helper));
  const Vec3 e2 = cross(d, e1);
  const double phi = 2.0 * std::numbers::pi * unit(rng);
  const double angle = max_deg * unit(rng) * kDeg;
  const Vec3 axis = add(scale(e1, std::cos(phi)), scale(e2, std::sin(phi)));
  // d rotated toward `axis` by `angle`.
  return normalized(add(scale(d, std::cos(angle)), scale(axis, std::sin(angle))));
}

}  // namespace posegrid
