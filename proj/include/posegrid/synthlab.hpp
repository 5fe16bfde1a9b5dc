#pragma once

// Synthetic objects that stand in for rendered templates and real crops.
//
// An object is an ellipsoid carrying a smooth random descriptor field (a sum
// of random Fourier components over the object frame). Rendering casts one
// orthographic ray per grid cell: cells that hit the ellipsoid get the field
// value at the hit point and a mask bit, the rest stay zero. Descriptors are
// therefore a pure function of (object, viewpoint, cell) and vary
// continuously with the viewpoint.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "posegrid/feature_grid.hpp"
#include "posegrid/viewsphere.hpp"

namespace posegrid {

/// Smooth random field R^3 -> R^channels.
class FourierField {
 public:
  FourierField() = default;
  FourierField(std::size_t channels, std::size_t components, double frequency, std::uint64_t seed,
               double mean = 0.0);

  std::size_t channels() const noexcept { return channels_; }
  void evaluate(const Vec3& p, std::span<double> out) const;

 private:
  std::size_t channels_ = 0;
  double mean_ = 0.0;
  std::vector<Vec3> frequencies_;
  std::vector<double> phases_;
  std::vector<double> amplitudes_;  // channels x components
};

struct SynthObject {
  std::uint32_t object_id = 0;
  std::uint64_t seed = 0;
  Vec3 semi_axes{0.6, 0.6, 0.6};
  FourierField field;

  std::size_t channels() const noexcept { return field.channels(); }
};

inline constexpr std::size_t kSynthComponents = 32;
inline constexpr double kSynthFrequency = 3.0;
/// Common mean added to every object and distractor descriptor channel, so
/// unrelated cells are positively correlated as with rectified features.
inline constexpr double kSynthFeatureMean = 1.0;

/// Deterministic object from (id, seed).
SynthObject make_synth_object(std::uint32_t object_id, std::uint64_t seed, std::size_t channels = 8);

struct RenderOptions {
  std::size_t height = 25;
  std::size_t width = 25;
  /// Per-channel multiplier on noise_sigma; empty means all ones.
  std::vector<double> noise_profile;
};

struct SynthRender {
  FeatureGrid raw;
  BinaryMask mask;
};

/// Clean render plus seeded Gaussian noise of scale noise_sigma on every
/// cell. noise_sigma = 0 reproduces the template exactly.
SynthRender render_synth(const SynthObject& object, const Viewpoint& view, double noise_sigma, std::uint64_t seed,
                         const RenderOptions& options = {});

/// Camera axes used by the renderer: rows are image right, image up and the
/// view direction. The frame is transported from the +z pole along the
/// meridian, so it is continuous over the whole upper hemisphere; the
/// in-plane angle rotates the first two rows.
RotationMatrix synth_camera_frame(const Viewpoint& view);

/// Cells covered by a seeded axis-aligned rectangle holding roughly
/// fraction * popcount of the mask's visible cells. fraction >= 1 covers
/// every visible cell; fraction <= 0 covers nothing.
BinaryMask plan_occlusion(const BinaryMask& mask, double fraction, std::uint64_t seed);

/// Overwrites the planned rectangle with distractor descriptors. The mask
/// itself is not modified. Throws Errc::parameter for fraction outside [0, 1].
FeatureGrid apply_occlusion(const FeatureGrid& grid, const BinaryMask& mask, double fraction, std::uint64_t seed);

/// Fills every cell outside the mask with distractor descriptors.
FeatureGrid apply_clutter(const FeatureGrid& grid, const BinaryMask& mask, std::uint64_t seed);

/// Seeded uniform direction with z >= min_z.
Vec3 random_direction(std::mt19937_64& rng, double min_z = 0.0);
/// Direction rotated away from `d` by an angle drawn from [0, max_deg).
Vec3 perturb_direction(const Vec3& d, double max_deg, std::mt19937_64& rng);

/// splitmix64-style mixing of seed components.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace posegrid
