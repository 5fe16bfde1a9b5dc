#pragma once

#include <array>

#include "posegrid/viewsphere.hpp"

namespace posegrid {

using Vec2 = std::array<double, 2>;

/// Pinhole camera with square pixels and no skew.
struct Intrinsics {
  double focal_px = 1.0;
  Vec2 principal_point_px{0.0, 0.0};

  /// K^-1 [u, v, 1]^T.
  Vec3 back_project(const Vec2& pixel) const;
};

struct BBox {
  Vec2 center_px{0.0, 0.0};
  double diag_px = 1.0;
};

/// Query depth (mm) from the template render depth, the two box diagonals
/// and the two focal lengths. Throws Errc::parameter on non-positive inputs.
double estimate_z(double t_temp_z, const BBox& bb_temp, const BBox& bb_query, const Intrinsics& k_temp,
                  const Intrinsics& k_query);

/// Full query translation (mm): the template translation (0, 0, t_temp_z)
/// plus the offset between the back-projected box centres at their
/// respective depths. The z component equals estimate_z exactly.
Vec3 estimate_translation(double t_temp_z, const BBox& bb_temp, const BBox& bb_query, const Intrinsics& k_temp,
                          const Intrinsics& k_query);

}  // namespace posegrid
