#include "posegrid/translation.hpp"

#include <cmath>

#include "posegrid/error.hpp"

namespace posegrid {
namespace {

void require_positive(double value, const char* what) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw Error(Errc::parameter, std::string(what) + " must be positive and finite");
  }
}

}  // namespace

Vec3 Intrinsics::back_project(const Vec2& pixel) const {
  return {(pixel[0] - principal_point_px[0]) / focal_px, (pixel[1] - principal_point_px[1]) / focal_px, 1.0};
}

double estimate_z(double t_temp_z, const BBox& bb_temp, const BBox& bb_query, const Intrinsics& k_temp,
                  const Intrinsics& k_query) {
  require_positive(t_temp_z, "template depth");
  require_positive(bb_temp.diag_px, "template box diagonal");
  require_positive(bb_query.diag_px, "query box diagonal");
  require_positive(k_temp.focal_px, "template focal length");
  require_positive(k_query.focal_px, "query focal length");
  return t_temp_z * (bb_temp.diag_px / bb_query.diag_px) * (k_query.focal_px / k_temp.focal_px);
}

Vec3 estimate_translation(double t_temp_z, const BBox& bb_temp, const BBox& bb_query, const Intrinsics& k_temp,
                          const Intrinsics& k_query) {
  const double z_query = estimate_z(t_temp_z, bb_temp, bb_query, k_temp, k_query);
  const Vec3 ray_query = k_query.back_project(bb_query.center_px);
  const Vec3 ray_temp = k_temp.back_project(bb_temp.center_px);
  const Vec3 delta = sub(scale(ray_query, z_query), scale(ray_temp, t_temp_z));
  // The z terms cancel algebraically to z_query; keep it exact.
  return {delta[0], delta[1], z_query};
}

}  // namespace posegrid
