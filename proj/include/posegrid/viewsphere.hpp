#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace posegrid {

using Vec3 = std::array<double, 3>;

inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
inline Vec3 scale(const Vec3& a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }
inline Vec3 add(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec3 normalized(const Vec3& a);

/// Camera position on the unit view sphere (object at the origin) plus a
/// rotation about the optical axis. The constructor normalizes the
/// direction and wraps the in-plane angle into [0, 360).
class Viewpoint {
 public:
  Viewpoint() = default;
  explicit Viewpoint(const Vec3& direction, double inplane_deg = 0.0);

  const Vec3& direction() const noexcept { return direction_; }
  double inplane_deg() const noexcept { return inplane_deg_; }

  /// Angle from +z in degrees.
  double elevation_deg() const;

 private:
  Vec3 direction_{0.0, 0.0, 1.0};
  double inplane_deg_ = 0.0;
};

/// Row-major 3x3 rotation. Rows are the camera axes expressed in the object
/// frame.
struct RotationMatrix {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  double operator()(std::size_t r, std::size_t c) const { return m[r * 3 + c]; }
  double& operator()(std::size_t r, std::size_t c) { return m[r * 3 + c]; }
  Vec3 row(std::size_t r) const { return {m[r * 3], m[r * 3 + 1], m[r * 3 + 2]}; }

  RotationMatrix transposed() const;
  double determinant() const;
  /// Rotation angle in degrees, recovered from the trace.
  double angle_deg() const;
  /// Max deviation of R^T R from identity.
  double orthonormality_error() const;
};

RotationMatrix operator*(const RotationMatrix& a, const RotationMatrix& b);
Vec3 operator*(const RotationMatrix& r, const Vec3& v);

inline constexpr int kMaxIcosphereLevel = 6;

/// Vertices of the icosahedron subdivided `level` times (4-way per face),
/// projected to the unit sphere. Two vertices sit on the +/-z poles. Sorted by
/// z, then y, then x, all descending. Count is 10 * 4^level + 2.
std::vector<Vec3> icosphere_vertices(int level);

/// Points with z >= min_z, order preserved.
std::vector<Vec3> hemisphere_filter(std::span<const Vec3> points, double min_z);

/// Cartesian product of directions with n_inplane equally spaced in-plane
/// angles starting at 0. Direction-major order.
std::vector<Viewpoint> enumerate_viewpoints(std::span<const Vec3> directions, int n_inplane);
std::vector<Viewpoint> enumerate_viewpoints(int level, double min_z, int n_inplane);

/// Look-at rotation: third row is -direction, composed with the in-plane
/// rotation about the optical axis. This overload uses up = +z and falls back
/// to +y when the direction is parallel to it.
RotationMatrix viewpoint_to_rotation(const Viewpoint& v);
/// Same, with an explicit up hint. Throws Errc::degenerate_orientation when
/// the hint is (anti)parallel to the direction.
RotationMatrix viewpoint_to_rotation(const Viewpoint& v, const Vec3& up_hint);

/// Angle between the two view directions, in degrees; in-plane is ignored.
double pose_error_deg(const Viewpoint& a, const Viewpoint& b);

/// Angle thresholds (Acc15, positive pairs) treat errors within this of the
/// threshold as on it, so a pose built exactly at the threshold never passes
/// through rounding.
inline constexpr double kAngleBoundaryTolDeg = 1e-9;

/// True iff error_deg < threshold_deg, with the boundary tolerance above.
inline bool below_threshold(double error_deg, double threshold_deg) {
  return error_deg < threshold_deg - kAngleBoundaryTolDeg;
}

/// Pose error for objects symmetric about the z-axis: the minimum over
/// rotations about z, which reduces to the elevation difference.
double symmetric_pose_error_deg(const Viewpoint& a, const Viewpoint& b);

/// Rotation by `deg` about +z applied to v.
Vec3 rotate_about_z(const Vec3& v, double deg);

}  // namespace posegrid
