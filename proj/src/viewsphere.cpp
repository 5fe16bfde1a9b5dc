#include "posegrid/viewsphere.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <utility>

#include "posegrid/error.hpp"

namespace posegrid {
namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr double kParallelEps = 1e-6;

double wrap_degrees(double deg) {
  double w = std::fmod(deg, 360.0);
  if (w < 0.0) w += 360.0;
  // fmod of a tiny negative can round back up to exactly 360.
  if (w >= 360.0) w = 0.0;
  return w;
}

double clamp_unit(double x) { return std::clamp(x, -1.0, 1.0); }

Vec3 snap(Vec3 v) {
  for (double& x : v) {
    if (std::abs(x) < 1e-12) x = 0.0;
  }
  return v;
}

struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::size_t, 3>> faces;
};

Mesh base_icosahedron() {
  // Poles on +/-z, two rings of five at z = +/-1/sqrt(5).
  Mesh mesh;
  const double h = 1.0 / std::sqrt(5.0);
  const double r = 2.0 / std::sqrt(5.0);
  mesh.vertices.push_back({0.0, 0.0, 1.0});
  for (int i = 0; i < 5; ++i) {
    const double a = 2.0 * std::numbers::pi * i / 5.0;
    mesh.vertices.push_back({r * std::cos(a), r * std::sin(a), h});
  }
  for (int i = 0; i < 5; ++i) {
    const double a = 2.0 * std::numbers::pi * (i + 0.5) / 5.0;
    mesh.vertices.push_back({r * std::cos(a), r * std::sin(a), -h});
  }
  mesh.vertices.push_back({0.0, 0.0, -1.0});
  for (auto& v : mesh.vertices) v = snap(v);

  for (std::size_t i = 0; i < 5; ++i) {
    const std::size_t up = 1 + i, up_next = 1 + (i + 1) % 5;
    const std::size_t lo = 6 + i, lo_next = 6 + (i + 1) % 5;
    mesh.faces.push_back({0, up, up_next});
    mesh.faces.push_back({up, lo, up_next});
    mesh.faces.push_back({up_next, lo, lo_next});
    mesh.faces.push_back({11, lo_next, lo});
  }
  return mesh;
}

Mesh subdivide(const Mesh& in) {
  Mesh out;
  out.vertices = in.vertices;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> midpoints;
  auto midpoint = [&](std::size_t a, std::size_t b) {
    const auto key = std::minmax(a, b);
    if (auto it = midpoints.find(key); it != midpoints.end()) return it->second;
    const Vec3 m = snap(normalized(add(out.vertices[key.first], out.vertices[key.second])));
    out.vertices.push_back(m);
    midpoints.emplace(key, out.vertices.size() - 1);
    return out.vertices.size() - 1;
  };
  out.faces.reserve(in.faces.size() * 4);
  for (const auto& f : in.faces) {
    const std::size_t ab = midpoint(f[0], f[1]);
    const std::size_t bc = midpoint(f[1], f[2]);
    const std::size_t ca = midpoint(f[2], f[0]);
    out.faces.push_back({f[0], ab, ca});
    out.faces.push_back({f[1], bc, ab});
    out.faces.push_back({f[2], ca, bc});
    out.faces.push_back({ab, bc, ca});
  }
  return out;
}

// Descending (z, y, x) with a 1e-9 tie band, so coordinates that differ only
// by rounding compare equal.
bool vertex_order(const Vec3& a, const Vec3& b) {
  constexpr double eps = 1e-9;
  for (int axis = 2; axis >= 0; --axis) {
    if (a[axis] > b[axis] + eps) return true;
    if (a[axis] < b[axis] - eps) return false;
  }
  return false;
}

RotationMatrix look_at(const Vec3& direction, const Vec3& up, double inplane_deg) {
  const Vec3 z = scale(direction, -1.0);
  const Vec3 x = normalized(cross(up, z));
  const Vec3 y = cross(z, x);
  const double c = std::cos(inplane_deg * kDeg);
  const double s = std::sin(inplane_deg * kDeg);
  RotationMatrix r;
  for (int k = 0; k < 3; ++k) {
    r(0, k) = c * x[k] + s * y[k];
    r(1, k) = -s * x[k] + c * y[k];
    r(2, k) = z[k];
  }
  return r;
}

bool nearly_parallel(const Vec3& a, const Vec3& b) {
  return norm(cross(a, b)) <= std::sin(kParallelEps) * norm(a) * norm(b);
}

}  // namespace

Vec3 normalized(const Vec3& a) {
  const double n = norm(a);
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw Error(Errc::validation, "cannot normalize zero or non-finite vector");
  }
  return scale(a, 1.0 / n);
}

Viewpoint::Viewpoint(const Vec3& direction, double inplane_deg)
    : direction_(std::abs(norm(direction) - 1.0) <= 1e-12 ? direction : normalized(direction)),
      inplane_deg_(wrap_degrees(inplane_deg)) {
  if (!std::isfinite(inplane_deg)) throw Error(Errc::validation, "in-plane angle is not finite");
}

double Viewpoint::elevation_deg() const { return std::acos(clamp_unit(direction_[2])) / kDeg; }

RotationMatrix RotationMatrix::transposed() const {
  RotationMatrix t;
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 3; ++c) t(r, c) = (*this)(c, r);
  return t;
}

double RotationMatrix::determinant() const {
  return dot(row(0), cross(row(1), row(2)));
}

double RotationMatrix::angle_deg() const {
  // atan2 of the skew part against the symmetric part stays accurate near 0 and 180.
  const double tr = m[0] + m[4] + m[8];
  const Vec3 skew{m[7] - m[5], m[2] - m[6], m[3] - m[1]};
  return std::atan2(0.5 * norm(skew), 0.5 * (tr - 1.0)) / kDeg;
}

double RotationMatrix::orthonormality_error() const {
  const RotationMatrix p = transposed() * (*this);
  double err = 0.0;
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 3; ++c) err = std::max(err, std::abs(p(r, c) - (r == c ? 1.0 : 0.0)));
  return err;
}

RotationMatrix operator*(const RotationMatrix& a, const RotationMatrix& b) {
  RotationMatrix out;
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 3; ++c) {
      double s = 0.0;
      for (std::size_t k = 0; k < 3; ++k) s += a(r, k) * b(k, c);
      out(r, c) = s;
    }
  return out;
}

Vec3 operator*(const RotationMatrix& r, const Vec3& v) {
  return {dot(r.row(0), v), dot(r.row(1), v), dot(r.row(2), v)};
}

std::vector<Vec3> icosphere_vertices(int level) {
  if (level < 0 || level > kMaxIcosphereLevel) {
    throw Error(Errc::bounds, "icosphere level " + std::to_string(level) + " outside [0, " +
                                  std::to_string(kMaxIcosphereLevel) + "]");
  }
  Mesh mesh = base_icosahedron();
  for (int i = 0; i < level; ++i) mesh = subdivide(mesh);
  std::vector<Vec3> vertices = std::move(mesh.vertices);
  std::stable_sort(vertices.begin(), vertices.end(), vertex_order);
  return vertices;
}

std::vector<Vec3> hemisphere_filter(std::span<const Vec3> points, double min_z) {
  std::vector<Vec3> out;
  std::copy_if(points.begin(), points.end(), std::back_inserter(out),
               [min_z](const Vec3& p) { return p[2] >= min_z; });
  return out;
}

std::vector<Viewpoint> enumerate_viewpoints(std::span<const Vec3> directions, int n_inplane) {
  if (n_inplane < 1) throw Error(Errc::parameter, "n_inplane must be >= 1");
  std::vector<Viewpoint> out;
  out.reserve(directions.size() * static_cast<std::size_t>(n_inplane));
  const double step = 360.0 / n_inplane;
  for (const Vec3& d : directions) {
    for (int k = 0; k < n_inplane; ++k) out.emplace_back(d, step * k);
  }
  return out;
}

std::vector<Viewpoint> enumerate_viewpoints(int level, double min_z, int n_inplane) {
  const auto vertices = icosphere_vertices(level);
  const auto kept = hemisphere_filter(vertices, min_z);
  return enumerate_viewpoints(kept, n_inplane);
}

RotationMatrix viewpoint_to_rotation(const Viewpoint& v) {
  constexpr Vec3 up{0.0, 0.0, 1.0};
  constexpr Vec3 fallback{0.0, 1.0, 0.0};
  return look_at(v.direction(), nearly_parallel(v.direction(), up) ? fallback : up, v.inplane_deg());
}

RotationMatrix viewpoint_to_rotation(const Viewpoint& v, const Vec3& up_hint) {
  if (!(norm(up_hint) > 0.0) || nearly_parallel(v.direction(), up_hint)) {
    throw Error(Errc::degenerate_orientation, "up hint is parallel to the view direction");
  }
  return look_at(v.direction(), normalized(up_hint), v.inplane_deg());
}

double pose_error_deg(const Viewpoint& a, const Viewpoint& b) {
  return std::atan2(norm(cross(a.direction(), b.direction())), dot(a.direction(), b.direction())) / kDeg;
}

double symmetric_pose_error_deg(const Viewpoint& a, const Viewpoint& b) {
  return std::abs(a.elevation_deg() - b.elevation_deg());
}

Vec3 rotate_about_z(const Vec3& v, double deg) {
  const double c = std::cos(deg * kDeg), s = std::sin(deg * kDeg);
  return {c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]};
}

}  // namespace posegrid
