#pragma once

#include <cstdint>
#include <utility>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace sphalign {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Component of the two-sphere domain a point lives on.
enum class Hemisphere : std::uint8_t { Left = 1, Right = 2 };

constexpr int hemi_index(Hemisphere h) noexcept { return static_cast<int>(h) - 1; }

/// Unit vector in R^3. Every constructor normalizes its argument.
class SpherePoint {
 public:
  SpherePoint() : v_(0.0, 0.0, 1.0) {}
  explicit SpherePoint(const Vec3& v);
  SpherePoint(double x, double y, double z) : SpherePoint(Vec3(x, y, z)) {}

  const Vec3& coords() const noexcept { return v_; }
  double x() const noexcept { return v_.x(); }
  double y() const noexcept { return v_.y(); }
  double z() const noexcept { return v_.z(); }
  double dot(const SpherePoint& o) const noexcept { return v_.dot(o.v_); }

  SpherePoint operator-() const { return SpherePoint(-v_); }
  friend bool operator==(const SpherePoint& a, const SpherePoint& b) { return a.v_ == b.v_; }

 private:
  Vec3 v_;
};

struct HemiPoint {
  Hemisphere hemi = Hemisphere::Left;
  SpherePoint point;

  friend bool operator==(const HemiPoint&, const HemiPoint&) = default;
};

struct TangentVector {
  SpherePoint base;
  Vec3 vec = Vec3::Zero();

  double norm() const { return vec.norm(); }
};

/// Dot product clamped to [-1, 1].
double clamped_dot(const Vec3& a, const Vec3& b) noexcept;

double geodesic_angle(const SpherePoint& x, const SpherePoint& y) noexcept;
double geodesic_angle(const Vec3& x, const Vec3& y) noexcept;

/// Riemannian exponential map; result re-normalized. Zero steps (|v| < 1e-14) return x.
SpherePoint exp_map(const SpherePoint& x, const Vec3& v);
SpherePoint exp_map(const TangentVector& v);
Vec3 exp_map(const Vec3& x, const Vec3& v);

/// Inverse of exp_map. Throws AntipodalError when x . y < -1 + 1e-12.
TangentVector log_map(const SpherePoint& x, const SpherePoint& y);
Vec3 log_map(const Vec3& x, const Vec3& y);

/// Removes the normal component of v at p.
inline Vec3 project_tangent(const Vec3& p, const Vec3& v) { return v - v.dot(p) * p; }

/// Deterministic right-handed orthonormal frame (e1, e2) of the tangent plane at p.
std::pair<Vec3, Vec3> tangent_frame(const Vec3& p);

/// Rotation matrix from an axis (any length > 0) and an angle.
Mat3 rotation_matrix(const Vec3& axis, double angle);

}  // namespace sphalign
