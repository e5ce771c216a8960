#include "sphalign/sphere.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Geometry>

#include "sphalign/errors.hpp"

namespace sphalign {

SpherePoint::SpherePoint(const Vec3& v) {
  const double n2 = v.squaredNorm();
  if (!(n2 > 0.0) || !std::isfinite(n2)) {
    throw Error("SpherePoint: cannot normalize a zero or non-finite vector");
  }
  // Already unit up to rounding: keep the bits so normalization is idempotent.
  v_ = std::abs(n2 - 1.0) <= 4 * std::numeric_limits<double>::epsilon() ? v : Vec3(v / std::sqrt(n2));
}

double clamped_dot(const Vec3& a, const Vec3& b) noexcept {
  return std::clamp(a.dot(b), -1.0, 1.0);
}

double geodesic_angle(const Vec3& x, const Vec3& y) noexcept {
  if (x == y) return 0.0;
  // atan2 form keeps full precision near 0 and pi where acos loses digits.
  const double s = x.cross(y).norm();
  const double c = x.dot(y);
  return std::atan2(s, c);
}

double geodesic_angle(const SpherePoint& x, const SpherePoint& y) noexcept {
  return geodesic_angle(x.coords(), y.coords());
}

Vec3 exp_map(const Vec3& x, const Vec3& v) {
  const double n = v.norm();
  if (n < 1e-14) return x;
  Vec3 out = std::cos(n) * x + (std::sin(n) / n) * v;
  return out / out.norm();
}

SpherePoint exp_map(const SpherePoint& x, const Vec3& v) {
  if (v.norm() < 1e-14) return x;
  return SpherePoint(exp_map(x.coords(), v));
}

SpherePoint exp_map(const TangentVector& v) { return exp_map(v.base, v.vec); }

Vec3 log_map(const Vec3& x, const Vec3& y) {
  const double c = x.dot(y);
  if (c < -1.0 + 1e-12) {
    throw AntipodalError("log_map: points are antipodal");
  }
  Vec3 w = y - c * x;
  const double wn = w.norm();
  if (wn < 1e-300) return Vec3::Zero();
  return (geodesic_angle(x, y) / wn) * w;
}

TangentVector log_map(const SpherePoint& x, const SpherePoint& y) {
  return TangentVector{x, log_map(x.coords(), y.coords())};
}

std::pair<Vec3, Vec3> tangent_frame(const Vec3& p) {
  // Pick the coordinate axis least aligned with p as the seed direction.
  Vec3 seed = Vec3::UnitX();
  const Vec3 a = p.cwiseAbs();
  if (a.y() <= a.x() && a.y() <= a.z()) {
    seed = Vec3::UnitY();
  } else if (a.z() <= a.x() && a.z() <= a.y()) {
    seed = Vec3::UnitZ();
  }
  Vec3 e1 = project_tangent(p, seed).normalized();
  Vec3 e2 = p.cross(e1);
  return {e1, e2};
}

Mat3 rotation_matrix(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

}  // namespace sphalign
