#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sphalign/sphere.hpp"

namespace sphalign {

/// One neighbour returned by SphereIndex::query: point index and cosine of the
/// angle to the query centre.
struct CapHit {
  std::uint32_t index;
  double cosine;
};

/// Uniform cell hash over the cube [-1,1]^3 for spherical-cap range queries.
/// Built once per point set and cap radius; queries are read-only.
class SphereIndex {
 public:
  SphereIndex() = default;
  SphereIndex(std::span<const Vec3> points, double max_angle);

  /// Appends every point p with p . centre >= min_cosine (which must describe a
  /// cap no wider than max_angle) to out, in ascending index order.
  void query(const Vec3& centre, double min_cosine, std::vector<CapHit>& out) const;

  double max_angle() const noexcept { return max_angle_; }
  std::size_t size() const noexcept { return points_.size(); }

 private:
  int cell_coord(double x) const noexcept;

  std::vector<Vec3> points_;
  double max_angle_ = 0.0;
  int cells_ = 1;
  double cell_size_ = 2.0;
  std::vector<std::uint32_t> cell_ptr_, cell_items_;
};

}  // namespace sphalign
