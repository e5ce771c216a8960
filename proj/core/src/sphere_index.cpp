#include "sphalign/sphere_index.hpp"

#include <algorithm>
#include <cmath>

namespace sphalign {

SphereIndex::SphereIndex(std::span<const Vec3> points, double max_angle)
    : points_(points.begin(), points.end()), max_angle_(max_angle) {
  const double chord = 2.0 * std::sin(std::min(max_angle, 3.14159265358979) / 2.0);
  cells_ = std::clamp(static_cast<int>(std::floor(2.0 / std::max(chord, 1e-6))), 1, 96);
  cell_size_ = 2.0 / cells_;
  const std::size_t ncell = static_cast<std::size_t>(cells_) * cells_ * cells_;
  std::vector<std::uint32_t> cell_of(points_.size());
  cell_ptr_.assign(ncell + 1, 0);
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const auto& p = points_[i];
    const std::size_t c =
        (static_cast<std::size_t>(cell_coord(p.x())) * cells_ + cell_coord(p.y())) * cells_ +
        cell_coord(p.z());
    cell_of[i] = static_cast<std::uint32_t>(c);
    ++cell_ptr_[c + 1];
  }
  for (std::size_t c = 0; c < ncell; ++c) cell_ptr_[c + 1] += cell_ptr_[c];
  cell_items_.resize(points_.size());
  std::vector<std::uint32_t> fill(cell_ptr_.begin(), cell_ptr_.end() - 1);
  for (std::size_t i = 0; i < points_.size(); ++i) {
    cell_items_[fill[cell_of[i]]++] = static_cast<std::uint32_t>(i);
  }
}

int SphereIndex::cell_coord(double x) const noexcept {
  return std::clamp(static_cast<int>((x + 1.0) / cell_size_), 0, cells_ - 1);
}

void SphereIndex::query(const Vec3& centre, double min_cosine, std::vector<CapHit>& out) const {
  const std::size_t first = out.size();
  const double chord = std::sqrt(std::max(0.0, 2.0 - 2.0 * min_cosine)) + 1e-12;
  int lo[3], hi[3];
  for (int d = 0; d < 3; ++d) {
    lo[d] = cell_coord(centre[d] - chord);
    hi[d] = cell_coord(centre[d] + chord);
  }
  for (int i = lo[0]; i <= hi[0]; ++i) {
    for (int j = lo[1]; j <= hi[1]; ++j) {
      const std::size_t row = (static_cast<std::size_t>(i) * cells_ + j) * cells_;
      for (std::uint32_t k = cell_ptr_[row + lo[2]]; k < cell_ptr_[row + hi[2] + 1]; ++k) {
        const std::uint32_t idx = cell_items_[k];
        const double c = std::clamp(points_[idx].dot(centre), -1.0, 1.0);
        if (c >= min_cosine) out.push_back({idx, c});
      }
    }
  }
  std::sort(out.begin() + static_cast<std::ptrdiff_t>(first), out.end(),
            [](const CapHit& a, const CapHit& b) { return a.index < b.index; });
}

}  // namespace sphalign
