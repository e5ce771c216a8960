#pragma once

#include <span>
#include <vector>

#include "sphalign/basis.hpp"
#include "sphalign/density.hpp"
#include "sphalign/energy.hpp"

namespace sphalign {

/// One exp-map step p -> exp_p(step * sum_i c_i b_i(p)), with the coefficients
/// of p's hemisphere.
struct WarpIncrement {
  double step = 0.0;
  int degree = 1;
  std::vector<double> coeffs1, coeffs2;

  const std::vector<double>& coeffs(Hemisphere h) const {
    return h == Hemisphere::Left ? coeffs1 : coeffs2;
  }
  /// Displacement vector at p.
  Vec3 field(Hemisphere h, const Vec3& p) const;
  Vec3 apply(Hemisphere h, const Vec3& p) const;
  /// The point z with apply(h, z) == p, by fixed-point refinement.
  Vec3 invert(Hemisphere h, const Vec3& p) const;
};

/// Composition of increments, applied first to last. Empty is the identity.
struct WarpSequence {
  std::vector<WarpIncrement> increments;

  std::size_t size() const noexcept { return increments.size(); }
  bool empty() const noexcept { return increments.empty(); }
  void append(const WarpSequence& other);
};

HemiPoint apply_warp(const WarpSequence& warp, const HemiPoint& p);
Vec3 apply_warp(const WarpSequence& warp, Hemisphere h, const Vec3& p);
std::vector<HemiPoint> apply_warp(const WarpSequence& warp, std::span<const HemiPoint> pts);
EndpointSet apply_warp(const WarpSequence& warp, const EndpointSet& pts);

/// Moves every endpoint (and its hemisphere's grid targets, if given) by one increment.
void apply_increment(const WarpIncrement& inc, EndpointSet& pts);
void apply_increment(const WarpIncrement& inc, const IcosphereMesh& mesh,
                     std::vector<Vec3>& targets);

/// Images of the grid vertices of both hemispheres.
WarpGrid warp_grid(const WarpSequence& warp, std::shared_ptr<const GridLayout> layout);

/// Grid of the inverse of one increment, evaluated per vertex.
WarpGrid inverse_increment_grid(const WarpIncrement& inc, std::shared_ptr<const GridLayout> layout);

}  // namespace sphalign
