#pragma once

#include <span>
#include <vector>

#include "sphalign/sphere.hpp"

namespace sphalign {

constexpr int kMaxBasisDegree = 16;

enum class FieldKind { Gradient = 0, Rotational = 1 };

struct FieldTag {
  FieldKind kind;
  int l;
  int m;
};

/// Real vector spherical harmonics up to degree L:
///   gradient fields   grad Y_lm / sqrt(l(l+1)),
///   rotational fields p x grad Y_lm / sqrt(l(l+1)),
/// for 1 <= l <= L, -l <= m <= l, ordered by (kind, l, m). Both families are
/// L2-orthonormal on the unit sphere.
class TangentBasis {
 public:
  explicit TangentBasis(int max_degree);

  int max_degree() const noexcept { return degree_; }
  std::size_t size() const noexcept { return tags_.size(); }
  const FieldTag& tag(std::size_t i) const { return tags_[i]; }
  std::size_t index_of(FieldKind kind, int l, int m) const;

  /// Real orthonormal scalar harmonics Y_lm(p) for 1 <= l <= L in (l, m) order.
  void eval_scalar(const Vec3& p, std::span<double> out) const;

  /// All fields at p (out.size() == size()); each is tangent at p.
  void eval(const Vec3& p, std::span<Vec3> out) const;

  /// Surface divergences at p: -sqrt(l(l+1)) Y_lm for gradient fields, 0 for
  /// rotational ones.
  void divergence(const Vec3& p, std::span<double> out) const;

  /// sum_i coeffs[i] b_i(p).
  Vec3 synthesize(std::span<const double> coeffs, const Vec3& p) const;

 private:
  // Scalar harmonics and their ambient gradients (projected to the tangent plane).
  void eval_harmonics(const Vec3& p, double* y, Vec3* grad) const;

  int degree_;
  std::vector<FieldTag> tags_;
  std::vector<double> norm_;  // per (l, m) in scalar order
};

TangentBasis build_basis(int max_degree);

/// Process-wide immutable basis of the given degree, built on first use.
const TangentBasis& shared_basis(int max_degree);

/// Number of fields for degree L: 2 (L^2 + 2L).
constexpr std::size_t basis_size(int max_degree) {
  return 2 * static_cast<std::size_t>(max_degree * max_degree + 2 * max_degree);
}

std::vector<TangentVector> eval_basis(const TangentBasis& basis, const SpherePoint& p);
std::vector<double> basis_divergence(const TangentBasis& basis, const SpherePoint& p);

}  // namespace sphalign
