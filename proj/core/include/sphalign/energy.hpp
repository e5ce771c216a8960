#pragma once

#include <array>
#include <memory>
#include <vector>

#include "sphalign/basis.hpp"
#include "sphalign/density.hpp"

namespace sphalign {

/// Quadrature approximation of the double integral of (q1 - q2)^2 over Omega^2.
double warp_energy(const QGrid& q1, const QGrid& q2);

/// Images of the grid vertices under a componentwise warp, indexed by global
/// vertex index (hemi - 1) * V + v.
struct WarpGrid {
  std::shared_ptr<const GridLayout> layout;
  std::vector<Vec3> targets;

  const IcosphereMesh& mesh() const { return layout->mesh(); }
};

WarpGrid identity_warp(std::shared_ptr<const GridLayout> layout);
/// Applies the same rotation on both hemispheres.
WarpGrid rotation_warp(std::shared_ptr<const GridLayout> layout, const Mat3& rotation);

/// Faces whose warped triangle has non-positive orientation, over both hemispheres.
std::size_t inverted_face_count(const IcosphereMesh& mesh, std::span<const Vec3> targets);
std::size_t inverted_face_count(const WarpGrid& warp);

/// det(D gamma) per global vertex.
struct JacobianField {
  std::vector<double> det;

  double min() const;
};

/// Least-squares fit of the differential from the 1-ring log-map displacements
/// in orthonormal frames at v and gamma(v). Throws SingularNeighborhood when
/// the fit is rank deficient.
JacobianField jacobian_determinant(const WarpGrid& warp);

/// (q * gamma)(x, y) = q(gamma x, gamma y) sqrt(det D gamma_x) sqrt(det D gamma_y),
/// with q(gamma x, gamma y) interpolated barycentrically in each argument.
QGrid apply_group_action(const QGrid& q, const WarpGrid& warp);

/// Basis coefficients of the energy gradient per hemisphere.
struct GradientCoeffs {
  std::vector<double> coeffs1, coeffs2;
  std::array<double, 2> l2_norms{0.0, 0.0};

  const std::vector<double>& coeffs(Hemisphere h) const {
    return h == Hemisphere::Left ? coeffs1 : coeffs2;
  }
  double max_norm() const { return std::max(l2_norms[0], l2_norms[1]); }
};

/// Directional derivatives of H(gamma) = ||q1 - q2 * gamma||^2 at the identity
/// along each basis field acting on one hemisphere. dq2 must be the gradient
/// grid of q2.
GradientCoeffs energy_gradient(const QGrid& q1, const QGrid& q2, const QGradientGrid& dq2,
                               const TangentBasis& basis);

/// Same derivative with d_x q2 from 1-ring least-squares differences of the
/// grid itself (no endpoints needed). Optionally returns the energy.
GradientCoeffs grid_energy_gradient(const QGrid& q1, const QGrid& q2, const TangentBasis& basis,
                                    double* energy = nullptr);

/// Derivatives of the energy between q1 and the square root of the density
/// re-estimated from `moving` after pushing every endpoint of hemisphere h
/// along exp(t b_i); f2 must be engine.estimate(moving). Also returns the
/// energy at the current state.
struct EndpointGradient {
  GradientCoeffs coeffs;
  double energy = 0.0;
};

EndpointGradient endpoint_energy_gradient(const QGrid& q1, const DensityGrid& f2,
                                          const EndpointSet& moving, const KdeEngine& engine,
                                          const TangentBasis& basis);

/// As above but reuses f2's storage for the residual weights (f2 is destroyed).
EndpointGradient endpoint_energy_gradient_inplace(const QGrid& q1, DensityGrid& f2,
                                                  const EndpointSet& moving,
                                                  const KdeEngine& engine,
                                                  const TangentBasis& basis);

/// Projects per-endpoint sensitivities u_j (first ends) and v_j (second ends)
/// onto the basis, per hemisphere, scaled by 1/N.
GradientCoeffs project_sensitivities(const EndpointSet& pts, std::span<const Vec3> u,
                                     std::span<const Vec3> v, const TangentBasis& basis);

}  // namespace sphalign
