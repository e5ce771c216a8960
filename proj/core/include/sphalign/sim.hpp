#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "sphalign/density.hpp"
#include "sphalign/warp.hpp"

namespace sphalign {

/// Mixture of within-hemisphere vMF pairs (mass alpha) and uniform cross pairs.
struct SimDensitySpec {
  double alpha = 0.85;
  double kappa = 10.0;
};

/// Pairs drawn with counter-based randomness: pair i depends only on (seed, i).
/// Ids are 0..N-1; labels name the coarse bundle of each pair (see bundle_label).
EndpointSet sample_ground_truth(const SimDensitySpec& spec, std::size_t n, std::uint64_t seed);

/// "h<k>_<face>" for a within-hemisphere pair whose first endpoint lies in
/// icosahedron face <face>, "cross" otherwise.
std::string bundle_label(const EndpointPair& pair);

/// Closed-form joint density of the simulation at an ordered pair.
double sim_density(const SimDensitySpec& spec, const HemiPoint& x, const HemiPoint& y);
DensityGrid sim_density_grid(const SimDensitySpec& spec, std::shared_ptr<const GridLayout> layout);

struct SyntheticWarpSpec {
  int basis_degree = 3;
  double amplitude = 0.25;  // mean vertex displacement, radians
  int n_steps = 10;
  std::uint64_t seed = 1;
};

struct SyntheticWarp {
  WarpSequence warp;
  double amplitude = 0.0;        // achieved mean displacement on the check grid
  int amplitude_halvings = 0;    // reductions forced by orientation violations
};

/// Random band-limited flow per hemisphere (rigid rotations excluded, as the
/// simulated density is rotation invariant), calibrated to the requested mean
/// displacement on the level-5 grid and split into equal exp-map steps.
SyntheticWarp random_diffeomorphism(const SyntheticWarpSpec& spec);

/// Mean displacement angle of the warp over the vertices of both hemispheres.
double mean_displacement(const WarpSequence& warp, const IcosphereMesh& mesh);

struct WarpErrorReport {
  double mean_angular_deg = 0.0;
  double mean_l2 = 0.0;
  std::size_t evaluated_vertex_count = 0;
  double top_fraction = 1.0;
  /// Per global vertex: log_{estimate(v)} truth(v), and whether v was evaluated.
  std::vector<Vec3> residuals;
  std::vector<bool> evaluated;
};

WarpErrorReport warp_error_metrics(const WarpSequence& truth, const WarpSequence& estimate,
                                   const IcosphereMesh& mesh, double top_fraction = 0.5);
WarpErrorReport warp_error_metrics(std::span<const Vec3> truth, std::span<const Vec3> estimate,
                                   const IcosphereMesh& mesh, double top_fraction = 0.5);

/// Fixed subject = truth applied to one sample, moving subject = an independent sample.
struct SyntheticInstance {
  EndpointSet fixed, moving;
  SyntheticWarp truth;
};

SyntheticInstance make_synthetic_instance(const SimDensitySpec& density, std::size_t n,
                                          const SyntheticWarpSpec& warp, std::uint64_t seed);

}  // namespace sphalign
