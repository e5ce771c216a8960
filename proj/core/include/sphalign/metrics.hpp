#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sphalign/density.hpp"
#include "sphalign/kernel.hpp"
#include "sphalign/mesh.hpp"

namespace sphalign {

/// Streamline counts per unordered pair of triangles a <= b, where triangle
/// (hemi - 1) * K + f is face f of the binning mesh on hemisphere hemi.
struct ConnectivityCounts {
  int level = 4;
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint64_t> counts;
  std::uint64_t n = 0;

  std::uint64_t at(std::uint32_t a, std::uint32_t b) const;
};

ConnectivityCounts bin_endpoints(const EndpointSet& pts, const IcosphereMesh& mesh);

/// Pairs whose label equals `label`. Throws EmptyAfterFilter when none match.
EndpointSet filter_by_label(const EndpointSet& pts, const std::string& label);
/// Pairs with both endpoints on hemisphere h. Throws EmptyAfterFilter.
EndpointSet filter_by_hemisphere(const EndpointSet& pts, Hemisphere h);

struct OverlapReport {
  double tau = 0.0;
  double overlap = 0.0;
  std::pair<std::size_t, std::size_t> suprathreshold_sizes{0, 0};
  bool empty = false;  // a suprathreshold set was empty; overlap reported as 0
};

/// Shared suprathreshold cells (C / n > tau) over the smaller suprathreshold
/// set. Throws MeshMismatch when the binning meshes differ.
OverlapReport overlap_coefficient(const ConnectivityCounts& c1, const ConnectivityCounts& c2,
                                  double tau);

struct MmdOptions {
  KernelSpec kernel{};
  std::optional<Hemisphere> hemisphere;  // keep only pairs inside this hemisphere
  std::size_t subsample = 0;             // pairs per set, 0 keeps all
  std::uint64_t seed = 0;
};

/// Square root of the unbiased squared MMD under the product heat kernel
/// K(x1, y1) K(x2, y2), clamped at zero.
double mmd(const EndpointSet& pts1, const EndpointSet& pts2, const MmdOptions& options = {});

struct MmdTest {
  double statistic = 0.0;   // unbiased squared MMD
  double null_q95 = 0.0;    // 95th percentile of the permutation null
  double p_value = 1.0;
  std::vector<double> null;
};

/// Permutation null of the squared statistic over pooled pairs.
MmdTest mmd_permutation_test(const EndpointSet& pts1, const EndpointSet& pts2,
                             const MmdOptions& options = {}, int permutations = 200);

}  // namespace sphalign
