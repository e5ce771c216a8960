#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "sphalign/density.hpp"
#include "sphalign/energy.hpp"
#include "sphalign/warp.hpp"

namespace sphalign {

struct MultiresStage {
  int grid_level = 4;
  double sigma = 0.005;
};

struct AlignConfig {
  double sigma = 0.005;
  double step = 0.1;
  double tol = 1e-6;
  int max_iters = 500;
  int grid_level = 4;
  int basis_degree = 8;
  int kde_every = 1;
  std::vector<MultiresStage> multires_schedule;
  std::uint64_t seed = 0;
  bool deterministic = true;

  /// Throws ConfigError.
  void validate() const;
  KernelSpec kernel() const { return make_kernel_spec(sigma); }
};

struct PhaseTiming {
  double gradient = 0.0;  // seconds
  double update = 0.0;
  double kde = 0.0;

  double total() const { return gradient + update + kde; }
  PhaseTiming& operator+=(const PhaseTiming& o) {
    gradient += o.gradient;
    update += o.update;
    kde += o.kde;
    return *this;
  }
};

enum class StopReason { Converged, MaxIterations, StepExhausted, Interrupted };

const char* to_string(StopReason r);

struct AlignResult {
  EndpointSet aligned;
  WarpSequence warp;
  std::vector<double> energy_trace;
  std::vector<std::array<double, 2>> gradient_norm_trace;
  std::vector<double> step_trace;  // step actually taken per increment
  int iterations = 0;              // increments applied
  bool converged = false;          // false: best state returned
  StopReason stop_reason = StopReason::MaxIterations;
  int step_halvings = 0;
  std::size_t max_inverted_faces = 0;  // over every accepted increment, one level finer (always 0)
  PhaseTiming timing;
};

/// Called after every gradient evaluation; returning false stops the run.
struct IterationInfo {
  int iteration;
  double energy;
  std::array<double, 2> gradient_norms;
  double step;
  const PhaseTiming& timing;
};
using AlignObserver = std::function<bool(const IterationInfo&)>;

/// Direct endpoint updates with the density re-estimated from the moving
/// endpoints (every kde_every iterations; grid warping in between).
AlignResult register_endpoints(const EndpointSet& fixed, const EndpointSet& moving,
                               const AlignConfig& cfg, const AlignObserver& observer = {});

/// Grid-warping baseline: q2 is estimated once and then only resampled under
/// the accumulated warp with Jacobian factors. Grids are held in single
/// precision.
AlignResult register_encore(const EndpointSet& fixed, const EndpointSet& moving,
                            const AlignConfig& cfg, const AlignObserver& observer = {});

/// register_endpoints per (grid_level, sigma) stage, carrying the aligned
/// endpoints forward and concatenating the warps. Throws ConfigError on an
/// empty or non-increasing schedule.
AlignResult run_multiresolution(const EndpointSet& fixed, const EndpointSet& moving,
                                const AlignConfig& cfg, const AlignObserver& observer = {});

}  // namespace sphalign
