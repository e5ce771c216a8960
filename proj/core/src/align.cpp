#include "sphalign/align.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <optional>

#include "grid_ops.hpp"
#include "sphalign/errors.hpp"

namespace sphalign {

void AlignConfig::validate() const {
  if (!(sigma > 0.0)) throw ConfigError("sigma must be positive");
  if (!(step > 0.0)) throw ConfigError("delta must be positive");
  if (!(tol > 0.0)) throw ConfigError("epsilon must be positive");
  if (max_iters < 0) throw ConfigError("max_iters must be non-negative");
  if (grid_level < 0 || grid_level > kMaxIcosphereLevel)
    throw ConfigError("grid_level out of range");
  if (basis_degree < 1 || basis_degree > kMaxBasisDegree)
    throw ConfigError("basis_degree out of range");
  if (kde_every < 1) throw ConfigError("kde_every must be at least 1");
}

const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::Converged: return "converged";
    case StopReason::MaxIterations: return "max_iterations";
    case StopReason::StepExhausted: return "step_exhausted";
    case StopReason::Interrupted: return "interrupted";
  }
  return "unknown";
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

constexpr int kMaxHalvings = 20;

// Shared bookkeeping of both optimizers: traces, step-halving against the
// warped grid, and the best state seen. Orientation is checked one level finer
// than the working grid, since a fold can open between working vertices.
class Descent {
 public:
  Descent(const AlignConfig& cfg, const EndpointSet& moving, const AlignObserver& observer)
      : cfg_(cfg), observer_(observer), check_(build_icosphere(cfg.grid_level + 1)) {
    targets_.reserve(2 * check_.vertex_count());
    for (int h = 0; h < 2; ++h)
      targets_.insert(targets_.end(), check_.vertices().begin(), check_.vertices().end());
    result_.aligned = moving;
  }

  AlignResult& result() { return result_; }
  const EndpointSet& current() const { return result_.aligned; }

  /// Records one gradient evaluation; true when the loop should stop.
  bool record(double energy, const GradientCoeffs& g) {
    result_.energy_trace.push_back(energy);
    result_.gradient_norm_trace.push_back(g.l2_norms);
    if (!best_energy_ || energy < *best_energy_) {
      best_energy_ = energy;
      best_points_ = result_.aligned;
      best_size_ = result_.warp.size();
    }
    const int k = static_cast<int>(result_.warp.size());
    const bool keep_going =
        !observer_ || observer_({k, energy, g.l2_norms, last_step_, result_.timing});
    if (g.l2_norms[0] < cfg_.tol && g.l2_norms[1] < cfg_.tol) {
      result_.converged = true;
      result_.stop_reason = StopReason::Converged;
      return true;
    }
    if (!keep_going) {
      result_.stop_reason = StopReason::Interrupted;
      return true;
    }
    if (k >= cfg_.max_iters) {
      result_.stop_reason = StopReason::MaxIterations;
      return true;
    }
    return false;
  }

  /// Orientation-safe increment along coefficients c (already signed for
  /// descent), applied to the grid targets; the caller moves its own state.
  /// Empty when no step survives the halvings; the run then stops.
  std::optional<WarpIncrement> step(const GradientCoeffs& c) {
    WarpIncrement inc;
    inc.degree = cfg_.basis_degree;
    inc.coeffs1 = c.coeffs1;
    inc.coeffs2 = c.coeffs2;
    inc.step = cfg_.step;
    std::vector<Vec3> trial;
    std::size_t bad = 0;
    for (int h = 0;; ++h) {
      trial = targets_;
      apply_increment(inc, check_, trial);
      bad = inverted_face_count(check_, trial);
      if (bad == 0) break;
      if (h == kMaxHalvings) {
        result_.stop_reason = StopReason::StepExhausted;
        return std::nullopt;
      }
      inc.step *= 0.5;
      ++result_.step_halvings;
    }
    targets_ = std::move(trial);
    last_step_ = inc.step;
    result_.step_trace.push_back(inc.step);
    result_.warp.increments.push_back(inc);
    ++result_.iterations;
    return inc;
  }

  AlignResult finish() {
    if (!result_.converged && best_energy_ && best_size_ < result_.warp.size()) {
      result_.aligned = std::move(best_points_);
      result_.warp.increments.resize(best_size_);
      result_.iterations = static_cast<int>(best_size_);
    }
    return std::move(result_);
  }

 private:
  const AlignConfig& cfg_;
  const AlignObserver& observer_;
  IcosphereMesh check_;
  std::vector<Vec3> targets_;
  AlignResult result_;
  std::optional<double> best_energy_;
  EndpointSet best_points_;
  std::size_t best_size_ = 0;
  double last_step_ = 0.0;
};

GradientCoeffs negated(GradientCoeffs g) {
  for (double& c : g.coeffs1) c = -c;
  for (double& c : g.coeffs2) c = -c;
  return g;
}

void check_inputs(const EndpointSet& fixed, const EndpointSet& moving, const AlignConfig& cfg) {
  cfg.validate();
  if (fixed.empty() || moving.empty()) throw EmptyEndpointSet("registration needs endpoints");
}

// q2 <- q2 * inc^{-1}: the grid proxy of the endpoints moved by inc.
template <class T>
void warp_grid_proxy(const WarpIncrement& inc, const std::shared_ptr<const GridLayout>& layout,
                     PackedSymmetric<T>& q2, PackedSymmetric<T>& scratch) {
  const auto samples = detail::pullback_samples(inverse_increment_grid(inc, layout));
  detail::resample_packed(q2, scratch, samples);
  std::swap(q2, scratch);
}

}  // namespace

AlignResult register_endpoints(const EndpointSet& fixed, const EndpointSet& moving,
                               const AlignConfig& cfg, const AlignObserver& observer) {
  check_inputs(fixed, moving, cfg);
  const auto layout = make_layout(cfg.grid_level);
  const KdeEngine engine(layout, cfg.kernel());
  const TangentBasis& basis = shared_basis(cfg.basis_degree);
  Descent run(cfg, moving, observer);
  PhaseTiming& timing = run.result().timing;

  auto t0 = Clock::now();
  QGrid q1;
  DensityGrid f2;
  engine.estimate(fixed, f2);
  q1 = q_transform(f2);
  timing.kde += seconds_since(t0);

  // Between re-estimations the proxy q2 is warped on the grid.
  std::optional<detail::RingStencil> stencil;
  QGrid q2;
  PackedSymmetric<double> scratch;
  if (cfg.kde_every > 1) {
    stencil = detail::build_ring_stencil(*layout);
    scratch = PackedSymmetric<double>(layout->size());
  }
  for (int k = 0;; ++k) {
    GradientCoeffs descent;
    double energy = 0.0;
    if (k % cfg.kde_every == 0) {
      t0 = Clock::now();
      engine.estimate(run.current(), f2);
      if (cfg.kde_every > 1) q2 = q_transform(f2);
      timing.kde += seconds_since(t0);
      t0 = Clock::now();
      const auto g = endpoint_energy_gradient_inplace(q1, f2, run.current(), engine, basis);
      timing.gradient += seconds_since(t0);
      energy = g.energy;
      descent = negated(g.coeffs);
    } else {
      t0 = Clock::now();
      const auto sums = detail::ring_grid_sums(q1.slots(), q2.slots(), *layout, *stencil);
      descent = detail::coefficients_from_sums(*layout, sums, basis);
      energy = sums.energy;
      timing.gradient += seconds_since(t0);
    }
    if (run.record(energy, descent)) break;
    t0 = Clock::now();
    const auto inc = run.step(descent);
    if (!inc) break;
    apply_increment(*inc, run.result().aligned);
    if (cfg.kde_every > 1 && (k + 1) % cfg.kde_every != 0)
      warp_grid_proxy(*inc, layout, q2.slots(), scratch);
    timing.update += seconds_since(t0);
  }
  return run.finish();
}

AlignResult register_encore(const EndpointSet& fixed, const EndpointSet& moving,
                            const AlignConfig& cfg, const AlignObserver& observer) {
  check_inputs(fixed, moving, cfg);
  const auto layout = make_layout(cfg.grid_level);
  const TangentBasis& basis = shared_basis(cfg.basis_degree);
  const auto stencil = detail::build_ring_stencil(*layout);
  Descent run(cfg, moving, observer);
  PhaseTiming& timing = run.result().timing;

  auto t0 = Clock::now();
  PackedSymmetric<float> q1(layout->size()), q2(layout->size());
  {
    const KdeEngine engine(layout, cfg.kernel());
    DensityGrid f;
    for (auto [pts, dst] : {std::pair{&fixed, &q1}, std::pair{&moving, &q2}}) {
      engine.estimate(*pts, f);
      const auto src = f.slots().raw();
      auto out = dst->raw();
      for (std::size_t i = 0; i < src.size(); ++i)
        out[i] = static_cast<float>(std::sqrt(std::max(src[i], 0.0)));
    }
  }
  timing.kde += seconds_since(t0);

  PackedSymmetric<float> scratch(layout->size());
  for (;;) {
    t0 = Clock::now();
    const auto sums = detail::ring_grid_sums(q1, q2, *layout, stencil);
    const GradientCoeffs g = detail::coefficients_from_sums(*layout, sums, basis);
    timing.gradient += seconds_since(t0);
    if (run.record(sums.energy, g)) break;
    t0 = Clock::now();
    // Descending along -g on the grid moves points along +g.
    const auto inc = run.step(g);
    if (!inc) break;
    warp_grid_proxy(*inc, layout, q2, scratch);
    timing.update += seconds_since(t0);
  }
  AlignResult out = run.finish();
  out.aligned = apply_warp(out.warp, moving);
  return out;
}

AlignResult run_multiresolution(const EndpointSet& fixed, const EndpointSet& moving,
                                const AlignConfig& cfg, const AlignObserver& observer) {
  if (cfg.multires_schedule.empty()) throw ConfigError("empty multiresolution schedule");
  for (std::size_t i = 1; i < cfg.multires_schedule.size(); ++i) {
    if (cfg.multires_schedule[i].grid_level < cfg.multires_schedule[i - 1].grid_level)
      throw ConfigError("multiresolution stages must not decrease in grid level");
  }
  AlignResult total;
  total.aligned = moving;
  total.converged = true;
  for (const MultiresStage& stage : cfg.multires_schedule) {
    AlignConfig c = cfg;
    c.grid_level = stage.grid_level;
    c.sigma = stage.sigma;
    c.multires_schedule.clear();
    AlignResult r = register_endpoints(fixed, total.aligned, c, observer);
    total.aligned = std::move(r.aligned);
    total.warp.append(r.warp);
    total.energy_trace.insert(total.energy_trace.end(), r.energy_trace.begin(),
                              r.energy_trace.end());
    total.gradient_norm_trace.insert(total.gradient_norm_trace.end(),
                                     r.gradient_norm_trace.begin(), r.gradient_norm_trace.end());
    total.step_trace.insert(total.step_trace.end(), r.step_trace.begin(), r.step_trace.end());
    total.iterations += r.iterations;
    total.converged = r.converged;
    total.stop_reason = r.stop_reason;
    total.step_halvings += r.step_halvings;
    total.max_inverted_faces = std::max(total.max_inverted_faces, r.max_inverted_faces);
    total.timing += r.timing;
  }
  return total;
}

}  // namespace sphalign
