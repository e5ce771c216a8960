#include "sphalign/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "sphalign/errors.hpp"

namespace sphalign {

namespace {

constexpr double kPi = std::numbers::pi;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Uniform doubles in (0, 1) from a (seed, counter) stream.
class CounterStream {
 public:
  CounterStream(std::uint64_t seed, std::uint64_t index)
      : key_(splitmix64(seed ^ splitmix64(index))) {}
  double next() {
    const std::uint64_t bits = splitmix64(key_ + 0x632be59bd9b4e019ULL * ++counter_);
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

Vec3 uniform_direction(CounterStream& rng) {
  const double z = 2.0 * rng.next() - 1.0;
  const double phi = 2.0 * kPi * rng.next();
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  return {r * std::cos(phi), r * std::sin(phi), z};
}

Vec3 vmf_direction(const Vec3& mean, double kappa, CounterStream& rng) {
  const double u = rng.next();
  const double w = std::clamp(1.0 + std::log(u + (1.0 - u) * std::exp(-2.0 * kappa)) / kappa,
                              -1.0, 1.0);
  const double phi = 2.0 * kPi * rng.next();
  const auto [e1, e2] = tangent_frame(mean);
  const double s = std::sqrt(std::max(0.0, 1.0 - w * w));
  return w * mean + s * (std::cos(phi) * e1 + std::sin(phi) * e2);
}

Hemisphere hemi_of(bool second) { return second ? Hemisphere::Right : Hemisphere::Left; }

}  // namespace

std::string bundle_label(const EndpointPair& pair) {
  if (pair.first.hemi != pair.second.hemi) return "cross";
  static const IcosphereMesh base = build_icosphere(0);
  return "h" + std::to_string(static_cast<int>(pair.first.hemi)) + "_" +
         std::to_string(base.locate_face(pair.first.point));
}

EndpointSet sample_ground_truth(const SimDensitySpec& spec, std::size_t n, std::uint64_t seed) {
  if (!(spec.alpha >= 0.0 && spec.alpha <= 1.0) || !(spec.kappa > 0.0))
    throw ConfigError("simulation needs alpha in [0, 1] and kappa > 0");
  EndpointSet out;
  out.pairs.resize(n);
  out.ids.resize(n);
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    CounterStream rng(seed, i);
    EndpointPair& pair = out.pairs[i];
    if (rng.next() < spec.alpha) {
      const Hemisphere h = hemi_of(rng.next() < 0.5);
      const Vec3 x = uniform_direction(rng);
      pair = {{h, SpherePoint(x)}, {h, SpherePoint(vmf_direction(x, spec.kappa, rng))}};
    } else {
      const bool flip = rng.next() < 0.5;
      const Vec3 x = uniform_direction(rng);
      const Vec3 y = uniform_direction(rng);
      pair = {{hemi_of(flip), SpherePoint(x)}, {hemi_of(!flip), SpherePoint(y)}};
    }
    out.ids[i] = static_cast<std::int64_t>(i);
    out.labels[i] = bundle_label(pair);
  }
  return out;
}

double sim_density(const SimDensitySpec& spec, const HemiPoint& x, const HemiPoint& y) {
  const double base = 2.0 * 16.0 * kPi * kPi;
  if (x.hemi != y.hemi) return (1.0 - spec.alpha) / base;
  // e^{k t} / (sinh k / k) written to stay finite for large kappa.
  const double t = x.point.dot(y.point);
  const double k = spec.kappa;
  const double ratio = 2.0 * k * std::exp(k * (t - 1.0)) / -std::expm1(-2.0 * k);
  return spec.alpha * ratio / base;
}

DensityGrid sim_density_grid(const SimDensitySpec& spec, std::shared_ptr<const GridLayout> layout) {
  DensityGrid grid(layout);
  auto& packed = grid.slots();
  for (std::size_t r = 0; r < packed.dim(); ++r) {
    const HemiPoint x{layout->hemi(r), SpherePoint(layout->point(r))};
    double* row = packed.row(r);
    for (std::size_t c = 0; c <= r; ++c)
      row[c] = sim_density(spec, x, {layout->hemi(c), SpherePoint(layout->point(c))});
  }
  return grid;
}

double mean_displacement(const WarpSequence& warp, const IcosphereMesh& mesh) {
  double total = 0.0;
  for (Hemisphere h : {Hemisphere::Left, Hemisphere::Right}) {
    for (const Vec3& v : mesh.vertices()) total += geodesic_angle(v, apply_warp(warp, h, v));
  }
  return total / (2.0 * static_cast<double>(mesh.vertex_count()));
}

namespace {

WarpSequence scaled_flow(const SyntheticWarpSpec& spec, const std::vector<double>& c1,
                         const std::vector<double>& c2, double scale) {
  WarpSequence w;
  if (scale == 0.0) return w;
  WarpIncrement inc;
  inc.step = scale / spec.n_steps;
  inc.degree = spec.basis_degree;
  inc.coeffs1 = c1;
  inc.coeffs2 = c2;
  w.increments.assign(static_cast<std::size_t>(spec.n_steps), inc);
  return w;
}

}  // namespace

SyntheticWarp random_diffeomorphism(const SyntheticWarpSpec& spec) {
  if (spec.n_steps < 1) throw ConfigError("synthetic warp needs at least one step");
  if (!(spec.amplitude >= 0.0)) throw ConfigError("synthetic warp amplitude must be >= 0");
  SyntheticWarp out;
  if (spec.amplitude == 0.0) return out;
  const TangentBasis& basis = shared_basis(spec.basis_degree);
  std::mt19937_64 gen(spec.seed);
  std::normal_distribution<double> normal;
  std::vector<double> c1(basis.size()), c2(basis.size());
  for (auto* c : {&c1, &c2}) {
    for (std::size_t i = 0; i < basis.size(); ++i) {
      const FieldTag& t = basis.tag(i);
      const double draw = normal(gen);
      (*c)[i] = (t.kind == FieldKind::Rotational && t.l == 1) ? 0.0 : draw / t.l;
    }
  }
  const IcosphereMesh check = build_icosphere(5);
  const IcosphereMesh coarse = build_icosphere(4);
  double target = spec.amplitude;
  for (int halving = 0;; ++halving) {
    // Displacement grows monotonically and almost linearly with the scale;
    // secant steps on the level-4 mean, then one correction on the check grid.
    double scale = target / std::max(mean_displacement(scaled_flow(spec, c1, c2, 1.0), coarse),
                                     1e-300);
    for (int it = 0; it < 20; ++it) {
      const double got = mean_displacement(scaled_flow(spec, c1, c2, scale), coarse);
      if (std::abs(got - target) < 1e-4 * target) break;
      scale *= target / got;
    }
    WarpSequence w = scaled_flow(spec, c1, c2, scale);
    const double fine = mean_displacement(w, check);
    w = scaled_flow(spec, c1, c2, scale * target / fine);
    std::vector<Vec3> targets;
    for (int h = 0; h < 2; ++h)
      targets.insert(targets.end(), check.vertices().begin(), check.vertices().end());
    for (const auto& inc : w.increments) apply_increment(inc, check, targets);
    if (inverted_face_count(check, targets) == 0 || halving >= 30) {
      out.warp = std::move(w);
      out.amplitude = mean_displacement(out.warp, check);
      out.amplitude_halvings = halving;
      return out;
    }
    target *= 0.5;
  }
}

WarpErrorReport warp_error_metrics(std::span<const Vec3> truth, std::span<const Vec3> estimate,
                                   const IcosphereMesh& mesh, double top_fraction) {
  if (!(top_fraction > 0.0 && top_fraction <= 1.0))
    throw ConfigError("top_fraction must be in (0, 1]");
  const std::size_t nv = mesh.vertex_count();
  if (truth.size() != 2 * nv || estimate.size() != 2 * nv)
    throw MeshMismatch("warp images do not match the mesh");
  std::vector<double> mag(2 * nv);
  for (std::size_t g = 0; g < 2 * nv; ++g) mag[g] = geodesic_angle(mesh.vertex(g % nv), truth[g]);
  std::vector<double> sorted = mag;
  const auto k = static_cast<std::size_t>(std::floor((1.0 - top_fraction) *
                                                     static_cast<double>(sorted.size() - 1)));
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k), sorted.end());
  const double threshold = sorted[k];
  WarpErrorReport r;
  r.top_fraction = top_fraction;
  r.residuals.resize(2 * nv, Vec3::Zero());
  r.evaluated.resize(2 * nv, false);
  double ang = 0.0, l2 = 0.0;
  for (std::size_t g = 0; g < 2 * nv; ++g) {
    r.residuals[g] = log_map(estimate[g], truth[g]);
    if (mag[g] < threshold) continue;
    r.evaluated[g] = true;
    ++r.evaluated_vertex_count;
    ang += geodesic_angle(estimate[g], truth[g]);
    l2 += (estimate[g] - truth[g]).norm();
  }
  const double n = static_cast<double>(r.evaluated_vertex_count);
  r.mean_angular_deg = ang / n * 180.0 / kPi;
  r.mean_l2 = l2 / n;
  return r;
}

WarpErrorReport warp_error_metrics(const WarpSequence& truth, const WarpSequence& estimate,
                                   const IcosphereMesh& mesh, double top_fraction) {
  std::vector<Vec3> t, e;
  t.reserve(2 * mesh.vertex_count());
  e.reserve(2 * mesh.vertex_count());
  for (Hemisphere h : {Hemisphere::Left, Hemisphere::Right}) {
    for (const Vec3& v : mesh.vertices()) {
      t.push_back(apply_warp(truth, h, v));
      e.push_back(apply_warp(estimate, h, v));
    }
  }
  return warp_error_metrics(t, e, mesh, top_fraction);
}

SyntheticInstance make_synthetic_instance(const SimDensitySpec& density, std::size_t n,
                                          const SyntheticWarpSpec& warp, std::uint64_t seed) {
  SyntheticInstance inst;
  inst.truth = random_diffeomorphism(warp);
  inst.fixed = apply_warp(inst.truth.warp, sample_ground_truth(density, n, seed));
  inst.moving = sample_ground_truth(density, n, splitmix64(seed + 1));
  return inst;
}

}  // namespace sphalign
