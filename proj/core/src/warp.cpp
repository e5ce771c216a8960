#include "sphalign/warp.hpp"

#include "sphalign/errors.hpp"

namespace sphalign {

Vec3 WarpIncrement::field(Hemisphere h, const Vec3& p) const {
  return step * shared_basis(degree).synthesize(coeffs(h), p);
}

Vec3 WarpIncrement::apply(Hemisphere h, const Vec3& p) const {
  return exp_map(p, field(h, p));
}

Vec3 WarpIncrement::invert(Hemisphere h, const Vec3& p) const {
  // z <- exp_z(log_{phi(z)} p): the residual at the image is carried back to z,
  // which contracts while the increment is close to the identity.
  Vec3 z = exp_map(p, -field(h, p));
  for (int it = 0; it < 100; ++it) {
    const Vec3 img = apply(h, z);
    const Vec3 r = log_map(img, p);
    if (r.norm() < 1e-15) break;
    z = exp_map(z, project_tangent(z, r));
  }
  return z;
}

void WarpSequence::append(const WarpSequence& other) {
  increments.insert(increments.end(), other.increments.begin(), other.increments.end());
}

Vec3 apply_warp(const WarpSequence& warp, Hemisphere h, const Vec3& p) {
  Vec3 x = p;
  for (const auto& inc : warp.increments) x = inc.apply(h, x);
  return x;
}

HemiPoint apply_warp(const WarpSequence& warp, const HemiPoint& p) {
  return {p.hemi, SpherePoint(apply_warp(warp, p.hemi, p.point.coords()))};
}

std::vector<HemiPoint> apply_warp(const WarpSequence& warp, std::span<const HemiPoint> pts) {
  std::vector<HemiPoint> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back(apply_warp(warp, p));
  return out;
}

EndpointSet apply_warp(const WarpSequence& warp, const EndpointSet& pts) {
  EndpointSet out = pts;
  for (const auto& inc : warp.increments) apply_increment(inc, out);
  return out;
}

void apply_increment(const WarpIncrement& inc, EndpointSet& pts) {
  for (auto& pair : pts.pairs) {
    for (HemiPoint* e : {&pair.first, &pair.second})
      e->point = SpherePoint(inc.apply(e->hemi, e->point.coords()));
  }
}

void apply_increment(const WarpIncrement& inc, const IcosphereMesh& mesh,
                     std::vector<Vec3>& targets) {
  const std::size_t nv = mesh.vertex_count();
  if (targets.size() != 2 * nv) throw MeshMismatch("warp targets do not match the mesh");
  for (std::size_t g = 0; g < targets.size(); ++g) {
    const Hemisphere h = g < nv ? Hemisphere::Left : Hemisphere::Right;
    targets[g] = inc.apply(h, targets[g]);
  }
}

WarpGrid warp_grid(const WarpSequence& warp, std::shared_ptr<const GridLayout> layout) {
  WarpGrid w = identity_warp(std::move(layout));
  for (const auto& inc : warp.increments) apply_increment(inc, w.mesh(), w.targets);
  return w;
}

WarpGrid inverse_increment_grid(const WarpIncrement& inc,
                                std::shared_ptr<const GridLayout> layout) {
  WarpGrid w = identity_warp(std::move(layout));
  const std::size_t nv = w.mesh().vertex_count();
  for (std::size_t g = 0; g < w.targets.size(); ++g) {
    const Hemisphere h = g < nv ? Hemisphere::Left : Hemisphere::Right;
    w.targets[g] = inc.invert(h, w.targets[g]);
  }
  return w;
}

}  // namespace sphalign
