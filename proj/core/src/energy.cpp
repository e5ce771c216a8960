#include "sphalign/energy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "grid_ops.hpp"
#include "sphalign/errors.hpp"

namespace sphalign {

double warp_energy(const QGrid& q1, const QGrid& q2) {
  if (q1.layout_ptr() != q2.layout_ptr() &&
      q1.layout().mesh().level() != q2.layout().mesh().level())
    throw MeshMismatch("energy of grids on different meshes");
  const auto& layout = q1.layout();
  const auto& a = q1.slots();
  const auto& b = q2.slots();
  double total = 0.0;
  for (std::size_t r = 0; r < a.dim(); ++r) {
    const double* ra = a.row(r);
    const double* rb = b.row(r);
    double acc = 0.0;
    for (std::size_t c = 0; c < r; ++c) {
      const double d = ra[c] - rb[c];
      acc += layout.weight(c) * d * d;
    }
    const double d = ra[r] - rb[r];
    total += layout.weight(r) * (2.0 * acc + layout.weight(r) * d * d);
  }
  return total;
}

WarpGrid identity_warp(std::shared_ptr<const GridLayout> layout) {
  WarpGrid w{std::move(layout), {}};
  const auto verts = w.mesh().vertices();
  w.targets.reserve(2 * verts.size());
  for (int h = 0; h < 2; ++h) w.targets.insert(w.targets.end(), verts.begin(), verts.end());
  return w;
}

WarpGrid rotation_warp(std::shared_ptr<const GridLayout> layout, const Mat3& rotation) {
  WarpGrid w = identity_warp(std::move(layout));
  for (auto& t : w.targets) t = (rotation * t).normalized();
  return w;
}

std::size_t inverted_face_count(const IcosphereMesh& mesh, std::span<const Vec3> targets) {
  const std::size_t nv = mesh.vertex_count();
  std::size_t bad = 0;
  for (std::size_t h = 0; h * nv < targets.size(); ++h) {
    const Vec3* t = targets.data() + h * nv;
    for (const Face& f : mesh.faces()) {
      if (t[f[0]].dot(t[f[1]].cross(t[f[2]])) <= 0.0) ++bad;
    }
  }
  return bad;
}

std::size_t inverted_face_count(const WarpGrid& warp) {
  return inverted_face_count(warp.mesh(), warp.targets);
}

double JacobianField::min() const {
  return det.empty() ? std::numeric_limits<double>::quiet_NaN()
                     : *std::min_element(det.begin(), det.end());
}

JacobianField jacobian_determinant(const WarpGrid& warp) {
  const IcosphereMesh& mesh = warp.mesh();
  const std::size_t nv = mesh.vertex_count();
  JacobianField out;
  out.det.resize(2 * nv);
  for (std::size_t h = 0; h < 2; ++h) {
    const Vec3* t = warp.targets.data() + h * nv;
    for (std::size_t v = 0; v < nv; ++v) {
      const Vec3& p = mesh.vertex(v);
      const auto [e1, e2] = tangent_frame(p);
      const auto [f1, f2] = tangent_frame(t[v]);
      Eigen::Matrix2d xtx = Eigen::Matrix2d::Zero();
      Eigen::Matrix2d xty = Eigen::Matrix2d::Zero();
      for (std::uint32_t n : mesh.neighbors(v)) {
        const Vec3 dx = log_map(p, mesh.vertex(n));
        const Vec3 dy = log_map(t[v], t[n]);
        const Eigen::Vector2d a(dx.dot(e1), dx.dot(e2));
        const Eigen::Vector2d b(dy.dot(f1), dy.dot(f2));
        xtx += a * a.transpose();
        xty += a * b.transpose();
      }
      const double d = xtx.determinant();
      if (!(d > 1e-12 * xtx.squaredNorm()))
        throw SingularNeighborhood("rank-deficient 1-ring at vertex " + std::to_string(v));
      out.det[h * nv + v] = xty.determinant() / d;
    }
  }
  return out;
}

namespace detail {

std::vector<GridSample> pullback_samples(const WarpGrid& warp) {
  const GridLayout& layout = *warp.layout;
  const IcosphereMesh& mesh = layout.mesh();
  const std::size_t nv = mesh.vertex_count();
  const JacobianField jac = jacobian_determinant(warp);
  std::vector<GridSample> samples(layout.size());
  for (std::size_t s = 0; s < layout.size(); ++s) {
    const std::size_t g = layout.global_of(s);
    const std::size_t h = g / nv;
    const FaceHit hit = mesh.locate(warp.targets[g]);
    const Face& f = mesh.face(hit.face);
    const double scale = std::sqrt(std::max(jac.det[g], 0.0));
    for (int i = 0; i < 3; ++i) {
      samples[s].slot[i] = layout.slot_of(h * nv + f[i]);
      samples[s].weight[i] = hit.bary[i] * scale;
    }
  }
  return samples;
}

}  // namespace detail

QGrid apply_group_action(const QGrid& q, const WarpGrid& warp) {
  if (warp.layout->mesh().level() != q.layout().mesh().level() ||
      warp.targets.size() != q.layout().size())
    throw MeshMismatch("warp and grid are on different meshes");
  QGrid out(q.layout_ptr());
  detail::resample_packed(q.slots(), out.slots(), detail::pullback_samples(warp));
  return out;
}

namespace {

void finish_norms(GradientCoeffs& g) {
  g.l2_norms = {0.0, 0.0};
  for (double c : g.coeffs1) g.l2_norms[0] += c * c;
  for (double c : g.coeffs2) g.l2_norms[1] += c * c;
  g.l2_norms[0] = std::sqrt(g.l2_norms[0]);
  g.l2_norms[1] = std::sqrt(g.l2_norms[1]);
}

}  // namespace

namespace detail {

GradientCoeffs coefficients_from_sums(const GridLayout& layout, const GridSums& sums,
                                      const TangentBasis& basis) {
  const std::size_t m = basis.size();
  GradientCoeffs out;
  out.coeffs1.assign(m, 0.0);
  out.coeffs2.assign(m, 0.0);
  std::vector<Vec3> fields(m);
  std::vector<double> div(m);
  for (std::size_t x = 0; x < layout.size(); ++x) {
    const Vec3& p = layout.point(x);
    basis.eval(p, fields);
    basis.divergence(p, div);
    auto& c = layout.hemi(x) == Hemisphere::Left ? out.coeffs1 : out.coeffs2;
    const double w = -4.0 * layout.weight(x);
    for (std::size_t i = 0; i < m; ++i) c[i] += w * (sums.g[x].dot(fields[i]) + sums.s[x] * div[i]);
  }
  finish_norms(out);
  return out;
}

RingStencil build_ring_stencil(const GridLayout& layout) {
  const IcosphereMesh& mesh = layout.mesh();
  const std::size_t nv = mesh.vertex_count();
  RingStencil st;
  st.ptr.push_back(0);
  for (std::size_t x = 0; x < layout.size(); ++x) {
    const std::size_t g = layout.global_of(x);
    const std::size_t base = g - g % nv;
    const std::size_t v = g % nv;
    const Vec3& p = mesh.vertex(v);
    const auto [e1, e2] = tangent_frame(p);
    const auto ring = mesh.neighbors(v);
    std::vector<Eigen::Vector2d> disp;
    Eigen::Matrix2d m = Eigen::Matrix2d::Zero();
    for (std::uint32_t nb : ring) {
      const Vec3 d = log_map(p, mesh.vertex(nb));
      disp.emplace_back(d.dot(e1), d.dot(e2));
      m += disp.back() * disp.back().transpose();
    }
    if (!(m.determinant() > 1e-12 * m.squaredNorm()))
      throw SingularNeighborhood("rank-deficient 1-ring at vertex " + std::to_string(v));
    const Eigen::Matrix2d inv = m.inverse();
    for (std::size_t k = 0; k < ring.size(); ++k) {
      const Eigen::Vector2d c = inv * disp[k];
      st.nbr.push_back(layout.slot_of(base + ring[k]));
      st.coef.push_back(c.x() * e1 + c.y() * e2);
    }
    st.ptr.push_back(static_cast<std::uint32_t>(st.nbr.size()));
  }
  return st;
}

}  // namespace detail

GradientCoeffs energy_gradient(const QGrid& q1, const QGrid& q2, const QGradientGrid& dq2,
                               const TangentBasis& basis) {
  const GridLayout& layout = q2.layout();
  const std::size_t n = layout.size();
  detail::GridSums sums;
  sums.g.assign(n, Vec3::Zero());
  sums.s.assign(n, 0.0);
  for (std::size_t x = 0; x < n; ++x) {
    Vec3 g = Vec3::Zero();
    double s = 0.0;
    for (std::size_t y = 0; y < n; ++y) {
      const double qv = q2.slots()(x, y);
      const double wr = layout.weight(y) * (q1.slots()(x, y) - qv);
      g += wr * dq2.slot_gradient(x, y);
      s += 0.5 * wr * qv;
    }
    sums.g[x] = g;
    sums.s[x] = s;
  }
  return detail::coefficients_from_sums(layout, sums, basis);
}

GradientCoeffs grid_energy_gradient(const QGrid& q1, const QGrid& q2, const TangentBasis& basis,
                                    double* energy) {
  if (q1.layout().mesh().level() != q2.layout().mesh().level())
    throw MeshMismatch("energy of grids on different meshes");
  const auto st = detail::build_ring_stencil(q2.layout());
  const auto sums = detail::ring_grid_sums(q1.slots(), q2.slots(), q2.layout(), st);
  if (energy) *energy = sums.energy;
  return detail::coefficients_from_sums(q2.layout(), sums, basis);
}

GradientCoeffs project_sensitivities(const EndpointSet& pts, std::span<const Vec3> u,
                                     std::span<const Vec3> v, const TangentBasis& basis) {
  const std::size_t m = basis.size();
  GradientCoeffs out;
  out.coeffs1.assign(m, 0.0);
  out.coeffs2.assign(m, 0.0);
  std::vector<Vec3> fields(m);
  const auto add = [&](const HemiPoint& p, const Vec3& d) {
    basis.eval(p.point.coords(), fields);
    auto& c = p.hemi == Hemisphere::Left ? out.coeffs1 : out.coeffs2;
    for (std::size_t i = 0; i < m; ++i) c[i] += d.dot(fields[i]);
  };
  for (std::size_t j = 0; j < pts.size(); ++j) {
    add(pts[j].first, u[j]);
    add(pts[j].second, v[j]);
  }
  const double scale = pts.empty() ? 0.0 : 1.0 / static_cast<double>(pts.size());
  for (double& c : out.coeffs1) c *= scale;
  for (double& c : out.coeffs2) c *= scale;
  finish_norms(out);
  return out;
}

namespace {

// Overwrites f2 with R = w_a w_b (sqrt f2 - q1) / sqrt f2 and returns the energy.
double residual_weights(const QGrid& q1, PackedSymmetric<double>& f2, double max_f) {
  const GridLayout& layout = q1.layout();
  const double floor = 1e-12 * max_f;
  double energy = 0.0;
  for (std::size_t r = 0; r < f2.dim(); ++r) {
    double* row = f2.row(r);
    const double* a = q1.slots().row(r);
    const double wr = layout.weight(r);
    for (std::size_t c = 0; c <= r; ++c) {
      const double f = std::max(row[c], 0.0);
      const double q = std::sqrt(f);
      const double d = a[c] - q;
      const double ww = wr * layout.weight(c);
      energy += (c == r ? 1.0 : 2.0) * ww * d * d;
      row[c] = f < floor || f <= 0.0 ? 0.0 : ww * (q - a[c]) / q;
    }
  }
  return energy;
}

}  // namespace

EndpointGradient endpoint_energy_gradient_inplace(const QGrid& q1, DensityGrid& f2,
                                                  const EndpointSet& moving,
                                                  const KdeEngine& engine,
                                                  const TangentBasis& basis) {
  if (moving.empty()) throw EmptyEndpointSet("no moving endpoints");
  if (f2.layout().mesh().level() != q1.layout().mesh().level())
    throw MeshMismatch("energy of grids on different meshes");
  EndpointGradient out;
  out.energy = residual_weights(q1, f2.slots(), f2.max_value());
  std::vector<Vec3> u, v;
  engine.endpoint_sensitivities(moving, f2.slots(), u, v);
  out.coeffs = project_sensitivities(moving, u, v, basis);
  return out;
}

EndpointGradient endpoint_energy_gradient(const QGrid& q1, const DensityGrid& f2,
                                          const EndpointSet& moving, const KdeEngine& engine,
                                          const TangentBasis& basis) {
  DensityGrid work = f2;
  return endpoint_energy_gradient_inplace(q1, work, moving, engine, basis);
}

}  // namespace sphalign
