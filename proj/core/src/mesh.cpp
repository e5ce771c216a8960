#include "sphalign/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <unordered_map>

#include "sphalign/errors.hpp"

namespace sphalign {
namespace {

constexpr double kContainTol = 1e-12;

std::uint64_t edge_key(std::uint32_t a, std::uint32_t b) {
  if (a > b) std::swap(a, b);
  return (std::uint64_t{a} << 32) | b;
}

// Lowest-index candidate with a non-negative score; falls back to the best
// score when rounding puts p just outside every candidate.
template <class FaceAt>
std::uint32_t pick_face(const Vec3& p, std::uint32_t first, std::uint32_t count,
                        const std::vector<Vec3>& verts, FaceAt&& face_at) {
  std::uint32_t best = first;
  double best_score = -1e300;
  for (std::uint32_t f = first; f < first + count; ++f) {
    const Face& t = face_at(f);
    const double s = containment_score(p, verts[t[0]], verts[t[1]], verts[t[2]]);
    if (s >= -kContainTol) return f;
    if (s > best_score) {
      best_score = s;
      best = f;
    }
  }
  return best;
}

}  // namespace

double containment_score(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 nab = a.cross(b);
  const Vec3 nbc = b.cross(c);
  const Vec3 nca = c.cross(a);
  const double s0 = p.dot(nab) / nab.norm();
  const double s1 = p.dot(nbc) / nbc.norm();
  const double s2 = p.dot(nca) / nca.norm();
  // Reject the antipodal copy of the triangle.
  if (p.dot(a + b + c) <= 0.0) return -1.0;
  return std::min({s0, s1, s2});
}

double spherical_triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  // Van Oosterom & Strackee solid angle.
  const double num = a.dot(b.cross(c));
  const double den = 1.0 + a.dot(b) + b.dot(c) + c.dot(a);
  return 2.0 * std::atan2(num, den);
}

IcosphereMesh build_icosphere(int level) {
  if (level < 0) throw ConfigError("build_icosphere: negative level");
  if (level > kMaxIcosphereLevel) {
    throw LevelTooLarge("build_icosphere: level " + std::to_string(level) + " exceeds " +
                        std::to_string(kMaxIcosphereLevel));
  }
  IcosphereMesh mesh;
  mesh.level_ = level;

  const double phi = std::numbers::phi;
  const double base[12][3] = {{-1, phi, 0}, {1, phi, 0}, {-1, -phi, 0}, {1, -phi, 0},
                              {0, -1, phi}, {0, 1, phi}, {0, -1, -phi}, {0, 1, -phi},
                              {phi, 0, -1}, {phi, 0, 1}, {-phi, 0, -1}, {-phi, 0, 1}};
  mesh.vertices_.reserve(icosphere_vertex_count(level));
  for (const auto& v : base) mesh.vertices_.push_back(Vec3(v[0], v[1], v[2]).normalized());

  std::vector<Face> faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                             {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                             {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                             {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (auto& f : faces) {
    const auto& V = mesh.vertices_;
    if (V[f[0]].dot(V[f[1]].cross(V[f[2]])) < 0.0) std::swap(f[1], f[2]);
  }
  mesh.levels_.push_back(faces);

  for (int g = 1; g <= level; ++g) {
    const auto& parent = mesh.levels_.back();
    std::vector<Face> child;
    child.reserve(parent.size() * 4);
    std::unordered_map<std::uint64_t, std::uint32_t> midpoint;
    midpoint.reserve(parent.size() * 2);
    auto mid = [&](std::uint32_t a, std::uint32_t b) {
      const auto key = edge_key(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      const auto idx = static_cast<std::uint32_t>(mesh.vertices_.size());
      mesh.vertices_.push_back((mesh.vertices_[a] + mesh.vertices_[b]).normalized());
      midpoint.emplace(key, idx);
      return idx;
    };
    for (const Face& f : parent) {
      const std::uint32_t m01 = mid(f[0], f[1]);
      const std::uint32_t m12 = mid(f[1], f[2]);
      const std::uint32_t m20 = mid(f[2], f[0]);
      child.push_back({f[0], m01, m20});
      child.push_back({f[1], m12, m01});
      child.push_back({f[2], m20, m12});
      child.push_back({m01, m12, m20});
    }
    mesh.levels_.push_back(std::move(child));
  }
  mesh.build_adjacency();
  return mesh;
}

void IcosphereMesh::build_adjacency() {
  const std::size_t nv = vertices_.size();
  const auto& F = levels_.back();
  std::vector<std::vector<std::uint32_t>> vf(nv), nb(nv);
  for (std::uint32_t f = 0; f < F.size(); ++f) {
    for (int k = 0; k < 3; ++k) {
      vf[F[f][k]].push_back(f);
      nb[F[f][k]].push_back(F[f][(k + 1) % 3]);
      nb[F[f][k]].push_back(F[f][(k + 2) % 3]);
    }
  }
  ring_ptr_.assign(nv + 1, 0);
  vface_ptr_.assign(nv + 1, 0);
  for (std::size_t v = 0; v < nv; ++v) {
    auto& n = nb[v];
    std::sort(n.begin(), n.end());
    n.erase(std::unique(n.begin(), n.end()), n.end());
    ring_ptr_[v + 1] = ring_ptr_[v] + static_cast<std::uint32_t>(n.size());
    vface_ptr_[v + 1] = vface_ptr_[v] + static_cast<std::uint32_t>(vf[v].size());
  }
  ring_.reserve(ring_ptr_.back());
  vface_.reserve(vface_ptr_.back());
  for (std::size_t v = 0; v < nv; ++v) {
    ring_.insert(ring_.end(), nb[v].begin(), nb[v].end());
    vface_.insert(vface_.end(), vf[v].begin(), vf[v].end());
  }
}

std::uint32_t IcosphereMesh::locate_face(const Vec3& p) const {
  std::uint32_t f = pick_face(p, 0, 20, vertices_, [&](std::uint32_t i) -> const Face& {
    return levels_[0][i];
  });
  for (std::size_t g = 1; g < levels_.size(); ++g) {
    const auto& L = levels_[g];
    f = pick_face(p, 4 * f, 4, vertices_, [&](std::uint32_t i) -> const Face& { return L[i]; });
  }
  return f;
}

FaceHit IcosphereMesh::locate(const Vec3& p) const {
  FaceHit hit;
  hit.face = locate_face(p);
  const Face& t = face(hit.face);
  const Vec3& a = vertices_[t[0]];
  const Vec3& b = vertices_[t[1]];
  const Vec3& c = vertices_[t[2]];
  // Gnomonic barycentrics: p is proportional to alpha a + beta b + gamma c.
  double wa = p.dot(b.cross(c));
  double wb = p.dot(c.cross(a));
  double wc = p.dot(a.cross(b));
  wa = std::max(wa, 0.0);
  wb = std::max(wb, 0.0);
  wc = std::max(wc, 0.0);
  const double s = wa + wb + wc;
  hit.bary = {wa / s, wb / s, wc / s};
  return hit;
}

std::uint32_t IcosphereMesh::locate_face_brute_force(const Vec3& p) const {
  const auto& L = levels_.back();
  return pick_face(p, 0, static_cast<std::uint32_t>(L.size()), vertices_,
                   [&](std::uint32_t i) -> const Face& { return L[i]; });
}

Vec3 IcosphereMesh::face_centroid(std::size_t f) const {
  const Face& t = face(f);
  return (vertices_[t[0]] + vertices_[t[1]] + vertices_[t[2]]).normalized();
}

std::vector<double> vertex_weights(const IcosphereMesh& mesh) {
  std::vector<double> w(mesh.vertex_count(), 0.0);
  const auto V = mesh.vertices();
  for (const Face& f : mesh.faces()) {
    const double a = spherical_triangle_area(V[f[0]], V[f[1]], V[f[2]]) / 3.0;
    w[f[0]] += a;
    w[f[1]] += a;
    w[f[2]] += a;
  }
  return w;
}

}  // namespace sphalign
