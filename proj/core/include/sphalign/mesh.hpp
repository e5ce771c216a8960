#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "sphalign/sphere.hpp"

namespace sphalign {

constexpr int kMaxIcosphereLevel = 7;

using Face = std::array<std::uint32_t, 3>;

constexpr std::size_t icosphere_vertex_count(int level) {
  return 10 * (std::size_t{1} << (2 * level)) + 2;
}
constexpr std::size_t icosphere_face_count(int level) {
  return 20 * (std::size_t{1} << (2 * level));
}

/// Face containing a query point together with the gnomonic barycentric
/// coordinates of the point in that face (they sum to one).
struct FaceHit {
  std::uint32_t face = 0;
  std::array<double, 3> bary{};
};

/// Recursively subdivided icosahedron.
///
/// Vertex ordering is hierarchical: the first icosphere_vertex_count(g)
/// vertices are exactly the vertices of level g, so the parent map of every
/// level is the identity on that prefix. New midpoints are appended in the
/// order their edge is first met while walking parent faces in index order,
/// edges (v0,v1), (v1,v2), (v2,v0).
///
/// Face ordering is hierarchical too: the children of face f at level g are
/// faces 4f .. 4f+3 at level g+1. This makes point location a descent of G+1
/// levels, and the lowest-index tie rule consistent across levels.
class IcosphereMesh {
 public:
  int level() const noexcept { return level_; }
  std::size_t vertex_count() const noexcept { return vertices_.size(); }
  std::size_t face_count() const noexcept { return levels_.back().size(); }

  std::span<const Vec3> vertices() const noexcept { return vertices_; }
  const Vec3& vertex(std::size_t i) const { return vertices_[i]; }
  std::span<const Face> faces() const noexcept { return levels_.back(); }
  const Face& face(std::size_t f) const { return levels_.back()[f]; }

  /// Faces of an intermediate level 0..level().
  std::span<const Face> faces_at(int g) const { return levels_.at(static_cast<std::size_t>(g)); }

  /// Vertex index of `parent_vertex` (a level g-1 vertex) inside level g.
  std::uint32_t parent_map(std::uint32_t parent_vertex) const noexcept { return parent_vertex; }

  /// Neighbours sharing an edge with vertex v, ascending.
  std::span<const std::uint32_t> neighbors(std::size_t v) const {
    return {ring_.data() + ring_ptr_[v], ring_.data() + ring_ptr_[v + 1]};
  }
  /// Faces incident to vertex v.
  std::span<const std::uint32_t> incident_faces(std::size_t v) const {
    return {vface_.data() + vface_ptr_[v], vface_.data() + vface_ptr_[v + 1]};
  }
  std::size_t edge_count() const noexcept { return ring_.size() / 2; }

  /// Index of the spherical triangle containing p; lowest index wins on shared
  /// edges and vertices. O(level) via hierarchical descent.
  std::uint32_t locate_face(const Vec3& p) const;
  std::uint32_t locate_face(const SpherePoint& p) const { return locate_face(p.coords()); }

  /// locate_face plus barycentric coordinates.
  FaceHit locate(const Vec3& p) const;

  /// Exhaustive scan over all faces with the same containment rule (test oracle).
  std::uint32_t locate_face_brute_force(const Vec3& p) const;

  /// Normalized centroid of face f.
  Vec3 face_centroid(std::size_t f) const;

  friend IcosphereMesh build_icosphere(int level);

 private:
  void build_adjacency();

  int level_ = 0;
  std::vector<Vec3> vertices_;
  std::vector<std::vector<Face>> levels_;
  std::vector<std::uint32_t> ring_ptr_, ring_;
  std::vector<std::uint32_t> vface_ptr_, vface_;
};

/// Throws LevelTooLarge for level > kMaxIcosphereLevel.
IcosphereMesh build_icosphere(int level);

/// Signed area (steradians) of the spherical triangle a, b, c; positive when
/// counter-clockwise seen from outside.
double spherical_triangle_area(const Vec3& a, const Vec3& b, const Vec3& c);

/// One third of the summed areas of the incident faces, per vertex. Sums to 4 pi.
std::vector<double> vertex_weights(const IcosphereMesh& mesh);

/// Containment score of p in triangle (a, b, c): the smallest of the three
/// normalized edge-plane determinants. Non-negative means inside.
double containment_score(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

}  // namespace sphalign
