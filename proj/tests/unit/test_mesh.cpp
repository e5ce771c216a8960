#include <numbers>
#include <set>

#include "doctest.h"
#include "sphalign/basis.hpp"
#include "sphalign/errors.hpp"
#include "sphalign/mesh.hpp"
#include "test_util.hpp"

using namespace sphalign;

namespace {

// l'Huilier's formula, independent of the library's area routine.
double lhuilier(const Vec3& a, const Vec3& b, const Vec3& c) {
  const double x = geodesic_angle(b, c), y = geodesic_angle(a, c), z = geodesic_angle(a, b);
  const double s = 0.5 * (x + y + z);
  const double t = std::tan(s / 2) * std::tan((s - x) / 2) * std::tan((s - y) / 2) *
                   std::tan((s - z) / 2);
  return 4.0 * std::atan(std::sqrt(std::max(t, 0.0)));
}

}  // namespace

TEST_SUITE("mesh") {

TEST_CASE("vertex and face counts") {
  const int levels[] = {0, 1, 2, 3, 4, 5};
  for (int g : levels) {
    const auto m = build_icosphere(g);
    CHECK(m.vertex_count() == 10 * (std::size_t{1} << (2 * g)) + 2);
    CHECK(m.face_count() == 20 * (std::size_t{1} << (2 * g)));
    CHECK(m.vertex_count() + m.face_count() - m.edge_count() == 2);
  }
  CHECK(build_icosphere(4).vertex_count() == 2562);
  CHECK(build_icosphere(4).face_count() == 5120);
  CHECK(build_icosphere(5).vertex_count() == 10242);
  CHECK_THROWS_AS(build_icosphere(kMaxIcosphereLevel + 1), LevelTooLarge);
}

TEST_CASE("parent vertices keep their exact positions") {
  const auto coarse = build_icosphere(3), fine = build_icosphere(4);
  for (std::uint32_t v = 0; v < coarse.vertex_count(); ++v)
    CHECK(fine.vertex(fine.parent_map(v)) == coarse.vertex(v));
}

TEST_CASE("faces are counter-clockwise from outside") {
  const auto m = build_icosphere(3);
  for (const Face& f : m.faces()) {
    const Vec3 &a = m.vertex(f[0]), &b = m.vertex(f[1]), &c = m.vertex(f[2]);
    CHECK(a.dot(b.cross(c)) > 0.0);
  }
}

TEST_CASE("vertex weights") {
  const auto m0 = build_icosphere(0);
  for (double w : vertex_weights(m0)) CHECK(w == doctest::Approx(4 * std::numbers::pi / 12).epsilon(1e-12));
  for (int g = 0; g <= 5; ++g) {
    const auto w = vertex_weights(build_icosphere(g));
    double sum = 0.0;
    for (double x : w) sum += x;
    CHECK(std::abs(sum - 4 * std::numbers::pi) < 1e-9);
  }
  const auto m4 = build_icosphere(4);
  std::vector<double> oracle(m4.vertex_count(), 0.0);
  for (const Face& f : m4.faces()) {
    const double a = lhuilier(m4.vertex(f[0]), m4.vertex(f[1]), m4.vertex(f[2]));
    for (auto v : f) oracle[v] += a / 3.0;
  }
  const auto w4 = vertex_weights(m4);
  for (std::size_t v = 0; v < w4.size(); ++v) CHECK(w4[v] == doctest::Approx(oracle[v]).epsilon(1e-9));
  // Triangle areas vary by less than 1.3x; the twelve valence-5 vertices
  // collect five triangles instead of six, so bound the others separately.
  double amin = 1e300, amax = 0.0;
  for (const Face& f : m4.faces()) {
    const double a = lhuilier(m4.vertex(f[0]), m4.vertex(f[1]), m4.vertex(f[2]));
    amin = std::min(amin, a);
    amax = std::max(amax, a);
  }
  CHECK(amax / amin < 1.3);
  double wmin = 1e300, wmax = 0.0;
  for (std::size_t v = 0; v < oracle.size(); ++v) {
    if (m4.neighbors(v).size() != 6) continue;
    wmin = std::min(wmin, oracle[v]);
    wmax = std::max(wmax, oracle[v]);
  }
  CHECK(wmax / wmin < 1.3);
  const auto [lo, hi] = std::minmax_element(oracle.begin(), oracle.end());
  CHECK(*hi / *lo < 1.6);
}

TEST_CASE("quadrature integrates low harmonics to zero") {
  const auto m = build_icosphere(4);
  const auto w = vertex_weights(m);
  const TangentBasis basis(4);
  const std::size_t nscalar = 4 * 4 + 2 * 4;
  std::vector<double> acc(nscalar, 0.0), y(nscalar);
  for (std::size_t v = 0; v < m.vertex_count(); ++v) {
    basis.eval_scalar(m.vertex(v), y);
    for (std::size_t k = 0; k < nscalar; ++k) acc[k] += w[v] * y[k];
  }
  for (double a : acc) CHECK(std::abs(a) < 1e-3 * 4 * std::numbers::pi);
}

TEST_CASE("locate_face") {
  const auto m = build_icosphere(3);
  for (std::uint32_t f = 0; f < m.face_count(); ++f) CHECK(m.locate_face(m.face_centroid(f)) == f);
  for (std::uint32_t v = 0; v < m.vertex_count(); ++v) {
    const auto inc = m.incident_faces(v);
    CHECK(m.locate_face(m.vertex(v)) == *std::min_element(inc.begin(), inc.end()));
  }
  std::mt19937_64 rng(3);
  for (int i = 0; i < 10000; ++i) {
    const Vec3 p = testutil::random_unit(rng);
    CHECK(m.locate_face(p) == m.locate_face_brute_force(p));
  }
}

TEST_CASE("located face contains the point") {
  const auto m = build_icosphere(4);
  std::mt19937_64 rng(4);
  for (int i = 0; i < 2000; ++i) {
    const Vec3 p = testutil::random_unit(rng);
    const Face& f = m.face(m.locate_face(p));
    const Vec3 &a = m.vertex(f[0]), &b = m.vertex(f[1]), &c = m.vertex(f[2]);
    CHECK(a.cross(b).dot(p) >= -1e-12);
    CHECK(b.cross(c).dot(p) >= -1e-12);
    CHECK(c.cross(a).dot(p) >= -1e-12);
    const auto hit = m.locate(p);
    Vec3 rebuilt = hit.bary[0] * a + hit.bary[1] * b + hit.bary[2] * c;
    CHECK((rebuilt.normalized() - p).norm() < 1e-9);
  }
}

TEST_CASE("1-rings are closed and symmetric") {
  const auto m = build_icosphere(2);
  for (std::size_t v = 0; v < m.vertex_count(); ++v) {
    const auto nb = m.neighbors(v);
    CHECK((nb.size() == 5 || nb.size() == 6));
    for (auto u : nb) {
      const auto back = m.neighbors(u);
      CHECK(std::find(back.begin(), back.end(), v) != back.end());
    }
  }
}

}
