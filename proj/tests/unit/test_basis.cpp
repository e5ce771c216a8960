#include <numbers>

#include "doctest.h"
#include "sphalign/basis.hpp"
#include "sphalign/errors.hpp"
#include "sphalign/mesh.hpp"
#include "test_util.hpp"

using namespace sphalign;
using std::numbers::pi;

TEST_SUITE("basis") {

TEST_CASE("sizes") {
  CHECK(TangentBasis(1).size() == 6);
  CHECK(TangentBasis(8).size() == 160);
  CHECK(basis_size(8) == 160);
  CHECK_THROWS_AS(TangentBasis(kMaxBasisDegree + 1), DegreeTooLarge);
  CHECK(&shared_basis(4) == &shared_basis(4));
}

TEST_CASE("l = 1, m = 0 fields") {
  const TangentBasis b(3);
  const std::size_t rot = b.index_of(FieldKind::Rotational, 1, 0);
  const std::size_t grad = b.index_of(FieldKind::Gradient, 1, 0);
  std::vector<Vec3> f(b.size());
  std::mt19937_64 rng(2);
  for (int i = 0; i < 50; ++i) {
    const Vec3 p = testutil::random_unit(rng);
    b.eval(p, f);
    const Vec3 axial = Vec3::UnitZ().cross(p);
    CHECK(f[rot].cross(axial).norm() < 1e-12);
    CHECK(std::abs(f[rot].norm() - std::sqrt(3.0 / (8 * pi)) * axial.norm()) < 1e-12);
  }
  b.eval(Vec3::UnitZ(), f);
  CHECK(f[grad].norm() < 1e-14);
  std::vector<double> div(b.size());
  b.divergence(Vec3::UnitZ(), div);
  CHECK(div[grad] == doctest::Approx(-std::sqrt(2.0) * std::sqrt(3.0 / (4 * pi))).epsilon(1e-13));
}

TEST_CASE("fields are tangent and rotational fields are divergence free") {
  const TangentBasis b(6);
  std::vector<Vec3> f(b.size());
  std::vector<double> div(b.size());
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    const Vec3 p = testutil::random_unit(rng);
    b.eval(p, f);
    b.divergence(p, div);
    for (std::size_t k = 0; k < b.size(); ++k) {
      CHECK(std::abs(f[k].dot(p)) < 1e-12);
      if (b.tag(k).kind == FieldKind::Rotational) CHECK(div[k] == 0.0);
    }
  }
}

TEST_CASE("orthonormality and zero-mean divergence by quadrature") {
  const auto m = build_icosphere(5);
  const auto w = vertex_weights(m);
  const TangentBasis b(4);
  const std::size_t n = b.size();
  std::vector<double> gram(n * n, 0.0), divsum(n, 0.0);
  std::vector<Vec3> f(n);
  std::vector<double> div(n);
  for (std::size_t v = 0; v < m.vertex_count(); ++v) {
    b.eval(m.vertex(v), f);
    b.divergence(m.vertex(v), div);
    for (std::size_t i = 0; i < n; ++i) {
      divsum[i] += w[v] * div[i];
      for (std::size_t j = 0; j < n; ++j) gram[i * n + j] += w[v] * f[i].dot(f[j]);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    CHECK(std::abs(divsum[i]) < 1e-6 + 1e-3);  // quadrature error dominates the exact zero
    for (std::size_t j = 0; j < n; ++j) CHECK(std::abs(gram[i * n + j] - (i == j)) < 5e-3);
  }
}

TEST_CASE("divergence matches a finite-volume flux estimate") {
  // Flux of the field through a small geodesic circle divided by its area.
  const TangentBasis b(4);
  std::vector<Vec3> f(b.size());
  std::vector<double> div(b.size()), flux(b.size());
  std::mt19937_64 rng(4);
  for (int t = 0; t < 10; ++t) {
    const Vec3 p = testutil::random_unit(rng);
    const auto [e1, e2] = tangent_frame(p);
    const double r = 1e-3;
    const int ns = 400;
    std::fill(flux.begin(), flux.end(), 0.0);
    for (int s = 0; s < ns; ++s) {
      const double a = 2 * pi * (s + 0.5) / ns;
      const Vec3 dir = std::cos(a) * e1 + std::sin(a) * e2;
      const Vec3 x = exp_map(p, r * dir);
      const Vec3 normal = -log_map(x, p).normalized();
      b.eval(x, f);
      for (std::size_t k = 0; k < b.size(); ++k) flux[k] += f[k].dot(normal) * (2 * pi * std::sin(r) / ns);
    }
    b.divergence(p, div);
    const double area = 2 * pi * (1 - std::cos(r));
    for (std::size_t k = 0; k < b.size(); ++k) CHECK(std::abs(flux[k] / area - div[k]) < 1e-4);
  }
}

TEST_CASE("projection and resynthesis reproduce a band-limited field") {
  const auto m = build_icosphere(5);
  const auto w = vertex_weights(m);
  const TangentBasis b(3);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  std::vector<double> c(b.size());
  for (auto& x : c) x = nd(rng);
  std::vector<double> proj(b.size(), 0.0);
  std::vector<Vec3> f(b.size());
  for (std::size_t v = 0; v < m.vertex_count(); ++v) {
    const Vec3 field = b.synthesize(c, m.vertex(v));
    b.eval(m.vertex(v), f);
    for (std::size_t k = 0; k < b.size(); ++k) proj[k] += w[v] * field.dot(f[k]);
  }
  // Quadrature projection carries the O(h^2) error of the rule.
  double worst = 0.0, scale = 0.0;
  for (int i = 0; i < 200; ++i) {
    const Vec3 p = testutil::random_unit(rng);
    worst = std::max(worst, (b.synthesize(proj, p) - b.synthesize(c, p)).norm());
    scale = std::max(scale, b.synthesize(c, p).norm());
  }
  CHECK(worst < 1e-2 * scale);
  // Exact completeness: coefficients recovered by least squares at many points.
  const int np = 400;
  Eigen::MatrixXd A(3 * np, b.size());
  Eigen::VectorXd rhs(3 * np);
  for (int i = 0; i < np; ++i) {
    const Vec3 p = testutil::random_unit(rng);
    b.eval(p, f);
    for (std::size_t k = 0; k < b.size(); ++k) A.block<3, 1>(3 * i, k) = f[k];
    rhs.segment<3>(3 * i) = b.synthesize(c, p);
  }
  const Eigen::VectorXd sol = A.colPivHouseholderQr().solve(rhs);
  for (int i = 0; i < 50; ++i) {
    const Vec3 p = testutil::random_unit(rng);
    const std::vector<double> s(sol.data(), sol.data() + sol.size());
    CHECK((b.synthesize(s, p) - b.synthesize(c, p)).norm() < 1e-6);
  }
}

TEST_CASE("field norms respect the addition-theorem bound") {
  // sum_m |grad Y_lm|^2 = l(l+1)(2l+1)/(4 pi), so each normalized field is
  // bounded by sqrt((2l+1)/(4 pi)).
  const TangentBasis b(8);
  std::vector<Vec3> f(b.size());
  std::mt19937_64 rng(6);
  for (int i = 0; i < 300; ++i) {
    b.eval(testutil::random_unit(rng), f);
    for (std::size_t k = 0; k < b.size(); ++k) {
      const int l = b.tag(k).l;
      CHECK(f[k].norm() <= std::sqrt((2 * l + 1) / (4 * pi)) + 1e-12);
    }
  }
}

}
