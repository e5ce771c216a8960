#include <numbers>

#include "doctest.h"
#include "sphalign/errors.hpp"
#include "sphalign/sphere.hpp"
#include "test_util.hpp"

using namespace sphalign;
using std::numbers::pi;

TEST_SUITE("sphere") {

TEST_CASE("exp_map special cases") {
  const SpherePoint n(0, 0, 1);
  CHECK((exp_map(n, Vec3::Zero()).coords() - Vec3(0, 0, 1)).norm() < 1e-15);
  CHECK((exp_map(n, Vec3(pi / 2, 0, 0)).coords() - Vec3(1, 0, 0)).norm() < 1e-15);
  CHECK((exp_map(n, Vec3(pi, 0, 0)).coords() - Vec3(0, 0, -1)).norm() < 1e-15);
}

TEST_CASE("log_map special cases") {
  const SpherePoint n(0, 0, 1);
  CHECK(log_map(n, n).norm() == 0.0);
  CHECK((log_map(n, SpherePoint(1, 0, 0)).vec - Vec3(pi / 2, 0, 0)).norm() < 1e-15);
  CHECK_THROWS_AS(log_map(n, SpherePoint(0, 0, -1)), AntipodalError);
}

TEST_CASE("geodesic_angle special cases") {
  const SpherePoint x(0.3, -0.4, 0.5);
  CHECK(geodesic_angle(x, x) == 0.0);
  CHECK(geodesic_angle(SpherePoint(0, 0, 1), SpherePoint(1, 0, 0)) == doctest::Approx(pi / 2).epsilon(1e-15));
  CHECK(geodesic_angle(x, -x) == doctest::Approx(pi).epsilon(1e-15));
}

TEST_CASE("exp/log round trip on random pairs") {
  std::mt19937_64 rng(7);
  double worst = 0.0;
  for (int i = 0; i < 2000; ++i) {
    const Vec3 x = testutil::random_unit(rng), y = testutil::random_unit(rng);
    if (x.dot(y) < -0.999) continue;
    worst = std::max(worst, (exp_map(x, log_map(x, y)) - y).norm());
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("exp_map keeps unit norm for long tangent vectors") {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 2000; ++i) {
    const Vec3 x = testutil::random_unit(rng);
    const double len = std::uniform_real_distribution<double>(0.0, 10 * pi)(rng);
    const Vec3 v = testutil::random_tangent(rng, x, 1.0).normalized() * len;
    CHECK(std::abs(exp_map(x, v).norm() - 1.0) < 1e-9);
  }
}

TEST_CASE("geodesic distance is rotation invariant") {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 500; ++i) {
    const Vec3 x = testutil::random_unit(rng), y = testutil::random_unit(rng);
    const Mat3 r = rotation_matrix(testutil::random_unit(rng),
                                   std::uniform_real_distribution<double>(0, 2 * pi)(rng));
    CHECK(std::abs(geodesic_angle(Vec3(r * x), Vec3(r * y)) - geodesic_angle(x, y)) < 1e-12);
  }
}

TEST_CASE("log_map is tangent with length equal to the geodesic angle") {
  std::mt19937_64 rng(10);
  for (int i = 0; i < 500; ++i) {
    const Vec3 x = testutil::random_unit(rng), y = testutil::random_unit(rng);
    if (x.dot(y) < -0.999) continue;
    const Vec3 v = log_map(x, y);
    CHECK(std::abs(v.dot(x)) < 1e-12);
    CHECK(std::abs(v.norm() - geodesic_angle(x, y)) < 1e-12);
  }
}

TEST_CASE("zero vector cannot become a sphere point") {
  CHECK_THROWS_AS(SpherePoint(0, 0, 0), Error);
}

}
