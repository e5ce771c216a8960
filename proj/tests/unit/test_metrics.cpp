#include "doctest.h"
#include "sphalign/errors.hpp"
#include "sphalign/metrics.hpp"
#include "sphalign/sim.hpp"
#include "sphalign/warp.hpp"
#include "test_util.hpp"

using namespace sphalign;

namespace {

ConnectivityCounts counts(std::initializer_list<std::pair<std::pair<std::uint32_t, std::uint32_t>, std::uint64_t>> cells) {
  ConnectivityCounts c;
  for (const auto& [k, v] : cells) {
    c.counts[k] = v;
    c.n += v;
  }
  return c;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("binning") {
  const auto mesh = build_icosphere(4);
  const std::uint32_t k = static_cast<std::uint32_t>(mesh.face_count());
  EndpointSet one;
  const Vec3 c = mesh.face_centroid(7);
  one.pairs.push_back({{Hemisphere::Right, SpherePoint(c)}, {Hemisphere::Right, SpherePoint(c)}});
  const auto b1 = bin_endpoints(one, mesh);
  CHECK(b1.n == 1);
  CHECK(b1.counts.size() == 1);
  CHECK(b1.at(k + 7, k + 7) == 1);

  const auto pts = testutil::random_endpoints(1000, 2);
  const auto b = bin_endpoints(pts, mesh);
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint64_t> oracle;
  for (const auto& e : pts.pairs) {
    const std::uint32_t a = hemi_index(e.first.hemi) * k + mesh.locate_face_brute_force(e.first.point.coords());
    const std::uint32_t z = hemi_index(e.second.hemi) * k + mesh.locate_face_brute_force(e.second.point.coords());
    ++oracle[{std::min(a, z), std::max(a, z)}];
  }
  CHECK(b.counts == oracle);
  std::uint64_t total = 0;
  for (const auto& [key, v] : b.counts) {
    total += v;
    CHECK(key.first <= key.second);
    CHECK(key.second < 2 * k);
  }
  CHECK(total == b.n);
}

TEST_CASE("overlap coefficient hand example") {
  const auto c1 = counts({{{0, 0}, 3}, {{0, 1}, 1}});
  const auto c2 = counts({{{0, 0}, 2}, {{1, 1}, 2}});
  const auto r = overlap_coefficient(c1, c2, 0.3);
  CHECK(r.overlap == 1.0);
  CHECK(r.suprathreshold_sizes == std::pair<std::size_t, std::size_t>{1, 2});
  CHECK(!r.empty);
}

TEST_CASE("overlap properties") {
  const auto mesh = build_icosphere(2);
  const auto a = bin_endpoints(sample_ground_truth({}, 3000, 1), mesh);
  const auto b = bin_endpoints(sample_ground_truth({}, 3000, 2), mesh);
  CHECK(overlap_coefficient(a, a, 0.0).overlap == 1.0);
  const double tau2 = 1.5 / static_cast<double>(a.n);  // cells holding at least two streamlines
  REQUIRE(!overlap_coefficient(a, a, tau2).empty);
  CHECK(overlap_coefficient(a, a, tau2).overlap == 1.0);
  const auto disjoint1 = counts({{{0, 0}, 5}}), disjoint2 = counts({{{1, 2}, 5}});
  CHECK(overlap_coefficient(disjoint1, disjoint2, 0.0).overlap == 0.0);
  std::size_t prev1 = SIZE_MAX, prev2 = SIZE_MAX;
  for (double tau : {0.0, 1e-4, 3e-4, 1e-3, 3e-3, 1e-2}) {
    const auto ab = overlap_coefficient(a, b, tau), ba = overlap_coefficient(b, a, tau);
    CHECK(ab.overlap == ba.overlap);
    CHECK(ab.overlap >= 0.0);
    CHECK(ab.overlap <= 1.0);
    CHECK(ab.suprathreshold_sizes.first <= prev1);
    CHECK(ab.suprathreshold_sizes.second <= prev2);
    prev1 = ab.suprathreshold_sizes.first;
    prev2 = ab.suprathreshold_sizes.second;
  }
  const auto none = overlap_coefficient(a, b, 1.0);
  CHECK(none.empty);
  CHECK(none.overlap == 0.0);
  ConnectivityCounts other = b;
  other.level = 3;
  CHECK_THROWS_AS(overlap_coefficient(a, other, 0.0), MeshMismatch);
  CHECK_THROWS_AS(overlap_coefficient(a, b, -0.1), ConfigError);
}

TEST_CASE("filters") {
  const auto pts = sample_ground_truth({}, 500, 3);
  const auto cross = filter_by_label(pts, "cross");
  for (const auto& e : cross.pairs) CHECK(e.first.hemi != e.second.hemi);
  CHECK_THROWS_AS(filter_by_label(pts, "no-such-bundle"), EmptyAfterFilter);
  const auto left = filter_by_hemisphere(pts, Hemisphere::Left);
  for (const auto& e : left.pairs) {
    CHECK(e.first.hemi == Hemisphere::Left);
    CHECK(e.second.hemi == Hemisphere::Left);
  }
  CHECK_THROWS_AS(filter_by_hemisphere(cross, Hemisphere::Left), EmptyAfterFilter);
  EndpointSet unlabelled = pts;
  unlabelled.labels.clear();
  CHECK_THROWS_AS(filter_by_label(unlabelled, "cross"), EmptyAfterFilter);
}

TEST_CASE("MMD on identical and swapped sets") {
  const auto a = sample_ground_truth({}, 3000, 4), b = sample_ground_truth({}, 3000, 5);
  MmdOptions o;
  o.kernel = make_kernel_spec(0.01);
  const double peak = HeatKernel(o.kernel).peak();
  CHECK(mmd(a, a, o) <= 1e-8 * peak);
  CHECK(mmd(a, b, o) == mmd(b, a, o));
  o.hemisphere = Hemisphere::Left;
  CHECK(mmd(a, b, o) == mmd(b, a, o));
}

TEST_CASE("MMD of two samples sits inside the permutation null") {
  const auto a = sample_ground_truth({}, 10000, 6), b = sample_ground_truth({}, 10000, 7);
  MmdOptions o;
  o.kernel = make_kernel_spec(0.05);
  const auto t = mmd_permutation_test(a, b, o, 200);
  CHECK(t.null.size() == 200);
  CHECK(t.statistic < t.null_q95);
  CHECK(std::sqrt(std::max(t.statistic, 0.0)) == doctest::Approx(mmd(a, b, o)).epsilon(1e-12));
}

TEST_CASE("MMD grows under a large warp") {
  const auto a = sample_ground_truth({}, 4000, 8), b = sample_ground_truth({}, 4000, 9);
  const auto w = random_diffeomorphism({3, 0.4, 5, 3}).warp;
  MmdOptions o;
  o.kernel = make_kernel_spec(0.02);
  CHECK(mmd(a, apply_warp(w, b), o) > mmd(a, b, o));
  const auto t = mmd_permutation_test(a, apply_warp(w, b), o, 100);
  CHECK(t.statistic > t.null_q95);
}

TEST_CASE("MMD subsampling is seeded") {
  const auto a = sample_ground_truth({}, 3000, 10), b = sample_ground_truth({}, 3000, 11);
  MmdOptions o;
  o.kernel = make_kernel_spec(0.02);
  o.subsample = 500;
  o.seed = 3;
  CHECK(mmd(a, b, o) == mmd(a, b, o));
  EndpointSet cross_only = filter_by_label(a, "cross");
  o.hemisphere = Hemisphere::Left;
  CHECK_THROWS_AS(mmd(cross_only, b, o), EmptyAfterFilter);
}

}
