#include "doctest.h"
#include "sphalign/density.hpp"
#include "sphalign/errors.hpp"
#include "sphalign/sim.hpp"
#include "test_util.hpp"

using namespace sphalign;

namespace {

// Direct double loop over data for one grid pair.
double naive_kde(const EndpointSet& pts, const HeatKernel& k, const HemiPoint& a, const HemiPoint& b) {
  double s = 0.0;
  for (const auto& e : pts.pairs) {
    s += heat_kernel(a, e.first, k) * heat_kernel(b, e.second, k);
    s += heat_kernel(b, e.first, k) * heat_kernel(a, e.second, k);
  }
  return 0.5 * s / static_cast<double>(pts.size());
}

HemiPoint grid_point(const GridLayout& layout, std::size_t global) {
  const std::size_t v = global % layout.hemi_size();
  return {global < layout.hemi_size() ? Hemisphere::Left : Hemisphere::Right,
          SpherePoint(layout.mesh().vertex(v))};
}

}  // namespace

TEST_SUITE("density") {

TEST_CASE("grid KDE matches the naive double loop") {
  const auto layout = make_layout(3);
  const auto pts = sample_ground_truth({}, 3000, 17);
  const auto spec = make_kernel_spec(0.05);
  const HeatKernel k(spec);
  const DensityGrid f = estimate_density(pts, layout, spec);
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::size_t> pick(0, layout->size() - 1);
  for (int i = 0; i < 40; ++i) {
    std::size_t a = pick(rng), b = pick(rng);
    if (i % 4 == 0) b = (a + 1) % layout->size();  // some dense near-diagonal cells
    const double want = naive_kde(pts, k, grid_point(*layout, a), grid_point(*layout, b));
    CHECK(std::abs(f.value(a, b) - want) <= 1e-10 * std::max(1.0, want));
  }
}

TEST_CASE("symmetry and block structure") {
  const auto layout = make_layout(2);
  EndpointSet within, cross;
  for (const auto& e : testutil::random_endpoints(400, 3).pairs)
    (e.first.hemi == e.second.hemi ? within : cross).pairs.push_back(e);
  const auto spec = make_kernel_spec(0.05);
  const DensityGrid fw = estimate_density(within, layout, spec);
  const DensityGrid fc = estimate_density(cross, layout, spec);
  const std::size_t n = layout->size(), v = layout->hemi_size();
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      CHECK(fw.value(a, b) == fw.value(b, a));
      const bool same = (a < v) == (b < v);
      if (same) CHECK(fc.value(a, b) == 0.0);
      else CHECK(fw.value(a, b) == 0.0);
    }
  }
}

TEST_CASE("single pair peaks at the nearest grid pair") {
  const auto layout = make_layout(3);
  const Vec3 x0 = Vec3(0.3, 0.2, 0.93).normalized();
  EndpointSet pts;
  pts.pairs.push_back({{Hemisphere::Left, SpherePoint(x0)}, {Hemisphere::Left, SpherePoint(x0)}});
  const DensityGrid f = estimate_density(pts, layout, make_kernel_spec(0.02));
  std::size_t nearest = 0;
  for (std::size_t v = 0; v < layout->hemi_size(); ++v)
    if (layout->mesh().vertex(v).dot(x0) > layout->mesh().vertex(nearest).dot(x0)) nearest = v;
  CHECK(f.value(nearest, nearest) == f.max_value());
}

TEST_CASE("duplicating every pair leaves the grid unchanged") {
  const auto layout = make_layout(3);
  const auto pts = sample_ground_truth({}, 1500, 4);
  EndpointSet twice = pts;
  twice.pairs.insert(twice.pairs.end(), pts.pairs.begin(), pts.pairs.end());
  const auto spec = make_kernel_spec(0.02);
  const DensityGrid a = estimate_density(pts, layout, spec), b = estimate_density(twice, layout, spec);
  const auto ra = a.slots().raw(), rb = b.slots().raw();
  double worst = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) worst = std::max(worst, std::abs(ra[i] - rb[i]));
  CHECK(worst <= 1e-14 * a.max_value());
}

TEST_CASE("re-estimation is bit identical") {
  const auto layout = make_layout(3);
  const auto pts = sample_ground_truth({}, 2000, 5);
  const auto spec = make_kernel_spec(0.01);
  const DensityGrid a = estimate_density(pts, layout, spec), b = estimate_density(pts, layout, spec);
  CHECK(std::equal(a.slots().raw().begin(), a.slots().raw().end(), b.slots().raw().begin()));
}

TEST_CASE("mass is close to one") {
  const auto layout = make_layout(4);
  const auto pts = sample_ground_truth({}, 5000, 6);
  CHECK(quadrature_mass(estimate_density(pts, layout, make_kernel_spec(0.05))) ==
        doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("q transform") {
  const auto layout = make_layout(2);
  DensityGrid f(layout);
  for (auto& x : f.slots().raw()) x = 0.49;
  f.slots().ref(3, 5) = 0.0;
  const QGrid q = q_transform(f);
  for (std::size_t a = 0; a < q.size(); ++a)
    for (std::size_t b = 0; b <= a; ++b)
      CHECK(q.slots()(a, b) == ((a == 5 && b == 3) ? 0.0 : doctest::Approx(0.7).epsilon(1e-15)));
}

TEST_CASE("q gradients vanish for a flat density and match differences otherwise") {
  const auto layout = make_layout(2);
  const auto pts = sample_ground_truth({}, 400, 8);
  {
    const auto spec = make_kernel_spec(20.0);
    const DensityGrid f = estimate_density(pts, layout, spec);
    const QGrid q = q_transform(f);
    double qmax = 0.0;
    for (double x : q.slots().raw()) qmax = std::max(qmax, x);
    const QGradientGrid dq = q_gradients(pts, f, spec);
    double worst = 0.0;
    for (std::size_t a = 0; a < layout->size(); ++a)
      for (std::size_t b = 0; b < layout->size(); ++b) worst = std::max(worst, dq.d_first(a, b).norm());
    CHECK(worst < 1e-6 * qmax);
  }
  // Off the grid: d/dx sqrt(fhat(x, y)) by central differences of the naive KDE.
  const auto spec = make_kernel_spec(0.1);
  const HeatKernel k(spec);
  const DensityGrid f = estimate_density(pts, layout, spec);
  const QGradientGrid dq = q_gradients(pts, f, spec);
  for (std::size_t a : {0u, 17u, 80u}) {
    const std::size_t b = a + 3;
    const HemiPoint x = grid_point(*layout, a), y = grid_point(*layout, b);
    const auto [e1, e2] = tangent_frame(x.point.coords());
    Vec3 fd = Vec3::Zero();
    const double h = 1e-5;
    for (const Vec3& e : {e1, e2}) {
      const HemiPoint xp{x.hemi, SpherePoint(exp_map(x.point.coords(), h * e))};
      const HemiPoint xm{x.hemi, SpherePoint(exp_map(x.point.coords(), -h * e))};
      fd += (std::sqrt(naive_kde(pts, k, xp, y)) - std::sqrt(naive_kde(pts, k, xm, y))) / (2 * h) * e;
    }
    CHECK((dq.d_first(a, b) - fd).norm() <= 1e-5 * std::max(fd.norm(), 1e-3));
  }
}

TEST_CASE("LCV of two identical pairs") {
  const Vec3 p = Vec3(0.1, 0.7, 0.2).normalized(), q = Vec3(-0.4, 0.1, 0.9).normalized();
  EndpointSet pts;
  for (int i = 0; i < 2; ++i)
    pts.pairs.push_back({{Hemisphere::Left, SpherePoint(p)}, {Hemisphere::Right, SpherePoint(q)}});
  double prev = -1e300;
  for (double sigma : {0.2, 0.05, 0.01, 0.003}) {
    const double peak = HeatKernel(make_kernel_spec(sigma)).value(1.0);
    const double score = lcv_score(pts, sigma);
    CHECK(score == doctest::Approx(std::log(peak * peak)).epsilon(1e-12));
    CHECK(score > prev);
    prev = score;
  }
  CHECK_THROWS_AS(lcv_score(EndpointSet{{pts.pairs[0]}, {}, {}}, 0.1), ConfigError);
}

TEST_CASE("LCV choice tracks the integrated squared error optimum") {
  // Within-hemisphere vMF pairs only, so the true density is the closed form.
  SimDensitySpec spec{1.0, 10.0};
  const auto pts = sample_ground_truth(spec, 5000, 21);
  const std::vector<double> sigmas{0.002, 0.004, 0.008, 0.016, 0.032, 0.064, 0.128};
  const auto layout = make_layout(3);
  const DensityGrid truth = sim_density_grid(spec, layout);
  double best_ise = 1e300, best_ise_sigma = 0.0;
  for (double s : sigmas) {
    const DensityGrid f = estimate_density(pts, layout, make_kernel_spec(s));
    double ise = 0.0;
    for (std::size_t a = 0; a < layout->size(); ++a)
      for (std::size_t b = 0; b < layout->size(); ++b) {
        const double d = f.slots()(a, b) - truth.slots()(a, b);
        ise += layout->weight(a) * layout->weight(b) * d * d;
      }
    if (ise < best_ise) best_ise = ise, best_ise_sigma = s;
  }
  const auto lcv = lcv_sweep(pts, sigmas);
  const auto best = std::max_element(lcv.begin(), lcv.end(),
                                     [](const auto& a, const auto& b) { return a.score < b.score; });
  CHECK(best->sigma <= 4 * best_ise_sigma);
  CHECK(best->sigma >= best_ise_sigma / 4);
  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    const double single = lcv_score(pts, sigmas[i]);
    if (std::isinf(single)) CHECK(lcv[i].score == single);
    else CHECK(lcv[i].score == doctest::Approx(single).epsilon(1e-12));
  }
}

TEST_CASE("empty input") {
  CHECK_THROWS_AS(estimate_density(EndpointSet{}, make_layout(1), make_kernel_spec(0.1)), EmptyEndpointSet);
}

}
