#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "sphalign/errors.hpp"
#include "sphalign/io.hpp"
#include "sphalign/sim.hpp"
#include "sphalign/warp.hpp"
#include "test_util.hpp"

using namespace sphalign;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "sphalign_io_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("endpoint CSV parsing") {
  std::istringstream ok(
      "id,hemi1,x1,y1,z1,hemi2,x2,y2,z2\n"
      "0,1,0,0,1,2,1,0,0\n"
      "1,2,0,1,0,2,0,0,-1\n"
      "5,1,0.6,0.8,0,1,0,0.6,0.8\n");
  const auto pts = read_endpoints(ok);
  CHECK(pts.size() == 3);
  CHECK(pts.ids == std::vector<std::int64_t>{0, 1, 5});
  CHECK(pts[1].first.hemi == Hemisphere::Right);
  CHECK(!pts.has_labels());

  std::istringstream bad_hemi("id,hemi1,x1,y1,z1,hemi2,x2,y2,z2\n0,1,0,0,1,1,0,0,1\n1,3,0,0,1,1,0,0,1\n");
  try {
    read_endpoints(bad_hemi);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }

  std::istringstream loose("id,hemi1,x1,y1,z1,hemi2,x2,y2,z2\n0,1,0,0,1.0005,1,1,0,0\n");
  const auto renorm = read_endpoints(loose);
  CHECK(renorm[0].first.point.coords().norm() == doctest::Approx(1.0).epsilon(1e-15));

  std::istringstream far("id,hemi1,x1,y1,z1,hemi2,x2,y2,z2\n0,1,0,0,1.01,1,1,0,0\n");
  CHECK_THROWS_AS(read_endpoints(far), NormError);
  std::istringstream header("id,h1,x1,y1,z1,hemi2,x2,y2,z2\n");
  CHECK_THROWS_AS(read_endpoints(header), ParseError);
  std::istringstream short_row("id,hemi1,x1,y1,z1,hemi2,x2,y2,z2\n0,1,0,0,1,1,0\n");
  CHECK_THROWS_AS(read_endpoints(short_row), ParseError);
  std::istringstream junk("id,hemi1,x1,y1,z1,hemi2,x2,y2,z2\n0,1,0,zero,1,1,0,0,1\n");
  CHECK_THROWS_AS(read_endpoints(junk), ParseError);
}

TEST_CASE("endpoint CSV round trip with labels") {
  const auto pts = sample_ground_truth({}, 300, 3);
  std::stringstream buf;
  write_endpoints(buf, pts);
  const auto back = read_endpoints(buf);
  CHECK(back.pairs == pts.pairs);
  CHECK(back.ids == pts.ids);
  CHECK(back.labels == pts.labels);
  const auto path = scratch("pts.csv").string();
  save_endpoints(path, pts);
  CHECK(load_endpoints(path).pairs == pts.pairs);
}

TEST_CASE("warp round trip") {
  const auto path = scratch("warp.json").string();
  save_warp(path, WarpSequence{});
  CHECK(load_warp(path).empty());

  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd;
  WarpSequence w;
  for (int i = 0; i < 60; ++i) {
    WarpIncrement inc{0.01 * (1 + i % 3), 4, std::vector<double>(basis_size(4)), std::vector<double>(basis_size(4))};
    for (auto& c : inc.coeffs1) c = nd(rng);
    for (auto& c : inc.coeffs2) c = nd(rng);
    w.increments.push_back(inc);
  }
  save_warp(path, w);
  const WarpSequence back = load_warp(path);
  REQUIRE(back.size() == 60);
  for (int i = 0; i < 100; ++i) {
    const Vec3 p = testutil::random_unit(rng);
    const Hemisphere h = testutil::random_hemi(rng);
    CHECK((apply_warp(back, h, p) - apply_warp(w, h, p)).norm() <= 1e-12);
  }
  for (std::size_t i = 0; i < w.size(); ++i) CHECK(back.increments[i].coeffs2 == w.increments[i].coeffs2);
}

TEST_CASE("corrupt warp files are rejected") {
  WarpSequence w;
  w.increments.push_back({0.1, 2, std::vector<double>(basis_size(2), 0.5), std::vector<double>(basis_size(2), -0.5)});
  const std::string text = warp_to_json(w);
  for (std::size_t cut : {text.size() / 3, text.size() / 2, text.size() - 2}) {
    bool rejected = false;
    try {
      warp_from_json(text.substr(0, cut));
    } catch (const ParseError&) {
      rejected = true;
    } catch (const SchemaVersionError&) {
      rejected = true;
    }
    CHECK(rejected);
  }
  std::string future = text;
  future.replace(future.find("\"version\": 1"), 12, "\"version\": 7");
  CHECK_THROWS_AS(warp_from_json(future), SchemaVersionError);
  CHECK_THROWS_AS(warp_from_json("{\"increments\": []}"), SchemaVersionError);
}

TEST_CASE("config files and overrides") {
  std::istringstream in("# run settings\nsigma=0.01\ndelta = 0.2\nmax_iters=40\nkde_every=2\ndeterministic=true\n");
  AlignConfig cfg = read_config(in);
  CHECK(cfg.sigma == 0.01);
  CHECK(cfg.step == 0.2);
  CHECK(cfg.max_iters == 40);
  CHECK(cfg.kde_every == 2);
  set_config_value(cfg, "epsilon", "1e-4");
  CHECK(cfg.tol == 1e-4);
  CHECK_THROWS_AS(set_config_value(cfg, "colour", "red"), ConfigError);
  CHECK_THROWS_AS(set_config_value(cfg, "sigma", "wide"), ConfigError);
  std::istringstream bad("sigma 0.1\n");
  CHECK_THROWS_AS(read_config(bad), ConfigError);

  std::ostringstream dump;
  for (const auto& [k, v] : config_entries(cfg)) dump << k << '=' << v << '\n';
  std::istringstream again(dump.str());
  const AlignConfig back = read_config(again);
  CHECK(back.sigma == cfg.sigma);
  CHECK(back.step == cfg.step);
  CHECK(back.tol == cfg.tol);
  CHECK(back.kde_every == cfg.kde_every);
  CHECK(back.seed == cfg.seed);
}

TEST_CASE("digest and manifest") {
  const auto path = scratch("abc.txt").string();
  std::ofstream(path) << "abc";
  CHECK(file_sha256(path) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  RunManifest m;
  m.command = "register";
  m.config = {{"sigma", "0.005"}};
  m.summary = {{"converged", "true"}};
  const std::string a = manifest_to_json(m), b = manifest_to_json(m);
  CHECK(a == b);
  CHECK(a.find("created_utc") == std::string::npos);
  m.deterministic = false;
  CHECK(manifest_to_json(m).find("created_utc") != std::string::npos);
}

}
