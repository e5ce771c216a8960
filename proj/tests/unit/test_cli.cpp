#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "sphalign/io.hpp"
#include "sphalign/sim.hpp"

namespace fs = std::filesystem;
using namespace sphalign;

namespace {

const fs::path root = fs::temp_directory_path() / "sphalign_cli_test";

int run(const std::string& args, const std::string& log = "log.txt") {
  const std::string cmd = std::string(SPHALIGN_CLI_PATH) + " " + args + " > " +
                          (root / log).string() + " 2> " + (root / ("err_" + log)).string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

nlohmann::json manifest(const fs::path& dir) { return nlohmann::json::parse(slurp(dir / "manifest.json")); }

std::string summary(const nlohmann::json& m, const std::string& key) {
  return m.at("summary").at(key).get<std::string>();
}

struct Fixture {
  Fixture() {
    fs::remove_all(root);
    fs::create_directories(root);
  }
};

}  // namespace

TEST_CASE_FIXTURE(Fixture, "mesh writes vertices and faces") {
  REQUIRE(run("-o " + (root / "mesh").string() + " mesh --level 2") == 0);
  const auto m = manifest(root / "mesh");
  CHECK(summary(m, "vertices") == "162");
  CHECK(summary(m, "faces") == "320");
  std::ifstream v(root / "mesh" / "vertices.csv");
  std::string line;
  int rows = -1;
  while (std::getline(v, line)) ++rows;
  CHECK(rows == 162);
}

TEST_CASE_FIXTURE(Fixture, "simulate is reproducible and evaluate reports self overlap") {
  const std::string a = (root / "sim_a").string(), b = (root / "sim_b").string();
  REQUIRE(run("-o " + a + " simulate -n 2000 --seed 5 --amplitude 0.2") == 0);
  REQUIRE(run("-o " + b + " simulate -n 2000 --seed 5 --amplitude 0.2") == 0);
  for (const char* f : {"fixed.csv", "moving.csv", "truth_warp.json"})
    CHECK(slurp(fs::path(a) / f) == slurp(fs::path(b) / f));
  // Manifests differ only in the output directory named on the command line.
  auto ma = manifest(a), mb = manifest(b);
  ma.erase("argv");
  mb.erase("argv");
  ma.erase("outputs");
  mb.erase("outputs");
  CHECK(ma == mb);
  CHECK(load_endpoints(a + "/fixed.csv").size() == 2000);

  const std::string e = (root / "eval").string();
  REQUIRE(run("-o " + e + " evaluate --a " + a + "/fixed.csv --b " + a + "/fixed.csv --metric overlap --tau 0 --level 4") == 0);
  const std::string csv = slurp(fs::path(e) / "metrics.csv");
  CHECK(csv.find("overlap,0,1,2000,2000") != std::string::npos);

  REQUIRE(run("-o " + e + " evaluate --a " + a + "/fixed.csv --b " + a + "/moving.csv --metric mmd --sigma 0.02 --hemisphere 1") == 0);
  CHECK(slurp(fs::path(e) / "metrics.csv").find("mmd,0.02,") != std::string::npos);

  REQUIRE(run("-o " + e + " evaluate --truth " + a + "/truth_warp.json --estimate " + a + "/truth_warp.json --metric warp-error --level 3") == 0);
  CHECK(slurp(fs::path(e) / "metrics.csv").find("mean_angular_deg,0.5,0,") != std::string::npos);
}

TEST_CASE_FIXTURE(Fixture, "register on identical subjects converges to the identity") {
  const std::string s = (root / "sim").string(), r = (root / "reg").string();
  REQUIRE(run("-o " + s + " simulate -n 1500 --seed 2") == 0);
  std::ofstream(root / "run.cfg") << "sigma=0.02\ngrid_level=3\nbasis_degree=4\nmax_iters=20\n";
  REQUIRE(run("-o " + r + " register --fixed " + s + "/fixed.csv --moving " + s +
              "/fixed.csv -c " + (root / "run.cfg").string() + " --delta 0.3 --emit-plots -q") == 0);
  const auto m = manifest(r);
  CHECK(summary(m, "converged") == "true");
  CHECK(m.at("status") == "ok");
  CHECK(load_warp(r + "/warp.json").empty());
  CHECK(fs::exists(fs::path(r) / "energy_trace.csv"));
  CHECK(fs::exists(fs::path(r) / "vertex_residuals.csv"));
  const std::string table = slurp(root / "log.txt");
  CHECK(table.find("KDE Evaluation") != std::string::npos);
  CHECK(table.find("Gradient Estimation") != std::string::npos);
  CHECK(table.find("Endpoint Update") != std::string::npos);
  bool has_delta = false;
  for (const auto& [k, v] : m.at("config").items())
    if (k == "delta") has_delta = v.get<std::string>() == "0.3";
  CHECK(has_delta);
}

TEST_CASE_FIXTURE(Fixture, "register runs are bit identical") {
  const std::string s = (root / "sim").string();
  REQUIRE(run("-o " + s + " simulate -n 1500 --seed 3 --amplitude 0.2") == 0);
  const std::string args = " --fixed " + s + "/fixed.csv --moving " + s +
                           "/moving.csv --grid-level 3 --sigma 0.02 --basis-degree 4 --max-iters 4 -q";
  REQUIRE(run("-o " + (root / "r1").string() + " register" + args) == 0);
  REQUIRE(run("-o " + (root / "r2").string() + " register" + args) == 0);
  CHECK(slurp(root / "r1" / "aligned.csv") == slurp(root / "r2" / "aligned.csv"));
  CHECK(slurp(root / "r1" / "warp.json") == slurp(root / "r2" / "warp.json"));
  REQUIRE(run("-o " + (root / "r3").string() + " register-encore" + args) == 0);
  CHECK(summary(manifest(root / "r3"), "iterations") == "4");
}

TEST_CASE_FIXTURE(Fixture, "errors produce a record and a nonzero status") {
  std::ofstream(root / "bad.csv") << "id,hemi1,x1,y1,z1,hemi2,x2,y2,z2\n0,3,0,0,1,1,0,0,1\n";
  const std::string out = (root / "err").string();
  CHECK(run("-o " + out + " evaluate --a " + (root / "bad.csv").string() + " --b " +
            (root / "bad.csv").string()) == 1);
  const auto rec = nlohmann::json::parse(slurp(root / "err_log.txt"));
  CHECK(rec.at("error") == "ParseError");
  CHECK(rec.at("message").get<std::string>().find("line 2") != std::string::npos);
  const auto m = manifest(out);
  CHECK(m.at("status") == "error");
  CHECK(m.at("error").at("type") == "ParseError");

  std::ofstream(root / "bad.cfg") << "sigma=-1\n";
  REQUIRE(run("-o " + (root / "sim").string() + " simulate -n 100") == 0);
  const std::string f = (root / "sim" / "fixed.csv").string();
  CHECK(run("-o " + out + " register --fixed " + f + " --moving " + f + " -c " + (root / "bad.cfg").string()) == 1);
  CHECK(nlohmann::json::parse(slurp(root / "err_log.txt")).at("error") == "ConfigError");
}

TEST_CASE_FIXTURE(Fixture, "select-bandwidth sweeps sigma") {
  const std::string s = (root / "sim").string(), o = (root / "bw").string();
  REQUIRE(run("-o " + s + " simulate -n 3000 --seed 4 --amplitude 0.2") == 0);
  REQUIRE(run("-o " + o + " select-bandwidth --fixed " + s + "/fixed.csv --moving " + s +
              "/moving.csv --sigmas 0.001,0.005,0.01,0.05 --grid-level 3 --basis-degree 4 --max-iters 10 --delta 0.3") == 0);
  const auto m = manifest(o);
  CHECK(summary(m, "unique_argmax") == "true");
  const std::string table = slurp(fs::path(o) / "bandwidth.csv");
  for (const char* sigma : {"0.001,", "0.005,", "0.01,", "0.05,"}) CHECK(table.find(sigma) != std::string::npos);
  CHECK(table.find("ALL_WEIGHTED") != std::string::npos);

  REQUIRE(run("-o " + o + " select-bandwidth --method lcv --fixed " + s + "/fixed.csv --sigmas 0.005,0.02,0.08") == 0);
  CHECK(slurp(fs::path(o) / "bandwidth.csv").find("sigma,lcv_score,zero_count") != std::string::npos);
}
