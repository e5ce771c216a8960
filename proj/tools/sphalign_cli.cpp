// Command-line front end: mesh, simulate, register, register-encore, evaluate
// and select-bandwidth. Every subcommand writes a manifest.json next to its
// outputs; failures exit with status 1 and a JSON error record on stderr.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "sphalign/align.hpp"
#include "sphalign/errors.hpp"
#include "sphalign/io.hpp"
#include "sphalign/metrics.hpp"
#include "sphalign/sim.hpp"

namespace fs = std::filesystem;
using namespace sphalign;

namespace {

struct Common {
  std::string out_dir = ".";
  std::vector<std::string> argv;
};

std::string out_path(const Common& c, const std::string& name) {
  return (fs::path(c.out_dir) / name).string();
}

RunManifest start_manifest(const Common& c, const std::string& command) {
  RunManifest m;
  m.command = command;
  m.argv = c.argv;
  return m;
}

void add_input(RunManifest& m, const std::string& path) {
  m.inputs.push_back({path, file_sha256(path)});
}

std::string fmt(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

std::vector<MultiresStage> parse_schedule(const std::string& text) {
  std::vector<MultiresStage> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError("multires stage must be level:sigma");
    try {
      out.push_back({std::stoi(item.substr(0, colon)), std::stod(item.substr(colon + 1))});
    } catch (const std::logic_error&) {
      throw ConfigError("bad multires stage '" + item + "'");
    }
  }
  return out;
}

// ---- register / register-encore -------------------------------------------

struct RegisterArgs {
  std::string fixed, moving, config, truth, multires;
  std::map<std::string, std::string> overrides;
  bool emit_plots = false;
  bool quiet = false;
};

void print_timing_table(std::ostream& os, const PhaseTiming& t, int iterations) {
  const double total = t.total();
  const double per = 1.0 / std::max(iterations, 1);
  const std::pair<const char*, double> rows[] = {
      {"Gradient Estimation", t.gradient}, {"Endpoint Update", t.update}, {"KDE Evaluation", t.kde}};
  char line[128];
  std::snprintf(line, sizeof line, "%-20s %9s %14s\n", "phase", "percent", "sec/iteration");
  os << line;
  for (const auto& [name, secs] : rows) {
    std::snprintf(line, sizeof line, "%-20s %8.2f%% %14.4f\n", name,
                  total > 0 ? 100.0 * secs / total : 0.0, secs * per);
    os << line;
  }
  std::snprintf(line, sizeof line, "%-20s %8.2f%% %14.4f\n", "Total", 100.0, total * per);
  os << line;
}

void write_timing_csv(const std::string& path, const PhaseTiming& t, int iterations) {
  std::ofstream out(path);
  const double total = t.total();
  const double per = 1.0 / std::max(iterations, 1);
  out << "phase,percent,seconds_per_iteration,seconds\n";
  const std::pair<const char*, double> rows[] = {
      {"gradient", t.gradient}, {"update", t.update}, {"kde", t.kde}};
  for (const auto& [name, secs] : rows)
    out << name << ',' << (total > 0 ? 100.0 * secs / total : 0.0) << ',' << secs * per << ','
        << secs << '\n';
}

void emit_plots(const Common& c, RunManifest& m, const AlignResult& r, const AlignConfig& cfg,
                const std::string& truth_path) {
  const std::string trace = out_path(c, "energy_trace.csv");
  {
    std::ofstream out(trace);
    out << "iteration,energy,grad_norm1,grad_norm2,step\n";
    for (std::size_t k = 0; k < r.energy_trace.size(); ++k) {
      out << k << ',' << fmt(r.energy_trace[k]) << ',' << fmt(r.gradient_norm_trace[k][0]) << ','
          << fmt(r.gradient_norm_trace[k][1]) << ','
          << (k < r.step_trace.size() ? fmt(r.step_trace[k]) : "") << '\n';
    }
  }
  m.outputs.push_back(trace);
  const IcosphereMesh mesh = build_icosphere(cfg.grid_level);
  const std::string res = out_path(c, "vertex_residuals.csv");
  std::ofstream out(res);
  if (!truth_path.empty()) {
    const auto rep = warp_error_metrics(load_warp(truth_path), r.warp, mesh, 0.5);
    out << "hemi,vertex,residual_rad,evaluated\n";
    for (std::size_t g = 0; g < rep.residuals.size(); ++g)
      out << g / mesh.vertex_count() + 1 << ',' << g % mesh.vertex_count() << ','
          << fmt(rep.residuals[g].norm()) << ',' << (rep.evaluated[g] ? 1 : 0) << '\n';
  } else {
    out << "hemi,vertex,displacement_rad\n";
    for (Hemisphere h : {Hemisphere::Left, Hemisphere::Right}) {
      for (std::size_t v = 0; v < mesh.vertex_count(); ++v)
        out << static_cast<int>(h) << ',' << v << ','
            << fmt(geodesic_angle(mesh.vertex(v), apply_warp(r.warp, h, mesh.vertex(v)))) << '\n';
    }
  }
  m.outputs.push_back(res);
}

int run_register(const Common& c, const RegisterArgs& a, bool encore) {
  RunManifest m = start_manifest(c, encore ? "register-encore" : "register");
  AlignConfig cfg;
  if (!a.config.empty()) {
    cfg = load_config(a.config);
    add_input(m, a.config);
  }
  for (const auto& [k, v] : a.overrides) set_config_value(cfg, k, v);
  if (!a.multires.empty()) cfg.multires_schedule = parse_schedule(a.multires);
  cfg.validate();
  m.config = config_entries(cfg);
  m.deterministic = cfg.deterministic;
  if (!a.multires.empty()) m.config.emplace_back("multires", a.multires);
  m.seeds.emplace_back("seed", cfg.seed);
  const EndpointSet fixed = load_endpoints(a.fixed);
  const EndpointSet moving = load_endpoints(a.moving);
  add_input(m, a.fixed);
  add_input(m, a.moving);
  if (!a.truth.empty()) add_input(m, a.truth);

  const AlignObserver observer = [&](const IterationInfo& i) {
    if (!a.quiet)
      std::fprintf(stderr, "iter %4d  energy %.6e  |grad| %.3e %.3e  step %.3g\n", i.iteration,
                   i.energy, i.gradient_norms[0], i.gradient_norms[1], i.step);
    return true;
  };
  AlignResult r;
  if (encore) {
    if (!cfg.multires_schedule.empty()) throw ConfigError("the baseline has no multiresolution mode");
    r = register_encore(fixed, moving, cfg, observer);
  } else if (!cfg.multires_schedule.empty()) {
    r = run_multiresolution(fixed, moving, cfg, observer);
  } else {
    r = register_endpoints(fixed, moving, cfg, observer);
  }

  const std::string aligned = out_path(c, "aligned.csv");
  const std::string warp = out_path(c, "warp.json");
  const std::string timing = out_path(c, "timing.csv");
  save_endpoints(aligned, r.aligned);
  save_warp(warp, r.warp);
  write_timing_csv(timing, r.timing, r.iterations);
  m.outputs = {aligned, warp, timing};
  if (a.emit_plots) emit_plots(c, m, r, cfg, a.truth);

  m.timings = {{"gradient", r.timing.gradient}, {"update", r.timing.update},
               {"kde", r.timing.kde}, {"total", r.timing.total()}};
  m.summary = {{"iterations", std::to_string(r.iterations)},
               {"converged", r.converged ? "true" : "false"},
               {"stop_reason", to_string(r.stop_reason)},
               {"final_energy", r.energy_trace.empty() ? "" : fmt(r.energy_trace.back())},
               {"final_grad_norm1", r.gradient_norm_trace.empty() ? "" : fmt(r.gradient_norm_trace.back()[0])},
               {"final_grad_norm2", r.gradient_norm_trace.empty() ? "" : fmt(r.gradient_norm_trace.back()[1])},
               {"step_halvings", std::to_string(r.step_halvings)}};
  if (!a.truth.empty()) {
    const auto rep = warp_error_metrics(load_warp(a.truth), r.warp,
                                        build_icosphere(cfg.grid_level), 0.5);
    m.summary.emplace_back("mean_angular_deg_top50", fmt(rep.mean_angular_deg));
    m.summary.emplace_back("mean_l2_top50", fmt(rep.mean_l2));
  }
  save_manifest(out_path(c, "manifest.json"), m);
  print_timing_table(std::cout, r.timing, r.iterations);
  std::cout << "iterations " << r.iterations << "  stop " << to_string(r.stop_reason) << '\n';
  return 0;
}

// ---- mesh ------------------------------------------------------------------

int run_mesh(const Common& c, int level) {
  RunManifest m = start_manifest(c, "mesh");
  m.config = {{"grid_level", std::to_string(level)}};
  const IcosphereMesh mesh = build_icosphere(level);
  const auto weights = vertex_weights(mesh);
  const std::string vpath = out_path(c, "vertices.csv");
  const std::string fpath = out_path(c, "faces.csv");
  {
    std::ofstream out(vpath);
    out << "vertex,x,y,z,weight\n";
    for (std::size_t v = 0; v < mesh.vertex_count(); ++v) {
      const Vec3& p = mesh.vertex(v);
      out << v << ',' << fmt(p.x()) << ',' << fmt(p.y()) << ',' << fmt(p.z()) << ','
          << fmt(weights[v]) << '\n';
    }
  }
  {
    std::ofstream out(fpath);
    out << "face,v0,v1,v2\n";
    for (std::size_t f = 0; f < mesh.face_count(); ++f) {
      const Face& t = mesh.face(f);
      out << f << ',' << t[0] << ',' << t[1] << ',' << t[2] << '\n';
    }
  }
  m.outputs = {vpath, fpath};
  m.summary = {{"vertices", std::to_string(mesh.vertex_count())},
               {"faces", std::to_string(mesh.face_count())},
               {"edges", std::to_string(mesh.edge_count())}};
  save_manifest(out_path(c, "manifest.json"), m);
  std::cout << "level " << level << ": " << mesh.vertex_count() << " vertices, "
            << mesh.face_count() << " faces\n";
  return 0;
}

// ---- simulate --------------------------------------------------------------

struct SimulateArgs {
  std::size_t n = 100000;
  std::uint64_t seed = 1;
  SimDensitySpec density;
  SyntheticWarpSpec warp;
};

int run_simulate(const Common& c, SimulateArgs a) {
  RunManifest m = start_manifest(c, "simulate");
  m.config = {{"n", std::to_string(a.n)},
              {"alpha", fmt(a.density.alpha)},
              {"kappa", fmt(a.density.kappa)},
              {"warp_degree", std::to_string(a.warp.basis_degree)},
              {"amplitude", fmt(a.warp.amplitude)},
              {"steps", std::to_string(a.warp.n_steps)}};
  m.seeds = {{"sample_seed", a.seed}, {"warp_seed", a.warp.seed}};
  const SyntheticInstance inst = make_synthetic_instance(a.density, a.n, a.warp, a.seed);
  const std::string fixed = out_path(c, "fixed.csv");
  const std::string moving = out_path(c, "moving.csv");
  const std::string truth = out_path(c, "truth_warp.json");
  save_endpoints(fixed, inst.fixed);
  save_endpoints(moving, inst.moving);
  save_warp(truth, inst.truth.warp);
  m.outputs = {fixed, moving, truth};
  m.summary = {{"achieved_amplitude", fmt(inst.truth.amplitude)},
               {"amplitude_halvings", std::to_string(inst.truth.amplitude_halvings)}};
  save_manifest(out_path(c, "manifest.json"), m);
  std::cout << "wrote " << a.n << " pairs per subject; warp amplitude " << inst.truth.amplitude
            << " rad\n";
  return 0;
}

// ---- evaluate --------------------------------------------------------------

struct EvaluateArgs {
  std::string a, b, metric = "overlap", label, truth, estimate;
  std::vector<double> taus{0.0};
  int level = 4;
  double sigma = 0.005;
  int hemisphere = 0;
  std::size_t subsample = 0;
  int permutations = 0;
  std::uint64_t seed = 0;
};

int run_evaluate(const Common& c, const EvaluateArgs& a) {
  RunManifest m = start_manifest(c, "evaluate");
  m.config = {{"metric", a.metric}, {"level", std::to_string(a.level)}};
  m.seeds = {{"seed", a.seed}};
  const std::string csv = out_path(c, "metrics.csv");
  std::ofstream out(csv);
  out << "metric,parameter,value,n1,n2\n";
  std::ostringstream echo;
  if (a.metric == "warp-error") {
    if (a.truth.empty() || a.estimate.empty())
      throw ConfigError("warp-error needs --truth and --estimate");
    add_input(m, a.truth);
    add_input(m, a.estimate);
    const auto rep = warp_error_metrics(load_warp(a.truth), load_warp(a.estimate),
                                        build_icosphere(a.level), 0.5);
    out << "mean_angular_deg,0.5," << fmt(rep.mean_angular_deg) << ','
        << rep.evaluated_vertex_count << ",\n";
    out << "mean_l2,0.5," << fmt(rep.mean_l2) << ',' << rep.evaluated_vertex_count << ",\n";
    echo << "mean angular " << rep.mean_angular_deg << " deg, mean L2 " << rep.mean_l2 << '\n';
  } else {
    EndpointSet p1 = load_endpoints(a.a), p2 = load_endpoints(a.b);
    add_input(m, a.a);
    add_input(m, a.b);
    if (!a.label.empty()) {
      p1 = filter_by_label(p1, a.label);
      p2 = filter_by_label(p2, a.label);
      m.config.emplace_back("label", a.label);
    }
    if (a.metric == "overlap") {
      const IcosphereMesh mesh = build_icosphere(a.level);
      const auto c1 = bin_endpoints(p1, mesh), c2 = bin_endpoints(p2, mesh);
      for (double tau : a.taus) {
        const auto r = overlap_coefficient(c1, c2, tau);
        out << "overlap," << fmt(tau) << ',' << fmt(r.overlap) << ',' << c1.n << ',' << c2.n
            << '\n';
        echo << "overlap(tau=" << tau << ") = " << r.overlap << (r.empty ? " (empty set)" : "")
             << '\n';
      }
    } else if (a.metric == "mmd") {
      MmdOptions o;
      o.kernel = make_kernel_spec(a.sigma);
      if (a.hemisphere) o.hemisphere = static_cast<Hemisphere>(a.hemisphere);
      o.subsample = a.subsample;
      o.seed = a.seed;
      m.config.emplace_back("sigma", fmt(a.sigma));
      const double v = mmd(p1, p2, o);
      out << "mmd," << fmt(a.sigma) << ',' << fmt(v) << ',' << p1.size() << ',' << p2.size()
          << '\n';
      echo << "mmd(sigma=" << a.sigma << ") = " << v << '\n';
      if (a.permutations > 0) {
        const auto t = mmd_permutation_test(p1, p2, o, a.permutations);
        out << "mmd2_permutation_p," << fmt(a.sigma) << ',' << fmt(t.p_value) << ','
            << p1.size() << ',' << p2.size() << '\n';
        echo << "permutation p = " << t.p_value << '\n';
      }
    } else {
      throw ConfigError("unknown metric '" + a.metric + "'");
    }
  }
  m.outputs = {csv};
  save_manifest(out_path(c, "manifest.json"), m);
  std::cout << echo.str();
  return 0;
}

// ---- select-bandwidth ------------------------------------------------------

struct SelectArgs {
  std::string fixed, moving, config, method = "overlap";
  std::vector<double> sigmas{0.001, 0.005, 0.01, 0.05};
  std::map<std::string, std::string> overrides;
  double tau = 0.0;
  int bin_level = 4;
};

int run_select(const Common& c, const SelectArgs& a) {
  RunManifest m = start_manifest(c, "select-bandwidth");
  AlignConfig cfg;
  if (!a.config.empty()) {
    cfg = load_config(a.config);
    add_input(m, a.config);
  }
  for (const auto& [k, v] : a.overrides) set_config_value(cfg, k, v);
  m.config = config_entries(cfg);
  m.config.emplace_back("method", a.method);
  const EndpointSet fixed = load_endpoints(a.fixed);
  add_input(m, a.fixed);
  const std::string csv = out_path(c, "bandwidth.csv");
  std::ofstream out(csv);
  std::vector<std::pair<double, double>> scores;
  if (a.method == "lcv") {
    out << "sigma,lcv_score,zero_count\n";
    for (const auto& r : lcv_sweep(fixed, a.sigmas)) {
      out << fmt(r.sigma) << ',' << fmt(r.score) << ',' << r.zero_count << '\n';
      scores.emplace_back(r.sigma, r.score);
    }
  } else if (a.method == "overlap") {
    const EndpointSet moving = load_endpoints(a.moving);
    add_input(m, a.moving);
    if (!fixed.has_labels() || !moving.has_labels())
      throw ConfigError("overlap selection needs labelled endpoint files");
    const IcosphereMesh mesh = build_icosphere(a.bin_level);
    out << "sigma,label,overlap,weight\n";
    for (double sigma : a.sigmas) {
      AlignConfig run = cfg;
      run.sigma = sigma;
      const AlignResult r = register_endpoints(fixed, moving, run);
      std::map<std::string, std::size_t> labels;
      for (const auto& l : fixed.labels) ++labels[l];
      double weighted = 0.0, total_weight = 0.0, plain = 0.0;
      for (const auto& [label, count] : labels) {
        const auto f = filter_by_label(fixed, label);
        EndpointSet g;
        try {
          g = filter_by_label(r.aligned, label);
        } catch (const EmptyAfterFilter&) {
          continue;
        }
        const auto rep = overlap_coefficient(bin_endpoints(f, mesh), bin_endpoints(g, mesh), a.tau);
        const double w = 0.5 * static_cast<double>(f.size() + g.size());
        out << fmt(sigma) << ',' << label << ',' << fmt(rep.overlap) << ',' << fmt(w) << '\n';
        weighted += w * rep.overlap;
        total_weight += w;
        plain += rep.overlap;
      }
      out << fmt(sigma) << ",ALL_EQUAL," << fmt(plain / std::max<std::size_t>(labels.size(), 1))
          << ",\n";
      out << fmt(sigma) << ",ALL_WEIGHTED," << fmt(weighted / std::max(total_weight, 1e-300))
          << ",\n";
      scores.emplace_back(sigma, weighted / std::max(total_weight, 1e-300));
    }
  } else {
    throw ConfigError("unknown selection method '" + a.method + "'");
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i].second > scores[best].second) best = i;
  std::size_t ties = 0;
  for (const auto& s : scores) ties += s.second == scores[best].second;
  m.outputs = {csv};
  m.summary = {{"best_sigma", fmt(scores[best].first)},
               {"best_score", fmt(scores[best].second)},
               {"unique_argmax", ties == 1 ? "true" : "false"}};
  save_manifest(out_path(c, "manifest.json"), m);
  std::cout << "sigma      score\n";
  for (const auto& [s, v] : scores) std::cout << s << "  " << v << '\n';
  std::cout << "best sigma " << scores[best].first << '\n';
  return 0;
}

void add_overrides(CLI::App* app, std::map<std::string, std::string>& o) {
  for (const char* key : {"sigma", "delta", "epsilon", "max_iters", "grid_level", "basis_degree",
                          "kde_every", "seed", "deterministic"}) {
    std::string flag = std::string("--") + key;
    for (auto& ch : flag)
      if (ch == '_') ch = '-';
    app->add_option_function<std::string>(
        flag, [&o, key](const std::string& v) { o[key] = v; }, std::string("override ") + key);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diffeomorphic alignment of paired endpoints on two spheres"};
  app.require_subcommand(1);
  Common common;
  common.argv.assign(argv, argv + argc);
  app.add_option("-o,--out-dir", common.out_dir, "output directory")->capture_default_str();

  int mesh_level = 4;
  auto* mesh = app.add_subcommand("mesh", "write icosphere vertices, weights and faces");
  mesh->add_option("-g,--level", mesh_level, "subdivision level")->capture_default_str();

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "sample a synthetic fixed/moving pair");
  simulate->add_option("-n,--pairs", sim.n, "pairs per subject")->capture_default_str();
  simulate->add_option("--seed", sim.seed, "sampling seed")->capture_default_str();
  simulate->add_option("--alpha", sim.density.alpha)->capture_default_str();
  simulate->add_option("--kappa", sim.density.kappa)->capture_default_str();
  simulate->add_option("--amplitude", sim.warp.amplitude, "mean warp displacement (rad)")
      ->capture_default_str();
  simulate->add_option("--warp-degree", sim.warp.basis_degree)->capture_default_str();
  simulate->add_option("--warp-steps", sim.warp.n_steps)->capture_default_str();
  simulate->add_option("--warp-seed", sim.warp.seed)->capture_default_str();

  RegisterArgs reg, enc;
  CLI::App* registers[2] = {
      app.add_subcommand("register", "align moving to fixed by direct endpoint updates"),
      app.add_subcommand("register-encore", "align with the grid-warping baseline")};
  for (int i = 0; i < 2; ++i) {
    RegisterArgs& r = i ? enc : reg;
    CLI::App* s = registers[i];
    s->add_option("--fixed", r.fixed, "fixed endpoint CSV")->required()->check(CLI::ExistingFile);
    s->add_option("--moving", r.moving, "moving endpoint CSV")->required()->check(CLI::ExistingFile);
    s->add_option("-c,--config", r.config, "key=value config file")->check(CLI::ExistingFile);
    s->add_option("--truth", r.truth, "ground-truth warp for error reporting")
        ->check(CLI::ExistingFile);
    if (i == 0) s->add_option("--multires", r.multires, "stages level:sigma,level:sigma");
    s->add_flag("--emit-plots", r.emit_plots, "write trace and residual CSV series");
    s->add_flag("-q,--quiet", r.quiet, "no per-iteration log");
    add_overrides(s, r.overrides);
  }

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "overlap, MMD or warp error");
  evaluate->add_option("--a", ev.a, "first endpoint CSV");
  evaluate->add_option("--b", ev.b, "second endpoint CSV");
  evaluate->add_option("--metric", ev.metric, "overlap | mmd | warp-error")
      ->check(CLI::IsMember({"overlap", "mmd", "warp-error"}))
      ->capture_default_str();
  evaluate->add_option("--tau", ev.taus, "overlap thresholds");
  evaluate->add_option("--level", ev.level, "binning / evaluation grid level")->capture_default_str();
  evaluate->add_option("--sigma", ev.sigma, "MMD kernel bandwidth")->capture_default_str();
  evaluate->add_option("--label", ev.label, "restrict to one bundle label");
  evaluate->add_option("--hemisphere", ev.hemisphere, "MMD on pairs within hemisphere 1 or 2")
      ->check(CLI::Range(0, 2));
  evaluate->add_option("--subsample", ev.subsample, "MMD pairs per set (0 = all)");
  evaluate->add_option("--permutations", ev.permutations, "MMD permutation test size");
  evaluate->add_option("--seed", ev.seed);
  evaluate->add_option("--truth", ev.truth, "truth warp (warp-error)");
  evaluate->add_option("--estimate", ev.estimate, "estimated warp (warp-error)");

  SelectArgs sel;
  auto* select = app.add_subcommand("select-bandwidth", "sweep sigma by bundle overlap or LCV");
  select->add_option("--fixed", sel.fixed)->required()->check(CLI::ExistingFile);
  select->add_option("--moving", sel.moving)->check(CLI::ExistingFile);
  select->add_option("-c,--config", sel.config)->check(CLI::ExistingFile);
  select->add_option("--sigmas", sel.sigmas)->delimiter(',')->capture_default_str();
  select->add_option("--method", sel.method)->check(CLI::IsMember({"overlap", "lcv"}));
  select->add_option("--tau", sel.tau)->capture_default_str();
  select->add_option("--bin-level", sel.bin_level)->capture_default_str();
  add_overrides(select, sel.overrides);

  CLI11_PARSE(app, argc, argv);

  std::string command = app.get_subcommands().front()->get_name();
  try {
    fs::create_directories(common.out_dir);
    if (command == "mesh") return run_mesh(common, mesh_level);
    if (command == "simulate") return run_simulate(common, sim);
    if (command == "register") return run_register(common, reg, false);
    if (command == "register-encore") return run_register(common, enc, true);
    if (command == "evaluate") return run_evaluate(common, ev);
    return run_select(common, sel);
  } catch (const std::exception& e) {
    std::string type = "Error";
    if (dynamic_cast<const ParseError*>(&e)) type = "ParseError";
    else if (dynamic_cast<const NormError*>(&e)) type = "NormError";
    else if (dynamic_cast<const ConfigError*>(&e)) type = "ConfigError";
    else if (dynamic_cast<const SchemaVersionError*>(&e)) type = "SchemaVersionError";
    else if (dynamic_cast<const EmptyAfterFilter*>(&e)) type = "EmptyAfterFilter";
    else if (dynamic_cast<const MeshMismatch*>(&e)) type = "MeshMismatch";
    else if (dynamic_cast<const SingularNeighborhood*>(&e)) type = "SingularNeighborhood";
    std::string msg = e.what();
    std::string escaped;
    for (char ch : msg) {
      if (ch == '"' || ch == '\\') escaped += '\\';
      escaped += ch;
    }
    std::cerr << "{\"error\":\"" << type << "\",\"command\":\"" << command << "\",\"message\":\""
              << escaped << "\"}\n";
    try {
      RunManifest m = start_manifest(common, command);
      m.ok = false;
      m.error_type = type;
      m.error_message = msg;
      save_manifest(out_path(common, "manifest.json"), m);
    } catch (...) {
    }
    return 1;
  }
}
