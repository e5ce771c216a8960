#include "sphalign/io.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "sphalign/errors.hpp"

namespace sphalign {

namespace {

constexpr const char* kHeader = "id,hemi1,x1,y1,z1,hemi2,x2,y2,z2";

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) return out;
    start = pos + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

template <class T>
bool parse_number(std::string_view s, T& out) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && !s.empty();
}

HemiPoint parse_endpoint(const std::vector<std::string_view>& f, std::size_t at,
                         std::size_t line) {
  int hemi = 0;
  if (!parse_number(f[at], hemi) || (hemi != 1 && hemi != 2))
    throw ParseError("hemisphere must be 1 or 2, got '" + std::string(f[at]) + "'", line);
  Vec3 v;
  for (int k = 0; k < 3; ++k) {
    if (!parse_number(f[at + 1 + k], v[k]) || !std::isfinite(v[k]))
      throw ParseError("bad coordinate '" + std::string(f[at + 1 + k]) + "'", line);
  }
  const double norm = v.norm();
  if (!(std::abs(norm - 1.0) <= 1e-3))
    throw NormError("line " + std::to_string(line) + ": endpoint norm " + std::to_string(norm) +
                    " is not within 1e-3 of 1");
  return {static_cast<Hemisphere>(hemi), SpherePoint(v)};
}

std::string format_double(double x) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  return out;
}

}  // namespace

EndpointSet read_endpoints(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw ParseError("empty endpoint file", 1);
  ++lineno;
  const std::string_view header = trim(line);
  bool labelled = false;
  if (header == std::string(kHeader) + ",label") {
    labelled = true;
  } else if (header != kHeader) {
    throw ParseError("expected header '" + std::string(kHeader) + "[,label]'", 1);
  }
  const std::size_t columns = labelled ? 10 : 9;
  EndpointSet pts;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view row = trim(line);
    if (row.empty()) continue;
    const auto f = split(row, ',');
    if (f.size() != columns)
      throw ParseError("expected " + std::to_string(columns) + " columns, got " +
                           std::to_string(f.size()), lineno);
    std::int64_t id = 0;
    if (!parse_number(f[0], id)) throw ParseError("bad id '" + std::string(f[0]) + "'", lineno);
    pts.pairs.push_back({parse_endpoint(f, 1, lineno), parse_endpoint(f, 5, lineno)});
    pts.ids.push_back(id);
    if (labelled) pts.labels.emplace_back(trim(f[9]));
  }
  return pts;
}

EndpointSet load_endpoints(const std::string& path) {
  auto in = open_in(path);
  return read_endpoints(in);
}

void write_endpoints(std::ostream& out, const EndpointSet& pts) {
  out << kHeader << (pts.has_labels() ? ",label\n" : "\n");
  for (std::size_t i = 0; i < pts.size(); ++i) {
    out << (pts.ids.empty() ? static_cast<std::int64_t>(i) : pts.ids[i]);
    for (const HemiPoint* e : {&pts[i].first, &pts[i].second}) {
      out << ',' << static_cast<int>(e->hemi);
      for (int k = 0; k < 3; ++k) out << ',' << format_double(e->point.coords()[k]);
    }
    if (pts.has_labels()) out << ',' << pts.labels[i];
    out << '\n';
  }
}

void save_endpoints(const std::string& path, const EndpointSet& pts) {
  auto out = open_out(path);
  write_endpoints(out, pts);
}

std::string warp_to_json(const WarpSequence& warp) {
  nlohmann::json j;
  j["format"] = "sphalign-warp";
  j["version"] = kWarpFormatVersion;
  j["basis"] = "real-vector-spherical-harmonics";
  j["increments"] = nlohmann::json::array();
  for (const auto& inc : warp.increments) {
    j["increments"].push_back({{"step", inc.step},
                               {"degree", inc.degree},
                               {"coeffs1", inc.coeffs1},
                               {"coeffs2", inc.coeffs2}});
  }
  return j.dump(1) + "\n";
}

WarpSequence warp_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("warp file is not valid JSON: ") + e.what(), 0);
  }
  if (!j.is_object() || !j.contains("version") || !j["version"].is_number_integer())
    throw SchemaVersionError("warp file has no integer version field");
  if (j["version"].get<int>() != kWarpFormatVersion)
    throw SchemaVersionError("unsupported warp format version " + j["version"].dump());
  if (!j.contains("increments") || !j["increments"].is_array())
    throw ParseError("warp file has no increments array", 0);
  WarpSequence w;
  try {
    for (const auto& e : j["increments"]) {
      WarpIncrement inc;
      inc.step = e.at("step").get<double>();
      inc.degree = e.at("degree").get<int>();
      inc.coeffs1 = e.at("coeffs1").get<std::vector<double>>();
      inc.coeffs2 = e.at("coeffs2").get<std::vector<double>>();
      if (inc.degree < 1 || inc.degree > kMaxBasisDegree)
        throw ParseError("increment degree out of range", 0);
      const std::size_t m = basis_size(inc.degree);
      if (inc.coeffs1.size() != m || inc.coeffs2.size() != m)
        throw ParseError("coefficient count does not match the basis degree", 0);
      w.increments.push_back(std::move(inc));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed warp increment: ") + e.what(), 0);
  }
  return w;
}

void save_warp(const std::string& path, const WarpSequence& warp) {
  auto out = open_out(path);
  out << warp_to_json(warp);
}

WarpSequence load_warp(const std::string& path) {
  auto in = open_in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return warp_from_json(ss.str());
}

void set_config_value(AlignConfig& cfg, const std::string& key, const std::string& value) {
  const auto bad = [&] { return ConfigError("bad value '" + value + "' for " + key); };
  const auto real = [&](double& out) {
    if (!parse_number(value, out)) throw bad();
  };
  const auto integer = [&](int& out) {
    if (!parse_number(value, out)) throw bad();
  };
  if (key == "sigma") real(cfg.sigma);
  else if (key == "delta") real(cfg.step);
  else if (key == "epsilon") real(cfg.tol);
  else if (key == "max_iters") integer(cfg.max_iters);
  else if (key == "grid_level") integer(cfg.grid_level);
  else if (key == "basis_degree") integer(cfg.basis_degree);
  else if (key == "kde_every") integer(cfg.kde_every);
  else if (key == "seed") {
    if (!parse_number(value, cfg.seed)) throw bad();
  } else if (key == "deterministic") {
    const std::string v(trim(value));
    if (v == "true" || v == "1") cfg.deterministic = true;
    else if (v == "false" || v == "0") cfg.deterministic = false;
    else throw bad();
  } else {
    throw ConfigError("unknown configuration key '" + key + "'");
  }
}

AlignConfig read_config(std::istream& in, AlignConfig base) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view s = line;
    if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    try {
      set_config_value(base, std::string(trim(s.substr(0, eq))),
                       std::string(trim(s.substr(eq + 1))));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

AlignConfig load_config(const std::string& path, AlignConfig base) {
  auto in = open_in(path);
  return read_config(in, std::move(base));
}

std::vector<std::pair<std::string, std::string>> config_entries(const AlignConfig& cfg) {
  return {{"sigma", format_double(cfg.sigma)},
          {"delta", format_double(cfg.step)},
          {"epsilon", format_double(cfg.tol)},
          {"max_iters", std::to_string(cfg.max_iters)},
          {"grid_level", std::to_string(cfg.grid_level)},
          {"basis_degree", std::to_string(cfg.basis_degree)},
          {"kde_every", std::to_string(cfg.kde_every)},
          {"seed", std::to_string(cfg.seed)},
          {"deterministic", cfg.deterministic ? "true" : "false"}};
}

std::string file_sha256(const std::string& path) {
  auto in = open_in(path);
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i)
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return hex.str();
}

std::string manifest_to_json(const RunManifest& m) {
  nlohmann::ordered_json j;
  j["manifest_version"] = 1;
  j["command"] = m.command;
  j["argv"] = m.argv;
  if (!m.deterministic) {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    j["created_utc"] = buf;
  }
  j["status"] = m.ok ? "ok" : "error";
  if (!m.ok) j["error"] = {{"type", m.error_type}, {"message", m.error_message}};
  auto& cfg = j["config"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : m.config) cfg[k] = v;
  auto& seeds = j["seeds"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : m.seeds) seeds[k] = v;
  j["inputs"] = nlohmann::ordered_json::array();
  for (const auto& in : m.inputs) j["inputs"].push_back({{"path", in.path}, {"sha256", in.sha256}});
  auto& timings = j["timings_seconds"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : m.timings) timings[k] = v;
  j["outputs"] = m.outputs;
  auto& summary = j["summary"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : m.summary) summary[k] = v;
  return j.dump(2) + "\n";
}

void save_manifest(const std::string& path, const RunManifest& m) {
  auto out = open_out(path);
  out << manifest_to_json(m);
}

}  // namespace sphalign
