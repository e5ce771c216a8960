#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "sphalign/align.hpp"
#include "sphalign/density.hpp"
#include "sphalign/warp.hpp"

namespace sphalign {

/// Endpoint CSV: header id,hemi1,x1,y1,z1,hemi2,x2,y2,z2 with an optional
/// trailing label column. Points within 1e-3 of unit norm are re-normalized;
/// others raise NormError. Malformed rows raise ParseError with the line number.
EndpointSet read_endpoints(std::istream& in);
EndpointSet load_endpoints(const std::string& path);
/// Shortest round-trip decimal floats; the label column is written when present.
void write_endpoints(std::ostream& out, const EndpointSet& pts);
void save_endpoints(const std::string& path, const EndpointSet& pts);

constexpr int kWarpFormatVersion = 1;

/// Versioned JSON document with one entry per increment. Doubles round-trip
/// exactly.
std::string warp_to_json(const WarpSequence& warp);
/// Throws SchemaVersionError on an unknown version and ParseError on a
/// truncated or malformed document.
WarpSequence warp_from_json(const std::string& text);
void save_warp(const std::string& path, const WarpSequence& warp);
WarpSequence load_warp(const std::string& path);

/// Flat key=value configuration (sigma, delta, epsilon, max_iters, grid_level,
/// basis_degree, kde_every, seed, deterministic); '#' starts a comment.
/// Values override `base`. Throws ConfigError naming the line.
AlignConfig read_config(std::istream& in, AlignConfig base = {});
AlignConfig load_config(const std::string& path, AlignConfig base = {});
/// Sets one key; throws ConfigError on unknown keys or bad values.
void set_config_value(AlignConfig& cfg, const std::string& key, const std::string& value);
/// The resolved configuration as ordered key/value pairs (parseable by read_config).
std::vector<std::pair<std::string, std::string>> config_entries(const AlignConfig& cfg);

/// Lower-case hex SHA-256 of a file's bytes.
std::string file_sha256(const std::string& path);

/// Record of one CLI run.
struct RunManifest {
  struct Input {
    std::string path;
    std::string sha256;
  };
  std::string command;
  std::vector<std::string> argv;
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<std::pair<std::string, std::uint64_t>> seeds;
  std::vector<Input> inputs;
  std::vector<std::pair<std::string, double>> timings;  // seconds
  std::vector<std::string> outputs;
  std::vector<std::pair<std::string, std::string>> summary;
  bool ok = true;
  std::string error_type, error_message;
  bool deterministic = true;  // omits the wall-clock timestamp
};

std::string manifest_to_json(const RunManifest& m);
void save_manifest(const std::string& path, const RunManifest& m);

}  // namespace sphalign
