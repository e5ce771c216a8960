#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sphalign {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class AntipodalError : public Error {
 public:
  using Error::Error;
};

class LevelTooLarge : public Error {
 public:
  using Error::Error;
};

class DegreeTooLarge : public Error {
 public:
  using Error::Error;
};

class EmptyEndpointSet : public Error {
 public:
  using Error::Error;
};

class SingularNeighborhood : public Error {
 public:
  using Error::Error;
};

class MeshMismatch : public Error {
 public:
  using Error::Error;
};

class EmptyAfterFilter : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class NormError : public Error {
 public:
  using Error::Error;
};

class SchemaVersionError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file; carries the 1-based line number (0 when not line-specific).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace sphalign
