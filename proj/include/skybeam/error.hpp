#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace skybeam {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated (bad shape, out-of-range index, non-finite value).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// A multipath component arrives after the cyclic prefix.
class CyclicPrefixViolation : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Invalid experiment or scenario configuration. `field` names the offending key.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// An upstream pipeline artifact is missing or was produced by a different config.
class DependencyError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void require(bool cond, const char* msg) {
  if (!cond) throw InvalidInput(msg);
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw InvalidInput(msg);
}

}  // namespace detail
}  // namespace skybeam
