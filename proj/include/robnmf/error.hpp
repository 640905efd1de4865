#pragma once

#include <stdexcept>
#include <string>

namespace robnmf {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes do not agree, or a size parameter is out of range.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A non-finite value showed up where a finite one is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file (PGM, CSV, config).
class ParseError : public Error {
 public:
  using Error::Error;
};

class UnsupportedError : public Error {
 public:
  using Error::Error;
};

/// A metric is undefined for the given input (e.g. RRE against an all-zero matrix).
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace robnmf
