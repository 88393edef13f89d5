#pragma once

#include <stdexcept>
#include <string>

namespace vwg {

// Base class for every error this library raises on contract violations.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct MalformedFile : Error {
  using Error::Error;
};
struct BoxOutOfBounds : Error {
  using Error::Error;
};
struct UnknownField : Error {
  using Error::Error;
};
struct DatasetTooSmall : Error {
  using Error::Error;
};
struct DimensionMismatch : Error {
  using Error::Error;
};
struct MalformedLine : Error {
  MalformedLine(std::size_t line, const std::string& msg)
      : Error("line " + std::to_string(line) + ": " + msg), line_number(line) {}
  std::size_t line_number;
};
struct MissingImage : Error {
  using Error::Error;
};
struct ShapeMismatch : Error {
  using Error::Error;
};
struct IoFailure : Error {
  using Error::Error;
};
struct BadMagic : Error {
  using Error::Error;
};
struct ShapeOverflow : Error {
  using Error::Error;
};
struct VersionMismatch : Error {
  using Error::Error;
};
struct NonFiniteGradient : Error {
  using Error::Error;
};
struct EmptySplit : Error {
  using Error::Error;
};
struct MissingPrediction : Error {
  using Error::Error;
};
struct NoEvaluableFields : Error {
  using Error::Error;
};

}  // namespace vwg
