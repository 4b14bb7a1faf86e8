#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace great {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidSizeError : Error {
  using Error::Error;
};

struct ShapeError : Error {
  using Error::Error;
};

struct NumericError : Error {
  using Error::Error;
};

struct NoValidActionError : Error {
  using Error::Error;
};

struct IllegalMoveError : Error {
  using Error::Error;
};

struct ContractError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& field, const std::string& detail = "")
      : Error("bad config field '" + field + "'" + (detail.empty() ? "" : ": " + detail)),
        field(field) {}
  std::string field;
};

struct ParseError : Error {
  ParseError(const std::string& what, std::size_t byte_offset)
      : Error(what + " (byte " + std::to_string(byte_offset) + ")"), byte_offset(byte_offset) {}
  std::size_t byte_offset;
};

struct SizeLimitError : Error {
  using Error::Error;
};

struct CheckpointVersionError : Error {
  using Error::Error;
};

struct CheckpointTruncatedError : Error {
  using Error::Error;
};

struct CheckpointShapeError : Error {
  using Error::Error;
};

}  // namespace great
