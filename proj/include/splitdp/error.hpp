#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace splitdp {

// Base for every error raised by the library. `kind()` is a stable tag used
// in the CLI's machine-readable error output.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual const char* kind() const noexcept { return "error"; }
};

class ShapeError : public Error {
 public:
  // layer == npos when the mismatch is not attributable to a single layer.
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  explicit ShapeError(const std::string& what, std::size_t layer = npos)
      : Error(layer == npos ? what
                            : "layer " + std::to_string(layer) + ": " + what),
        layer_(layer) {}
  std::size_t layer() const noexcept { return layer_; }
  const char* kind() const noexcept override { return "shape"; }

 private:
  std::size_t layer_;
};

class RangeError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "range"; }
};

class LinkDownError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "link_down"; }
};

class NumericError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "numeric"; }
};

class BudgetError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "budget"; }
};

// Configuration problems carry the dotted path of the offending field.
class ConfigError : public Error {
 public:
  ConfigError(std::string path, std::string message)
      : Error(path.empty() ? message : path + ": " + message), path_(std::move(path)), message_(std::move(message)) {}
  const std::string& path() const noexcept { return path_; }
  const std::string& message() const noexcept { return message_; }  // without the path prefix
  const char* kind() const noexcept override { return "config"; }

 private:
  std::string path_;
  std::string message_;
};

class IoError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "io"; }
};

}  // namespace splitdp
