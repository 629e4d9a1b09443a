#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace geotomo {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Syntax error while parsing an expression; offset is a byte position in the source.
struct ParseError : Error {
  std::size_t offset;
  ParseError(const std::string& msg, std::size_t off)
      : Error(msg + " (at offset " + std::to_string(off) + ")"), offset(off) {}
};

// Domain error while evaluating an expression (log of non-positive, division by zero, ...).
struct EvalError : Error {
  std::size_t offset;
  EvalError(const std::string& msg, std::size_t off)
      : Error(msg + " (at offset " + std::to_string(off) + ")"), offset(off) {}
};

// Invalid configuration file or parameter values.
struct ConfigError : Error {
  int line;        // 1-based line in the config file, 0 if not tied to a line
  std::string key; // offending key, may be empty
  ConfigError(const std::string& msg, int ln = 0, std::string k = {})
      : Error(msg + locate(ln, k)), line(ln), key(std::move(k)) {}

private:
  static std::string locate(int ln, const std::string& k) {
    if (ln > 0 && !k.empty()) return " (line " + std::to_string(ln) + ", key '" + k + "')";
    if (ln > 0) return " (line " + std::to_string(ln) + ")";
    if (!k.empty()) return " (key '" + k + "')";
    return {};
  }
};

// Runtime numerical failure (non-convergence, singular metric, trapping, ...).
struct NumericalError : Error {
  explicit NumericalError(const std::string& msg) : Error(msg) {}
};

} // namespace geotomo
