#pragma once

#include <stdexcept>
#include <string>

namespace xtalgen {

// Base for every error raised by the library. Subclasses let callers (the CLI in
// particular) map failures to exit codes without string matching.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DegenerateCellError : public Error {
 public:
  using Error::Error;
};

class UnknownElementError : public Error {
 public:
  explicit UnknownElementError(const std::string& symbol, const std::string& context = {})
      : Error((context.empty() ? "" : context + ": ") + "unknown element symbol '" + symbol + "'"),
        symbol_(symbol) {}
  const std::string& symbol() const { return symbol_; }

 private:
  std::string symbol_;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class SamplingError : public Error {
 public:
  using Error::Error;
};

class ConditioningError : public Error {
 public:
  using Error::Error;
};

class BudgetExhaustedError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace xtalgen
