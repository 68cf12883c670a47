#ifndef FAIRGRAD_ERRORS_HPP
#define FAIRGRAD_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace fairgrad {

/// Base class for every error this library raises on purpose.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Operands with incompatible shapes, or a reduction applied to the wrong rank.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Math applied outside its domain (log of a non-positive value, division by zero).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A NaN or infinity showed up in a value or gradient buffer.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A group's statistic denominator vanished, so its ratio is undefined.
class DegenerateGroupError : public Error {
 public:
  DegenerateGroupError(const std::string& what, long group) : Error(what), group_(group) {}
  long group() const { return group_; }

 private:
  long group_;
};

/// A projection constraint cannot be satisfied by any score vector.
class InfeasibleError : public Error {
 public:
  InfeasibleError(const std::string& what, long group) : Error(what), group_(group) {}
  long group() const { return group_; }

 private:
  long group_;
};

/// Invalid dataset schema, unparsable CSV, or rows that violate the schema.
class DataError : public Error {
 public:
  using Error::Error;
};

/// A metric that is undefined on the given inputs (e.g. AUROC with one class).
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

/// Bad configuration handed to the CLI or the runners.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace fairgrad

#endif
