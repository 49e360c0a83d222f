#pragma once

#include <stdexcept>
#include <string>

namespace rsp {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid dimension, rank or order argument.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Operands have incompatible shapes or (d, k) signatures.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Missing or inconsistent register metadata, bad bipartition.
class StructureError : public Error {
 public:
  using Error::Error;
};

/// Scalar argument outside its documented domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A validated constructor rejected its input (Hermiticity, PSD, trace,
/// idempotence, normalization).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Randomized construction exhausted its retry budget.
class ConstructionError : public Error {
 public:
  using Error::Error;
};

}  // namespace rsp
