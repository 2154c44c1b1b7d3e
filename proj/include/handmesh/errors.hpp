#pragma once

#include <stdexcept>
#include <string>

namespace handmesh {

// Base class for everything thrown by this library.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/graph shape inconsistencies.
struct ShapeError : Error {
  using Error::Error;
};

// A graph leaf was evaluated without a bound value.
struct BindingError : Error {
  using Error::Error;
};

// An API precondition was violated (e.g. non-scalar backward root).
struct ContractError : Error {
  using Error::Error;
};

// A non-finite value surfaced during checked evaluation.
struct NumericError : Error {
  using Error::Error;
};

// Invalid numeric domain (non-positive variance, empty point set, ...).
struct DomainError : Error {
  using Error::Error;
};

// A document failed to parse against its schema.
struct ParseError : Error {
  using Error::Error;
};

// A parsed document violated a semantic invariant.
struct ValidationError : Error {
  using Error::Error;
};

// Geometry too degenerate for the requested operation.
struct DegenerateGeometryError : Error {
  using Error::Error;
};

// Two artifacts (checkpoint, dataset, template) do not belong together.
struct CompatibilityError : Error {
  using Error::Error;
};

}  // namespace handmesh
