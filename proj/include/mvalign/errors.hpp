#pragma once

#include <stdexcept>
#include <string>

namespace mvalign {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Inputs violate a documented precondition (shape mismatch, bad value).
struct InvalidInputError : Error {
  using Error::Error;
};

/// Inputs are structurally valid but numerically unusable: too few effective
/// points, collinear support, empty masks.
struct DegenerateInputError : Error {
  using Error::Error;
};

/// A state object violates one of its invariants.
struct InvalidStateError : Error {
  using Error::Error;
};

/// View-graph structure problems (missing reverse predictions, bad view ids).
struct GraphError : InvalidInputError {
  using InvalidInputError::InvalidInputError;
};

/// The view graph does not connect all views.
struct DisconnectedGraphError : GraphError {
  using GraphError::GraphError;
};

/// Optimization produced a non-finite objective or gradient.
struct DivergedError : Error {
  int step = -1;
  DivergedError(int step_index, const std::string& what) : Error(what), step(step_index) {}
};

/// Rank correlation requested on constant input.
struct UndefinedCorrelationError : DegenerateInputError {
  using DegenerateInputError::DegenerateInputError;
};

/// File-format or filesystem failure.
struct IoError : Error {
  using Error::Error;
};

/// Ground truth required but absent from the manifest.
struct MissingGroundTruthError : Error {
  using Error::Error;
};

}  // namespace mvalign
