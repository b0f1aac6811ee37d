#pragma once

#include <stdexcept>
#include <string>

namespace psdyn {

// Exit-code families used by the CLI: validation -> 1, numerical -> 2, io -> 3.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ValidationError : Error {
  using Error::Error;
};

struct NumericalError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

struct NoEquilibrium : ValidationError {
  using ValidationError::ValidationError;
};

struct ZeroDamping : ValidationError {
  using ValidationError::ValidationError;
};

struct SingularIsland : ValidationError {
  using ValidationError::ValidationError;
};

struct UnknownBus : ValidationError {
  using ValidationError::ValidationError;
};

struct UnknownBranch : ValidationError {
  using ValidationError::ValidationError;
};

struct ZeroVoltage : ValidationError {
  using ValidationError::ValidationError;
};

struct IncompleteCharacterization : ValidationError {
  using ValidationError::ValidationError;
};

struct ParseError : ValidationError {
  using ValidationError::ValidationError;
};

struct NonConvergence : NumericalError {
  using NumericalError::NumericalError;
};

struct JacobianSingular : NumericalError {
  using NumericalError::NumericalError;
};

struct NewtonDivergence : NumericalError {
  using NumericalError::NumericalError;
};

struct Divergence : NumericalError {
  using NumericalError::NumericalError;
};

struct InitializationInfeasible : NumericalError {
  using NumericalError::NumericalError;
};

struct SingularAlgebraicJacobian : NumericalError {
  using NumericalError::NumericalError;
};

struct DimensionMismatch : ValidationError {
  using ValidationError::ValidationError;
};

}  // namespace psdyn
