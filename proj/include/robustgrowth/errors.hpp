#pragma once

#include <stdexcept>
#include <string>

namespace rg {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// grid / model construction
struct BadResolution : Error { using Error::Error; };
struct BadDomain : Error { using Error::Error; };
struct EvaluatorFailure : Error { using Error::Error; };
struct ParamViolation : Error { using Error::Error; };

// averaging and field algebra
struct QuadratureOverflow : Error { using Error::Error; };
struct DivideByZeroDensity : Error { using Error::Error; };

// elliptic solves
struct SingularSystem : Error { using Error::Error; };
struct NoConvergence : Error { using Error::Error; };

// worst-case pipeline
struct BadNesting : Error { using Error::Error; };
struct MeanNotZero : Error { using Error::Error; };
struct SingularSlice : Error { using Error::Error; };
struct WrongSetting : Error { using Error::Error; };

// diagnostics
struct ResolutionTooCoarse : Error { using Error::Error; };

// simulation
struct OutOfDomain : Error { using Error::Error; };
struct StepRejectionOverflow : Error { using Error::Error; };

// cli / io
struct BadConfig : Error { using Error::Error; };

}  // namespace rg
