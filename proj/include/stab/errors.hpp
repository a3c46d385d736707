#pragma once

#include <stdexcept>
#include <string>

namespace stab {

// Base class for every error raised by the library. Specific conditions get
// their own type so callers can react to (or tests can assert on) the exact
// failure mode.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DegenerateProjection : Error { using Error::Error; };
struct InsufficientPoints : Error { using Error::Error; };
struct DegenerateConfiguration : Error { using Error::Error; };
struct NoConsensus : Error { using Error::Error; };
struct InvalidDimensions : Error { using Error::Error; };
struct OutOfBounds : Error { using Error::Error; };
struct TooFewFeatures : Error { using Error::Error; };
struct DimensionMismatch : Error { using Error::Error; };
struct IndexMismatch : Error { using Error::Error; };
struct TooFewPoints : Error { using Error::Error; };
struct ShapeMismatch : Error { using Error::Error; };
struct NonFiniteObjective : Error { using Error::Error; };
struct BadKernelFile : Error { using Error::Error; };
struct BadBaseImage : Error { using Error::Error; };
struct MinimalCrop : Error { using Error::Error; };
struct TooShort : Error { using Error::Error; };
struct BadConfig : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

}  // namespace stab
