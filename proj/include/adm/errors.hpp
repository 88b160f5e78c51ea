#pragma once

#include <stdexcept>

namespace adm {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// linalg
struct NotPositiveDefiniteError : Error { using Error::Error; };
struct DimensionMismatchError : Error { using Error::Error; };
struct NoConvergenceError : Error { using Error::Error; };
struct NotPsdError : Error { using Error::Error; };

// measures / numerics
struct NumericalError : Error { using Error::Error; };
struct NonFiniteError : Error { using Error::Error; };
struct KTooLargeError : Error { using Error::Error; };

// datasets / IO
struct FormatError : Error { using Error::Error; };
struct InconsistentDimError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct InvalidSpecError : Error { using Error::Error; };

// distributions
struct TooFewClassesError : Error { using Error::Error; };

// episodes
struct InsufficientClassesError : Error { using Error::Error; };
struct InsufficientImagesError : Error { using Error::Error; };

// model / training
struct MissingContextError : Error { using Error::Error; };
struct NonFiniteGradientError : Error { using Error::Error; };

}  // namespace adm
