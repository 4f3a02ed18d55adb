#pragma once

#include <stdexcept>
#include <string>

namespace sdebridge {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A matrix required to be (semi)definite failed its factorisation.
struct NotPositiveDefinite : Error {
    using Error::Error;
};

/// The observed-block covariance of a conditioning step is singular.
struct SingularObservationBlock : Error {
    using Error::Error;
};

/// A simulated state violated the model's admissibility predicate.
struct InadmissibleState : Error {
    using Error::Error;
};

/// An ODE state became NaN/Inf during integration.
struct NonFiniteState : Error {
    using Error::Error;
};

/// The LNA fundamental matrix became numerically singular.
struct SingularFundamentalMatrix : Error {
    using Error::Error;
};

/// A proposal step covariance is singular where a density is required.
struct DegenerateStep : Error {
    using Error::Error;
};

struct UnknownModel : Error {
    using Error::Error;
};

struct BadParameterCount : Error {
    using Error::Error;
};

/// The sampler could not find an admissible initial bridge.
struct InitialisationFailed : Error {
    using Error::Error;
};

struct BadConfig : Error {
    using Error::Error;
};

}  // namespace sdebridge
