#pragma once

#include <stdexcept>
#include <string>

namespace mvae {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Dimension mismatch between operands.
struct ShapeError : Error {
    using Error::Error;
};

/// Invalid static configuration (model shapes, train settings, ...).
struct ConfigError : Error {
    using Error::Error;
};

/// Invalid runtime argument (bad index, empty input, ...).
struct ArgumentError : Error {
    using Error::Error;
};

/// Operation called in the wrong order (e.g. backward before forward).
struct StateError : Error {
    using Error::Error;
};

/// Model file I/O or format failure.
struct PersistenceError : Error {
    using Error::Error;
};

/// CSV/manifest ingestion failure; message carries file and line.
struct IngestionError : Error {
    using Error::Error;
};

/// Stratified label masking infeasible for the requested fraction.
struct MaskingError : Error {
    using Error::Error;
};

/// Minibatch stream cannot be constructed (e.g. no labeled pool).
struct IterationError : Error {
    using Error::Error;
};

/// Optimizer received or produced non-finite values; names the block.
struct OptimizerError : Error {
    using Error::Error;
};

}  // namespace mvae
