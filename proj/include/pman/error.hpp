#pragma once

#include <stdexcept>
#include <string>

namespace pman {

/// Bad user input: malformed config, wrong image size, missing files.
/// The CLI maps this to exit code 1.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A broken internal contract: shape mismatch inside a graph, non-finite
/// values, violated invariants. The CLI maps this to exit code 2.
class InvariantError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class ShapeError : public InvariantError {
public:
    using InvariantError::InvariantError;
};

class NonFiniteError : public InvariantError {
public:
    using InvariantError::InvariantError;
};

/// Malformed or truncated checkpoint container.
class FormatError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// Part localization could not find enough evidence (e.g. fewer non-empty
/// attention channels than requested parts).
class InsufficientEvidence : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace pman
