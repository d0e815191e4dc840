#pragma once

#include <stdexcept>
#include <string>

namespace latst {

// Base class for all library errors. Subclasses map onto the CLI exit codes:
// ConfigError -> 1, DataError/CheckpointError -> 2, InstabilityError -> 3.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape/rank mismatch between tensors (e.g. matmul inner dimensions).
struct DimensionError : Error {
    using Error::Error;
};

// Mathematically invalid input (log of non-positive value, bad step size).
struct DomainError : Error {
    using Error::Error;
};

// A documented precondition or invariant was violated by the caller.
struct ContractError : Error {
    using Error::Error;
};

// Bad configuration: unknown key, invalid value, inconsistent settings.
struct ConfigError : Error {
    using Error::Error;
};

// Dataset loading or layout problems (missing cells, bad CSV, short splits).
struct DataError : Error {
    using Error::Error;
};

// Checkpoint file is unreadable, truncated, or carries the wrong magic.
struct CheckpointError : Error {
    using Error::Error;
};

// Training produced a non-finite gradient or logits where finiteness is
// guaranteed; surfaced with context instead of silently diverging.
struct InstabilityError : Error {
    using Error::Error;
};

}  // namespace latst
