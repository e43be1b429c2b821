#pragma once

#include <stdexcept>
#include <string>

namespace sargan {

// Root of all library errors. The CLI maps subclasses onto exit codes.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shapes do not line up (wrong rank, extent mismatch, non-integral
// convolution output, ...).
class DimensionError : public Error {
public:
    using Error::Error;
};

// An argument is outside the mathematical domain of the operation.
class DomainError : public Error {
public:
    using Error::Error;
};

// An API precondition was violated (non-scalar loss, empty batch, ...).
class ContractError : public Error {
public:
    using Error::Error;
};

// Bad configuration: unknown keys, unparsable values, invalid settings.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Unreadable/unwritable files, malformed manifests or binary blobs.
class DataError : public Error {
public:
    using Error::Error;
};

// NaN/Inf encountered where the contracts promise finite values.
class NumericError : public Error {
public:
    using Error::Error;
};

} // namespace sargan
