#pragma once

#include <stdexcept>
#include <string>

namespace stda {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    /// Short machine-readable category, used in CLI error reports.
    virtual const char* kind() const noexcept { return "error"; }
};

/// A caller broke an operation's precondition (shape mismatch, bad argument).
class ContractError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "contract"; }
};

/// A primitive produced NaN or Inf.
class NumericError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "numeric"; }
};

/// Malformed or inconsistent dataset files.
class LoadError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "load"; }
};

/// Not enough windows to build the requested batch or task.
class SamplingError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "sampling"; }
};

/// Invalid experiment configuration or CLI usage.
class ConfigError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "config"; }
};

/// A metric has nothing to average (every entry masked).
class MetricError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "metric"; }
};

} // namespace stda
