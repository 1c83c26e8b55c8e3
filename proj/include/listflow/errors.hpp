#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace listflow {

enum class ErrorKind {
    NonPositiveMetric,
    StabilityViolation,
    NoConvergence,
    AllZero,
    BoundBlowup,
    NonPositiveWeight,
    NonPositiveTau,
    StrideError,
    InvalidArgument,
    UsageError,
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::NonPositiveMetric: return "NonPositiveMetric";
    case ErrorKind::StabilityViolation: return "StabilityViolation";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::AllZero: return "AllZero";
    case ErrorKind::BoundBlowup: return "BoundBlowup";
    case ErrorKind::NonPositiveWeight: return "NonPositiveWeight";
    case ErrorKind::NonPositiveTau: return "NonPositiveTau";
    case ErrorKind::StrideError: return "StrideError";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::UsageError: return "UsageError";
    }
    return "Unknown";
}

/// Single exception type for the library; `kind()` drives the CLI exit code.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind), message_(message) {}

    ErrorKind kind() const noexcept { return kind_; }
    const std::string& message() const noexcept { return message_; }

    /// Same error with extra context appended to the message.
    Error annotated(const std::string& context) const { return Error(kind_, message_ + " (" + context + ")"); }

    /// True for the failures that mean the numerics blew up (exit code 3).
    bool is_numerical() const noexcept {
        return kind_ == ErrorKind::StabilityViolation || kind_ == ErrorKind::NonPositiveMetric ||
               kind_ == ErrorKind::NonPositiveWeight || kind_ == ErrorKind::BoundBlowup ||
               kind_ == ErrorKind::NoConvergence;
    }

private:
    ErrorKind kind_;
    std::string message_;
};

} // namespace listflow
