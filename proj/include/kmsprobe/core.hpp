#pragma once

// Shared vocabulary: complex scalar type, math constants and the error
// hierarchy used by every kmsprobe module.

#include <complex>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace kmsprobe {

using cplx = std::complex<double>;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr double kInf = std::numeric_limits<double>::infinity();

inline constexpr const char* kLibraryVersion = "0.3.0";

/// Base class of all library errors. `kind()` is a short stable tag used in
/// result tables and CLI diagnostics.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}
    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define KMSPROBE_DEFINE_ERROR(Name, tag)                                  \
    class Name : public Error {                                           \
    public:                                                               \
        explicit Name(const std::string& what) : Error(tag, what) {}      \
    };

KMSPROBE_DEFINE_ERROR(PreconditionError, "precondition")
KMSPROBE_DEFINE_ERROR(DomainError, "domain")
KMSPROBE_DEFINE_ERROR(OutOfDomainError, "out-of-domain")
KMSPROBE_DEFINE_ERROR(UnsupportedError, "unsupported")
KMSPROBE_DEFINE_ERROR(CoverageError, "coverage")
KMSPROBE_DEFINE_ERROR(AssumptionViolation, "assumption-violation")
KMSPROBE_DEFINE_ERROR(PerturbativityError, "perturbativity")
KMSPROBE_DEFINE_ERROR(ValidationError, "validation")
KMSPROBE_DEFINE_ERROR(UsageError, "usage")

#undef KMSPROBE_DEFINE_ERROR

/// Numerical failure carrying a residual/error estimate.
class NumericalError : public Error {
public:
    NumericalError(const std::string& what, double residual)
        : Error("numerical", what), residual_(residual) {}
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

}  // namespace kmsprobe
