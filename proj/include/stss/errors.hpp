#pragma once

#include <stdexcept>
#include <string>

namespace stss {

/// Invalid user-supplied configuration (bad kernel parameters, dimensions, ...).
class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// Numerical breakdown that survived jitter escalation (indefinite precision, ...).
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& msg, double offending_eigenvalue = 0.0)
        : std::runtime_error(msg), offending_eigenvalue_(offending_eigenvalue) {}

    double offending_eigenvalue() const { return offending_eigenvalue_; }

private:
    double offending_eigenvalue_;
};

} // namespace stss
