#pragma once

#include <stdexcept>
#include <string>

namespace tcvads {

// Input, shape, format, and coverage problems. CLI maps these to exit code 2.
class validation_error : public std::runtime_error {
public:
    explicit validation_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values, factorization failures, degenerate numeric states.
// CLI maps these to exit code 3.
class numerical_error : public std::runtime_error {
public:
    explicit numerical_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace tcvads
