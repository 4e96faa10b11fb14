#pragma once

#include <stdexcept>
#include <string>

namespace broken_sample {

/// Bad parameters or malformed input. The CLI maps this to exit code 2.
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A requested quantity is undefined at these parameters, e.g. a limit law
/// with sqrt(alpha) * lambda_1 >= 1. The CLI maps this to exit code 3.
class NumericalDegeneracy : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

inline void require(bool condition, const std::string& message) {
    if (!condition) throw InvalidInput(message);
}

}  // namespace broken_sample
