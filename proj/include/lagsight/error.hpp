#pragma once

#include <stdexcept>
#include <string>

namespace lagsight {

// Shape or argument mismatch detected by a primitive or model routine.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// User-facing validation failure (bad config, bad file contents, missing
// columns). The CLI maps these to exit code 2.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace lagsight
