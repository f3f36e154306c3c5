#pragma once

#include <stdexcept>
#include <string>

namespace qcqp {

// Error taxonomy. The CLI maps these onto exit codes 2 (parameter),
// 3 (data/schema) and 4 (numerical).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParameterError : public Error {
public:
    using Error::Error;
};

class DataError : public Error {
public:
    using Error::Error;
};

class NumericalError : public Error {
public:
    NumericalError(const std::string& what, double achieved_error = 0.0)
        : Error(what), achieved_error_(achieved_error) {}

    /// Best error estimate reached before giving up (0 when not applicable).
    double achieved_error() const noexcept { return achieved_error_; }

private:
    double achieved_error_;
};

}  // namespace qcqp
