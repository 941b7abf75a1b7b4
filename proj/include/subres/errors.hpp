#pragma once

#include <stdexcept>
#include <string>

namespace subres {

/// Base class for every failure raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid construction arguments or configuration.
class ValidationError : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

class SingularLinearPart : public Error {
public:
    using Error::Error;
};

/// A contraction factor e^{lambda + (n+1) eps} that is not below one.
class NonContraction : public Error {
public:
    NonContraction(double value, int degree)
        : Error("non-contraction at degree " + std::to_string(degree) +
                ": factor " + std::to_string(value) + " >= 1"),
          value_(value), degree_(degree) {}

    double value() const noexcept { return value_; }
    int degree() const noexcept { return degree_; }

private:
    double value_;
    int degree_;
};

class NonContractingMonodromy : public Error {
public:
    using Error::Error;
};

class DefectiveClustering : public Error {
public:
    using Error::Error;
};

/// The two-sided Lyapunov series could not be certified within budget.
class TailCertificationFailure : public Error {
public:
    using Error::Error;
};

class MissingData : public Error {
public:
    using Error::Error;
};

class SeriesStagnation : public Error {
public:
    using Error::Error;
};

class BudgetExhausted : public Error {
public:
    using Error::Error;
};

class SingularSystem : public Error {
public:
    using Error::Error;
};

class NonCommuting : public Error {
public:
    using Error::Error;
};

/// A recentering point whose orbit does not settle onto the base orbit.
class OutsideConvergenceBall : public Error {
public:
    using Error::Error;
};

} // namespace subres
