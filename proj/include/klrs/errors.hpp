#pragma once

#include <stdexcept>
#include <string>

namespace klrs {

// q places mass where the reference p has none; KL is undefined, not +inf.
class AbsoluteContinuityError : public std::domain_error {
public:
    explicit AbsoluteContinuityError(const std::string& what) : std::domain_error(what) {}
};

// Target tau cannot be met at any admissible lambda.
class InfeasibleTargetError : public std::runtime_error {
public:
    explicit InfeasibleTargetError(const std::string& what) : std::runtime_error(what) {}
};

// Requested KL divergence exceeds what the label-shift family can reach.
class UnreachableDivergenceError : public std::domain_error {
public:
    explicit UnreachableDivergenceError(const std::string& what) : std::domain_error(what) {}
};

// Downsampling schedule would leave a class empty.
class DegenerateClassError : public std::runtime_error {
public:
    explicit DegenerateClassError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input file; message carries path and line number.
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace klrs
