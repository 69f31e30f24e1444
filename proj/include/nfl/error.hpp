#pragma once
#include <cstddef>
#include <stdexcept>
#include <string>

namespace nfl {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

class NotPositiveDefinite : public Error
{
public:
    explicit NotPositiveDefinite(const std::string& what)
        : Error("not positive definite: " + what) {}
};

class NonConvergence : public Error
{
public:
    NonConvergence(const std::string& what, std::size_t iterations)
        : Error("no convergence after " + std::to_string(iterations) + " iterations: " + what),
          iterations_(iterations) {}
    std::size_t iterations() const noexcept { return iterations_; }

private:
    std::size_t iterations_;
};

class DomainError : public Error
{
public:
    explicit DomainError(const std::string& what) : Error("domain error: " + what) {}
};

class DimensionMismatch : public Error
{
public:
    explicit DimensionMismatch(const std::string& what) : Error("dimension mismatch: " + what) {}
};

class IndexOutOfRange : public Error
{
public:
    explicit IndexOutOfRange(const std::string& what) : Error("index out of range: " + what) {}
};

class ConstantColumn : public Error
{
public:
    explicit ConstantColumn(std::size_t column)
        : Error("column " + std::to_string(column) + " has zero variance"), column_(column) {}
    std::size_t column() const noexcept { return column_; }

private:
    std::size_t column_;
};

class ConstraintViolation : public Error
{
public:
    explicit ConstraintViolation(const std::string& what) : Error("constraint violation: " + what) {}
};

class ParseError : public Error
{
public:
    explicit ParseError(const std::string& what) : Error("parse error: " + what) {}
};

} // namespace nfl
