#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace bdrvi {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
/// Row-major storage for sample matrices: one draw per row.
using SampleMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid arguments: wrong dimensions, out-of-range parameters.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// A numerical or modelling domain failure (log of a nonpositive wealth,
/// singular information matrix, infeasible ambiguity set, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// The box intersected with the simplex is empty.
class InfeasibleSetError : public DomainError {
public:
    using DomainError::DomainError;
};

/// Checks that a vector is a probability vector: entries in [0,1], sum 1.
bool is_weight_vector(const Vector& w, double tol = 1e-10);

/// Throws InvalidArgument unless `w` is a probability vector.
void require_weight_vector(const Vector& w, const std::string& what, double tol = 1e-10);

} // namespace bdrvi
