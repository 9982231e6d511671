#pragma once

#include "bdrvi/ambiguity.hpp"
#include "bdrvi/types.hpp"

#include <cstddef>
#include <string>

namespace bdrvi {

enum class EmpiricalKind { L1, ModifiedChi2 };

std::string to_string(EmpiricalKind kind);
EmpiricalKind empirical_kind_from_string(const std::string& s);

/// Frequentist ball around the uniform empirical vector on N atoms:
///   L1:           ||p - 1/N||_1 <= radius
///   ModifiedChi2: sum (p_i - 1/N)^2 / (1/N) <= radius
struct EmpiricalBall {
    EmpiricalKind kind = EmpiricalKind::L1;
    std::size_t atoms = 1;
    double radius = 0.0;

    void validate() const;
};

/// sqrt((2/N) log(2/alpha)) for L1, chi2_{N-1,1-alpha} / N for ModifiedChi2.
double empirical_radius(EmpiricalKind kind, std::size_t atoms, double alpha);

/// Euclidean projection onto the ball intersected with the simplex.
Vector project_empirical_ball(const EmpiricalBall& ball, const Vector& y);

/// max p^T c - lambda ||p||^2 over the ball intersected with the simplex.
/// lambda = 0 uses the exact greedy (L1) or the one-dimensional dual
/// bisection (ModifiedChi2); lambda > 0 projects c / (2 lambda).
LowerLevelResult empirical_linear_max(const EmpiricalBall& ball, const Vector& c, double lambda = 0.0);

struct EnvelopePoint {
    double lower = 0.0;
    double upper = 0.0;
};

/// CDF envelope at a point with `below` of the N atoms at or below it.
EnvelopePoint empirical_cdf_envelope(EmpiricalKind kind, std::size_t atoms, double radius, std::size_t below);

} // namespace bdrvi
