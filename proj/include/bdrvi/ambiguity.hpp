#pragma once

#include "bdrvi/types.hpp"

#include <cstddef>
#include <cstdint>
#include <vector>

namespace bdrvi {

/// Tolerance used when deciding feasibility of clipped bounds.
inline constexpr double kFeasibilityTol = 1e-12;

/// The l_inf ball B(center, radius) intersected with the probability simplex.
///
/// Sets whose clipped bounds violate sum(l) <= 1 <= sum(u) are representable;
/// `bounds().feasible` reports it and optimization routines refuse them.
struct BoxSimplexSet {
    Vector center;
    double radius = 0.0;

    BoxSimplexSet() = default;
    BoxSimplexSet(Vector c, double r);

    std::size_t dim() const { return static_cast<std::size_t>(center.size()); }
};

struct ClippedBounds {
    Vector lower;
    Vector upper;
    bool feasible = false;
};

/// l_j = max(0, c_j - r), u_j = min(1, c_j + r).
ClippedBounds clip_bounds(const BoxSimplexSet& set);

/// Maximizer and optimal value of a lower-level problem.
struct LowerLevelResult {
    Vector maximizer;
    double value = 0.0;
};

/// max theta^T c over the set by the greedy fill: start at l, hand out the
/// remaining budget in decreasing c order (ties: lowest index first).
LowerLevelResult linear_max(const BoxSimplexSet& set, const Vector& c);

/// Upper CVaR of a discrete distribution:
///   inf_t { t + E[(X - t)^+] / (1 - level) }.
/// `probs` need not be normalized; zero-mass atoms are ignored.
double discrete_cvar(const Vector& values, const Vector& probs, double level);

/// Optimal value of max theta^T c via its CVaR dual:
///   sum(l) E_{P^l}[c] + (1 - sum(l)) CVaR_beta^{P^{u-l}}[c],
/// where beta = 1 - (1 - sum l) / sum(u - l). For sets untouched by the
/// [0,1] clipping beta is exactly 0.5.
double cvar_value(const BoxSimplexSet& set, const Vector& c);

/// Euclidean projection of y onto the set. Bisection on the shift tau of
/// theta(tau) = clip(y - tau, l, u), finished by an exact solve on the free
/// coordinates.
Vector project_box_simplex(const BoxSimplexSet& set, const Vector& y);

/// max theta^T c - lambda ||theta||^2; the maximizer is Proj(c / (2 lambda)).
LowerLevelResult regularized_max(const BoxSimplexSet& set, const Vector& c, double lambda);

/// min over the set of ||point - s||_inf, by bisection on the ball radius.
double linf_distance(const BoxSimplexSet& set, const Vector& point);

/// All vertices of the set (n <= 16).
std::vector<Vector> box_simplex_vertices(const BoxSimplexSet& set);

/// Uniform draws from the set: the first n-1 coordinates uniform on their
/// boxes, the last one closing the simplex, rejected if out of its box.
/// Returns fewer than `count` points if `max_attempts` is exhausted.
std::vector<Vector> sample_box_simplex(const BoxSimplexSet& set, std::size_t count, std::uint64_t seed,
                                       std::size_t max_attempts = 1'000'000);

struct HausdorffEstimate {
    double sampled = 0.0; ///< lower estimate of the l_inf Hausdorff distance
    double bound = 0.0;   ///< ||cA - cB||_inf + |rA - rB|
};

/// Sampled Hausdorff distance together with its center/radius upper bound.
/// Falls back to vertex enumeration (n <= 6) when rejection sampling fails.
HausdorffEstimate hausdorff_pair(const BoxSimplexSet& a, const BoxSimplexSet& b, std::size_t sample_count,
                                 std::uint64_t seed);

struct CdfEnvelope {
    Vector lower;
    Vector upper;
    Vector nominal;
};

/// Pointwise CDF envelope over the set. `component_cdfs` is grid x n.
CdfEnvelope cdf_envelope(const BoxSimplexSet& set, const Matrix& component_cdfs);

} // namespace bdrvi
