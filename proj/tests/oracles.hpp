#pragma once

// Brute-force reference solvers used by the unit tests and the acceptance
// runner. None of them calls into the library's optimization code.

#include "bdrvi/types.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

namespace oracle {

using bdrvi::Vector;

struct Box {
    Vector lower;
    Vector upper;
};

inline Box clipped_box(const Vector& center, double radius) {
    Box b{center, center};
    for (Eigen::Index j = 0; j < center.size(); ++j) {
        b.lower[j] = std::max(0.0, center[j] - radius);
        b.upper[j] = std::min(1.0, center[j] + radius);
    }
    return b;
}

/// Vertices of {l <= t <= u, sum t = 1}: every coordinate but one sits at a
/// bound and the remaining one closes the sum.
inline std::vector<Vector> vertices(const Box& box, double tol = 1e-12) {
    const auto n = box.lower.size();
    std::vector<Vector> out;
    for (Eigen::Index free = 0; free < n; ++free) {
        for (unsigned mask = 0; mask < (1u << (n - 1)); ++mask) {
            Vector t(n);
            double sum = 0.0;
            unsigned bit = 0;
            for (Eigen::Index j = 0; j < n; ++j) {
                if (j == free) continue;
                t[j] = (mask >> bit++) & 1u ? box.upper[j] : box.lower[j];
                sum += t[j];
            }
            t[free] = 1.0 - sum;
            if (t[free] >= box.lower[free] - tol && t[free] <= box.upper[free] + tol) out.push_back(t);
        }
    }
    return out;
}

inline double lp_max(const Box& box, const Vector& c) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& v : vertices(box)) best = std::max(best, v.dot(c));
    return best;
}

/// Euclidean projection onto {l <= t <= u, sum t = 1} by trying every
/// lower/upper/free pattern and keeping the nearest feasible KKT point.
inline Vector box_simplex_projection(const Box& box, const Vector& y, double tol = 1e-12) {
    const auto n = static_cast<int>(y.size());
    int patterns = 1;
    for (int j = 0; j < n; ++j) patterns *= 3;
    Vector best;
    double best_dist = std::numeric_limits<double>::infinity();
    for (int p = 0; p < patterns; ++p) {
        std::vector<int> state(static_cast<std::size_t>(n));
        int code = p;
        double fixed = 0.0, free_sum = 0.0;
        int free_count = 0;
        for (int j = 0; j < n; ++j) {
            state[static_cast<std::size_t>(j)] = code % 3;
            code /= 3;
            if (state[static_cast<std::size_t>(j)] == 0) fixed += box.lower[j];
            else if (state[static_cast<std::size_t>(j)] == 1) fixed += box.upper[j];
            else {
                free_sum += y[j];
                ++free_count;
            }
        }
        Vector t(n);
        double tau = 0.0;
        if (free_count > 0) tau = (free_sum + fixed - 1.0) / free_count;
        else if (std::abs(fixed - 1.0) > tol) continue;
        bool ok = true;
        for (int j = 0; j < n && ok; ++j) {
            const int s = state[static_cast<std::size_t>(j)];
            t[j] = s == 0 ? box.lower[j] : s == 1 ? box.upper[j] : y[j] - tau;
            ok = t[j] >= box.lower[j] - tol && t[j] <= box.upper[j] + tol;
        }
        if (!ok) continue;
        const double d = (t - y).squaredNorm();
        if (d < best_dist) {
            best_dist = d;
            best = t;
        }
    }
    return best;
}

/// Sort-based Euclidean projection onto the probability simplex.
inline Vector simplex_projection(const Vector& y) {
    std::vector<double> s(y.data(), y.data() + y.size());
    std::sort(s.begin(), s.end(), std::greater<>());
    double cum = 0.0, theta = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k) {
        cum += s[k];
        const double t = (cum - 1.0) / static_cast<double>(k + 1);
        if (s[k] - t > 0.0) theta = t;
    }
    return (y.array() - theta).max(0.0).matrix();
}

/// Projection onto the l1 ball {||p - center||_1 <= r} by soft thresholding.
inline Vector l1_ball_projection(const Vector& y, const Vector& center, double r) {
    const Vector z = y - center;
    if (z.lpNorm<1>() <= r) return y;
    const Vector a = z.cwiseAbs();
    double lo = 0.0, hi = a.maxCoeff();
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        ((a.array() - mid).max(0.0).sum() > r ? lo : hi) = mid;
    }
    Vector out(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i)
        out[i] = center[i] + std::copysign(std::max(0.0, a[i] - hi), z[i]);
    return out;
}

inline Vector l2_ball_projection(const Vector& y, const Vector& center, double r) {
    const Vector z = y - center;
    const double norm = z.norm();
    return norm <= r ? y : Vector(center + z * (r / norm));
}

/// Dykstra's alternating projections onto the simplex and a second convex set.
/// Stops once the two half-steps agree, i.e. the iterate lies in both sets.
inline Vector dykstra(const Vector& y, const std::function<Vector(const Vector&)>& ball, int iterations = 200000) {
    Vector x = y, p = Vector::Zero(y.size()), q = Vector::Zero(y.size());
    for (int k = 0; k < iterations; ++k) {
        const Vector a = simplex_projection(x + p);
        p = x + p - a;
        const Vector b = ball(a + q);
        q = a + q - b;
        const bool settled = (a - b).lpNorm<Eigen::Infinity>() < 1e-14 && (b - x).lpNorm<Eigen::Infinity>() < 1e-15;
        x = b;
        if (settled) break;
    }
    return x;
}

/// Central-difference gradient.
inline Vector finite_difference(const std::function<double(const Vector&)>& f, const Vector& x, double h) {
    Vector g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        Vector a = x, b = x;
        a[i] += h;
        b[i] -= h;
        g[i] = (f(a) - f(b)) / (2.0 * h);
    }
    return g;
}

/// Uniform draw from {x >= 0, sum x <= 1} in R^d (Dirichlet(1,...,1) in d+1 dims, last dropped).
inline Vector random_portfolio(std::mt19937_64& rng, Eigen::Index d) {
    std::exponential_distribution<double> e(1.0);
    Vector w(d + 1);
    for (Eigen::Index i = 0; i <= d; ++i) w[i] = e(rng);
    w /= w.sum();
    return w.head(d);
}

inline Vector random_simplex_point(std::mt19937_64& rng, Eigen::Index n) {
    std::exponential_distribution<double> e(1.0);
    Vector w(n);
    for (Eigen::Index i = 0; i < n; ++i) w[i] = e(rng);
    return w / w.sum();
}

} // namespace oracle
