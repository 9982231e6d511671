#include "bdrvi/ambiguity.hpp"

#include "bdrvi/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <vector>

namespace bdrvi {

namespace {

ClippedBounds require_feasible(const BoxSimplexSet& set, const char* op) {
    auto b = clip_bounds(set);
    if (!b.feasible) {
        std::ostringstream os;
        os << op << ": box-simplex set is infeasible (sum l = " << b.lower.sum() << ", sum u = " << b.upper.sum()
           << ")";
        throw InfeasibleSetError(os.str());
    }
    return b;
}

void require_dim(const BoxSimplexSet& set, const Vector& v, const char* op) {
    if (v.size() != set.center.size()) {
        std::ostringstream os;
        os << op << ": vector length " << v.size() << " does not match set dimension " << set.center.size();
        throw InvalidArgument(os.str());
    }
}

std::vector<Eigen::Index> descending_order(const Vector& c) {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(c.size()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return c[a] > c[b]; });
    return order;
}

} // namespace

BoxSimplexSet::BoxSimplexSet(Vector c, double r) : center(std::move(c)), radius(r) {
    if (center.size() == 0) throw InvalidArgument("box-simplex set needs a nonempty center");
    if (!(radius >= 0.0)) throw InvalidArgument("box-simplex radius must be nonnegative");
}

ClippedBounds clip_bounds(const BoxSimplexSet& set) {
    ClippedBounds b;
    b.lower = (set.center.array() - set.radius).cwiseMax(0.0);
    b.upper = (set.center.array() + set.radius).cwiseMin(1.0);
    b.feasible = (b.lower.array() <= b.upper.array()).all() && b.lower.sum() <= 1.0 + kFeasibilityTol &&
                 b.upper.sum() >= 1.0 - kFeasibilityTol;
    return b;
}

LowerLevelResult linear_max(const BoxSimplexSet& set, const Vector& c) {
    require_dim(set, c, "linear_max");
    const auto b = require_feasible(set, "linear_max");
    LowerLevelResult out;
    out.maximizer = b.lower;
    double budget = 1.0 - b.lower.sum();
    for (auto j : descending_order(c)) {
        if (budget <= 0.0) break;
        const double add = std::min(budget, b.upper[j] - b.lower[j]);
        out.maximizer[j] += add;
        budget -= add;
    }
    out.value = out.maximizer.dot(c);
    return out;
}

double discrete_cvar(const Vector& values, const Vector& probs, double level) {
    if (values.size() != probs.size() || values.size() == 0)
        throw InvalidArgument("discrete_cvar: values and probabilities must be nonempty and of equal length");
    if (!(level >= 0.0 && level <= 1.0)) throw InvalidArgument("discrete_cvar: level must be in [0,1]");
    const double mass = probs.sum();
    if (!(mass > 0.0)) throw InvalidArgument("discrete_cvar: zero total mass");

    double worst = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < values.size(); ++j)
        if (probs[j] > 0.0) worst = std::max(worst, values[j]);
    const double tail = 1.0 - level;
    if (tail <= 1e-15) return worst;

    // The Rockafellar-Uryasev objective is convex and piecewise linear in t,
    // so its infimum sits on one of the atoms.
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < values.size(); ++k) {
        if (!(probs[k] > 0.0)) continue;
        const double t = values[k];
        double excess = 0.0;
        for (Eigen::Index j = 0; j < values.size(); ++j)
            if (probs[j] > 0.0 && values[j] > t) excess += probs[j] * (values[j] - t);
        best = std::min(best, t + excess / (mass * tail));
    }
    return best;
}

double cvar_value(const BoxSimplexSet& set, const Vector& c) {
    require_dim(set, c, "cvar_value");
    const auto b = require_feasible(set, "cvar_value");
    const double lower_mass = b.lower.sum();
    // sum(l) * E_{P^l}[c]; written out as l^T c, which also covers sum(l) = 0.
    const double base = b.lower.dot(c);
    const double free_mass = 1.0 - lower_mass;
    if (free_mass <= kFeasibilityTol) return base;
    const Vector spread = b.upper - b.lower;
    const double level = std::max(0.0, 1.0 - free_mass / spread.sum());
    return base + free_mass * discrete_cvar(c, spread, level);
}

Vector project_box_simplex(const BoxSimplexSet& set, const Vector& y) {
    require_dim(set, y, "project_box_simplex");
    const auto b = require_feasible(set, "project_box_simplex");
    const auto& l = b.lower;
    const auto& u = b.upper;
    auto clipped_sum = [&](double tau) { return (y.array() - tau).max(l.array()).min(u.array()).sum(); };

    double lo = (y - u).minCoeff(); // sum(theta(lo)) = sum(u) >= 1
    double hi = (y - l).maxCoeff(); // sum(theta(hi)) = sum(l) <= 1
    if (!(clipped_sum(lo) >= 1.0 - kFeasibilityTol && clipped_sum(hi) <= 1.0 + kFeasibilityTol))
        throw DomainError("project_box_simplex: bisection bracket does not contain the root");

    for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        const double s = clipped_sum(mid);
        if (std::abs(s - 1.0) <= 1e-15) {
            lo = hi = mid;
            break;
        }
        (s > 1.0 ? lo : hi) = mid;
    }
    double tau = 0.5 * (lo + hi);

    // Exact shift on the coordinates that are strictly inside their boxes,
    // written relative to one free coordinate so that large, nearly equal
    // entries of y do not cancel.
    double fixed = 0.0, free_dev = 0.0;
    int free_count = 0;
    Eigen::Index ref = -1;
    std::vector<char> is_free(static_cast<std::size_t>(y.size()), 0);
    for (Eigen::Index j = 0; j < y.size(); ++j) {
        const double v = y[j] - tau;
        if (v <= l[j]) {
            fixed += l[j];
        } else if (v >= u[j]) {
            fixed += u[j];
        } else {
            if (ref < 0) ref = j;
            free_dev += y[j] - y[ref];
            is_free[static_cast<std::size_t>(j)] = 1;
            ++free_count;
        }
    }
    Vector theta = (y.array() - tau).max(l.array()).min(u.array());
    if (free_count > 0) {
        const double mean_dev = free_dev / free_count;
        const double share = (1.0 - fixed) / free_count;
        Vector candidate = theta;
        for (Eigen::Index j = 0; j < y.size(); ++j)
            if (is_free[static_cast<std::size_t>(j)])
                candidate[j] = std::clamp((y[j] - y[ref]) - mean_dev + share, l[j], u[j]);
        if (std::abs(candidate.sum() - 1.0) <= std::abs(theta.sum() - 1.0)) theta = std::move(candidate);
    }
    return theta;
}

LowerLevelResult regularized_max(const BoxSimplexSet& set, const Vector& c, double lambda) {
    if (!(lambda > 0.0)) throw InvalidArgument("regularized_max: lambda must be positive");
    require_dim(set, c, "regularized_max");
    LowerLevelResult out;
    out.maximizer = project_box_simplex(set, c / (2.0 * lambda));
    out.value = out.maximizer.dot(c) - lambda * out.maximizer.squaredNorm();
    return out;
}

double linf_distance(const BoxSimplexSet& set, const Vector& point) {
    require_dim(set, point, "linf_distance");
    const auto b = require_feasible(set, "linf_distance");
    const auto& l = b.lower;
    const auto& u = b.upper;
    auto reachable = [&](double t) {
        const Eigen::ArrayXd lo = l.array().max(point.array() - t);
        const Eigen::ArrayXd hi = u.array().min(point.array() + t);
        return (lo <= hi + kFeasibilityTol).all() && lo.sum() <= 1.0 + kFeasibilityTol &&
               hi.sum() >= 1.0 - kFeasibilityTol;
    };
    if (reachable(0.0)) return 0.0;
    double lo = 0.0;
    double hi = std::max((point - l).cwiseAbs().maxCoeff(), (point - u).cwiseAbs().maxCoeff());
    while (hi - lo > 1e-12) {
        const double mid = 0.5 * (lo + hi);
        (reachable(mid) ? hi : lo) = mid;
    }
    return hi;
}

std::vector<Vector> box_simplex_vertices(const BoxSimplexSet& set) {
    const auto b = require_feasible(set, "box_simplex_vertices");
    const auto n = set.center.size();
    if (n > 16) throw InvalidArgument("box_simplex_vertices: dimension too large for enumeration");
    std::vector<Vector> out;
    auto push_unique = [&](const Vector& v) {
        for (const auto& w : out)
            if ((w - v).cwiseAbs().maxCoeff() <= 1e-12) return;
        out.push_back(v);
    };
    if (n == 1) {
        push_unique(Vector::Ones(1));
        return out;
    }
    const std::uint64_t masks = std::uint64_t{1} << (n - 1);
    Vector v(n);
    for (Eigen::Index free = 0; free < n; ++free) {
        for (std::uint64_t mask = 0; mask < masks; ++mask) {
            double sum = 0.0;
            int bit = 0;
            for (Eigen::Index j = 0; j < n; ++j) {
                if (j == free) continue;
                v[j] = (mask >> bit++) & 1U ? b.upper[j] : b.lower[j];
                sum += v[j];
            }
            const double rest = 1.0 - sum;
            if (rest < b.lower[free] - 1e-12 || rest > b.upper[free] + 1e-12) continue;
            v[free] = std::clamp(rest, b.lower[free], b.upper[free]);
            push_unique(v);
        }
    }
    return out;
}

std::vector<Vector> sample_box_simplex(const BoxSimplexSet& set, std::size_t count, std::uint64_t seed,
                                       std::size_t max_attempts) {
    const auto b = require_feasible(set, "sample_box_simplex");
    const auto n = set.center.size();
    std::vector<Vector> out;
    out.reserve(count);
    Rng rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Vector v(n);
    for (std::size_t attempt = 0; attempt < max_attempts && out.size() < count; ++attempt) {
        double sum = 0.0;
        for (Eigen::Index j = 0; j + 1 < n; ++j) {
            v[j] = b.lower[j] + unit(rng) * (b.upper[j] - b.lower[j]);
            sum += v[j];
        }
        const double last = 1.0 - sum;
        if (last < b.lower[n - 1] - 1e-12 || last > b.upper[n - 1] + 1e-12) continue;
        v[n - 1] = last;
        out.push_back(v);
    }
    return out;
}

HausdorffEstimate hausdorff_pair(const BoxSimplexSet& a, const BoxSimplexSet& b, std::size_t sample_count,
                                 std::uint64_t seed) {
    if (a.center.size() != b.center.size()) throw InvalidArgument("hausdorff_pair: dimension mismatch");
    require_feasible(a, "hausdorff_pair");
    require_feasible(b, "hausdorff_pair");

    auto points_of = [&](const BoxSimplexSet& s, std::uint64_t key) {
        auto pts = sample_box_simplex(s, sample_count, derive_seed(seed, {key}));
        if (pts.size() < sample_count) {
            if (s.center.size() > 6)
                throw DomainError("hausdorff_pair: rejection sampling failed and n > 6 rules out vertex enumeration");
            pts = box_simplex_vertices(s);
        }
        return pts;
    };

    HausdorffEstimate out;
    for (const auto& p : points_of(a, 1)) out.sampled = std::max(out.sampled, linf_distance(b, p));
    for (const auto& p : points_of(b, 2)) out.sampled = std::max(out.sampled, linf_distance(a, p));
    out.bound = (a.center - b.center).cwiseAbs().maxCoeff() + std::abs(a.radius - b.radius);
    return out;
}

CdfEnvelope cdf_envelope(const BoxSimplexSet& set, const Matrix& component_cdfs) {
    if (component_cdfs.cols() != set.center.size())
        throw InvalidArgument("cdf_envelope: CDF matrix must have one column per component");
    const auto grid = component_cdfs.rows();
    CdfEnvelope out{Vector(grid), Vector(grid), Vector(grid)};
    for (Eigen::Index t = 0; t < grid; ++t) {
        const Vector f = component_cdfs.row(t).transpose();
        out.upper[t] = linear_max(set, f).value;
        out.lower[t] = -linear_max(set, -f).value;
        out.nominal[t] = set.center.dot(f);
    }
    return out;
}

} // namespace bdrvi
