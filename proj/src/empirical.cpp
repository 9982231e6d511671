#include "bdrvi/empirical.hpp"

#include "bdrvi/quantiles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <utility>
#include <vector>

namespace bdrvi {

namespace {

/// y sorted in decreasing order (after removing its mean, which leaves every
/// simplex projection unchanged) with prefix sums and running moments, for
/// O(log N) evaluation of simplex projections of a * y and of the shrinkage
/// map used by the L1 ball.
class SortedAtoms {
public:
    explicit SortedAtoms(const Vector& y) : n_(y.size()), order_(static_cast<std::size_t>(y.size())) {
        // Decreasing values, ties by increasing index.
        std::vector<std::pair<double, Eigen::Index>> keyed(static_cast<std::size_t>(n_));
        for (Eigen::Index i = 0; i < n_; ++i) keyed[static_cast<std::size_t>(i)] = {-y[i], i};
        std::sort(keyed.begin(), keyed.end());
        for (std::size_t i = 0; i < keyed.size(); ++i) order_[i] = keyed[i].second;
        const double mean = y.mean();
        sorted_.resize(n_);
        prefix_.resize(n_ + 1);
        means_.resize(n_ + 1);
        m2_.resize(n_ + 1);
        prefix_[0] = means_[0] = m2_[0] = 0.0;
        for (Eigen::Index i = 0; i < n_; ++i) {
            sorted_[i] = y[order_[static_cast<std::size_t>(i)]] - mean;
            prefix_[i + 1] = prefix_[i] + sorted_[i];
            // Welford updates: the centered second moment stays accurate for near-equal entries.
            const double delta = sorted_[i] - means_[i];
            means_[i + 1] = means_[i] + delta / static_cast<double>(i + 1);
            m2_[i + 1] = m2_[i] + delta * (sorted_[i] - means_[i + 1]);
        }
    }

    Eigen::Index size() const { return n_; }
    double spread() const { return sorted_[0] - sorted_[n_ - 1]; }

    /// Support size k of Proj_simplex(a y): on the k largest entries
    /// p_i = 1/k + a (y_i - mean of those k).
    Eigen::Index simplex_support(double a) const {
        Eigen::Index lo = 1, hi = n_;
        while (lo < hi) {
            const Eigen::Index mid = (lo + hi + 1) / 2;
            if (1.0 / static_cast<double>(mid) + a * (sorted_[mid - 1] - means_[mid]) > 0.0)
                lo = mid;
            else
                hi = mid - 1;
        }
        return lo;
    }

    /// ||Proj_simplex(a y) - 1/N||^2.
    double simplex_distance_sq(double a) const {
        const Eigen::Index k = simplex_support(a);
        const double inv_n = 1.0 / static_cast<double>(n_);
        const double gap = 1.0 / static_cast<double>(k) - inv_n;
        return static_cast<double>(k) * gap * gap + a * a * m2_[k] + static_cast<double>(n_ - k) * inv_n * inv_n;
    }

    Vector simplex_projection(double a) const {
        const Eigen::Index k = simplex_support(a);
        Vector p = Vector::Zero(n_);
        for (Eigen::Index i = 0; i < k; ++i)
            p[order_[static_cast<std::size_t>(i)]] =
                std::max(0.0, 1.0 / static_cast<double>(k) + a * (sorted_[i] - means_[k]));
        return p;
    }

    // Shrinkage map of the L1 ball: p_i = max(0, 1/N + shrink_mu(y_i - tau - 1/N)).
    struct Segments {
        Eigen::Index above = 0;   // y_i > tau + 1/N + mu
        Eigen::Index middle = 0;  // end of y_i >= tau + 1/N - mu
        Eigen::Index positive = 0; // end of y_i > tau - mu
    };

    Segments segments(double mu, double tau) const {
        const double inv_n = 1.0 / static_cast<double>(n_);
        Segments s;
        s.above = count_greater(tau + inv_n + mu);
        s.middle = std::max(s.above, count_greater_equal(tau + inv_n - mu));
        s.positive = std::max(s.middle, count_greater(tau - mu));
        return s;
    }

    double shrink_sum(double mu, double tau, const Segments& s) const {
        const double inv_n = 1.0 / static_cast<double>(n_);
        return (prefix_[s.above] - static_cast<double>(s.above) * (tau + mu)) +
               static_cast<double>(s.middle - s.above) * inv_n + (prefix_[s.positive] - prefix_[s.middle]) -
               static_cast<double>(s.positive - s.middle) * (tau - mu);
    }

    double shrink_l1_distance(double mu, double tau, const Segments& s) const {
        const double inv_n = 1.0 / static_cast<double>(n_);
        const double gain = prefix_[s.above] - static_cast<double>(s.above) * (tau + mu + inv_n);
        const double lower_mass =
            (prefix_[s.positive] - prefix_[s.middle]) - static_cast<double>(s.positive - s.middle) * (tau - mu);
        return gain + (static_cast<double>(n_ - s.middle) * inv_n - lower_mass);
    }

    /// tau solving sum(p) = 1 for the shrinkage map at fixed mu.
    double shrink_shift(double mu) const {
        const double inv_n = 1.0 / static_cast<double>(n_);
        double lo = sorted_[n_ - 1] - mu - inv_n - 1.0; // every p_i >= 1/N
        double hi = sorted_[0] + mu + 1.0;              // every p_i = 0
        for (int it = 0; it < 200; ++it) {
            const auto s_lo = segments(mu, lo);
            const auto s_hi = segments(mu, hi);
            if (s_lo.above == s_hi.above && s_lo.middle == s_hi.middle && s_lo.positive == s_hi.positive) {
                // Linear on this piece: sum = K - slope * tau.
                const double slope = static_cast<double>(s_lo.above + s_lo.positive - s_lo.middle);
                if (slope > 0.0) {
                    const double k0 = shrink_sum(mu, 0.0, s_lo);
                    const double tau = (k0 - 1.0) / slope;
                    if (tau >= lo - 1e-15 && tau <= hi + 1e-15) return tau;
                }
            }
            const double mid = 0.5 * (lo + hi);
            if (mid <= lo || mid >= hi) break;
            (shrink_sum(mu, mid, segments(mu, mid)) > 1.0 ? lo : hi) = mid;
        }
        return 0.5 * (lo + hi);
    }

    Vector shrink_projection(double mu, double tau) const {
        const double inv_n = 1.0 / static_cast<double>(n_);
        Vector p(n_);
        for (Eigen::Index i = 0; i < n_; ++i) {
            const double v = sorted_[i] - tau - inv_n;
            const double shrunk = v > mu ? v - mu : (v < -mu ? v + mu : 0.0);
            p[order_[static_cast<std::size_t>(i)]] = std::max(0.0, inv_n + shrunk);
        }
        return p;
    }

private:
    Eigen::Index count_greater(double t) const {
        // sorted_ is decreasing: first index with sorted_ <= t.
        return std::partition_point(sorted_.data(), sorted_.data() + n_, [t](double v) { return v > t; }) -
               sorted_.data();
    }
    Eigen::Index count_greater_equal(double t) const {
        return std::partition_point(sorted_.data(), sorted_.data() + n_, [t](double v) { return v >= t; }) -
               sorted_.data();
    }

    Eigen::Index n_;
    std::vector<Eigen::Index> order_;
    Vector sorted_;
    Vector prefix_;
    Vector means_;
    Vector m2_;
};

/// Largest scale a in (0, a_max] with ||Proj_simplex(a y) - 1/N||^2 <= bound.
/// a_max = inf means "no cap": the limit point (uniform on argmax y) is used
/// when the whole path stays inside the ball.
Vector scaled_projection_in_ball(const Vector& y, double bound, double a_max) {
    const auto n = y.size();
    const Vector uniform = Vector::Constant(n, 1.0 / static_cast<double>(n));
    SortedAtoms atoms(y);
    if (atoms.spread() <= 0.0) return uniform;
    if (std::isfinite(a_max) && atoms.simplex_distance_sq(a_max) <= bound) return atoms.simplex_projection(a_max);

    double lo = 0.0;
    double hi = std::isfinite(a_max) ? a_max : 1.0;
    if (!std::isfinite(a_max)) {
        // Limit of the path: uniform mass on the argmax set.
        const double top = y.maxCoeff();
        const auto ties = (y.array() == top).count();
        const double inv_n = 1.0 / static_cast<double>(n);
        const double gap = 1.0 / static_cast<double>(ties) - inv_n;
        if (static_cast<double>(ties) * gap * gap + static_cast<double>(n - ties) * inv_n * inv_n <= bound) {
            Vector p = Vector::Zero(n);
            for (Eigen::Index i = 0; i < n; ++i)
                if (y[i] == top) p[i] = 1.0 / static_cast<double>(ties);
            return p;
        }
        while (atoms.simplex_distance_sq(hi) <= bound) {
            lo = hi;
            hi *= 2.0;
            if (hi > 1e300) throw DomainError("scaled projection: the path never leaves the ball");
        }
    }
    for (int it = 0; it < 300; ++it) {
        const double mid = lo > 0.0 ? std::sqrt(lo * hi) : 0.5 * hi;
        if (mid <= lo || mid >= hi) break;
        (atoms.simplex_distance_sq(mid) <= bound ? lo : hi) = mid;
        if (hi - lo <= 1e-15 * hi) break;
    }
    return lo > 0.0 ? atoms.simplex_projection(lo) : uniform;
}

Vector l1_ball_projection(const Vector& y, double radius) {
    SortedAtoms atoms(y);
    // mu = 0 is the plain simplex projection.
    const double tau0 = atoms.shrink_shift(0.0);
    if (atoms.shrink_l1_distance(0.0, tau0, atoms.segments(0.0, tau0)) <= radius)
        return atoms.shrink_projection(0.0, tau0);

    struct Point {
        double mu, tau, dist;
        SortedAtoms::Segments seg;
    };
    auto at = [&](double mu) {
        Point pt{mu, atoms.shrink_shift(mu), 0.0, {}};
        pt.seg = atoms.segments(mu, pt.tau);
        pt.dist = atoms.shrink_l1_distance(mu, pt.tau, pt.seg);
        return pt;
    };
    auto same = [](const SortedAtoms::Segments& a, const SortedAtoms::Segments& b) {
        return a.above == b.above && a.middle == b.middle && a.positive == b.positive;
    };
    Point lo = at(0.0);
    Point hi = at(std::max(1e-12, atoms.spread()));
    while (hi.dist > radius) {
        lo = hi;
        hi = at(2.0 * hi.mu);
    }
    for (int it = 0; it < 200 && hi.mu - lo.mu > 1e-16 * std::max(1.0, hi.mu); ++it) {
        // The distance is linear in mu while the active pattern is fixed.
        if (same(lo.seg, hi.seg) && lo.dist > hi.dist) {
            const double mu = lo.mu + (lo.dist - radius) * (hi.mu - lo.mu) / (lo.dist - hi.dist);
            if (mu > lo.mu && mu < hi.mu) {
                const Point pt = at(mu);
                if (same(pt.seg, lo.seg)) return atoms.shrink_projection(pt.mu, pt.tau);
            }
        }
        const Point mid = at(0.5 * (lo.mu + hi.mu));
        (mid.dist > radius ? lo : hi) = mid;
    }
    return atoms.shrink_projection(hi.mu, hi.tau);
}

/// Exact greedy for max p^T c over the L1 ball: move up to radius/2 mass
/// from the lowest-c atoms onto the highest-c atom.
Vector l1_greedy(const Vector& c, double radius) {
    const auto n = c.size();
    const double inv_n = 1.0 / static_cast<double>(n);
    Vector p = Vector::Constant(n, inv_n);
    Eigen::Index receiver = 0;
    for (Eigen::Index i = 1; i < n; ++i)
        if (c[i] > c[receiver]) receiver = i;
    std::vector<Eigen::Index> donors(static_cast<std::size_t>(n));
    std::iota(donors.begin(), donors.end(), Eigen::Index{0});
    std::stable_sort(donors.begin(), donors.end(), [&](Eigen::Index a, Eigen::Index b) { return c[a] < c[b]; });

    double budget = std::min(0.5 * radius, 1.0 - inv_n);
    for (auto i : donors) {
        if (budget <= 0.0) break;
        if (i == receiver || !(c[i] < c[receiver])) continue;
        const double take = std::min(budget, p[i]);
        p[i] -= take;
        p[receiver] += take;
        budget -= take;
    }
    return p;
}

} // namespace

std::string to_string(EmpiricalKind kind) { return kind == EmpiricalKind::L1 ? "l1" : "chi2"; }

EmpiricalKind empirical_kind_from_string(const std::string& s) {
    if (s == "l1" || s == "L1") return EmpiricalKind::L1;
    if (s == "chi2" || s == "modified_chi2" || s == "ModifiedChi2") return EmpiricalKind::ModifiedChi2;
    throw InvalidArgument("unknown empirical ball kind '" + s + "' (expected l1 or chi2)");
}

void EmpiricalBall::validate() const {
    if (atoms == 0) throw InvalidArgument("empirical ball needs at least one atom");
    if (!(radius >= 0.0)) throw InvalidArgument("empirical ball radius must be nonnegative");
}

double empirical_radius(EmpiricalKind kind, std::size_t atoms, double alpha) {
    if (atoms < 2) throw InvalidArgument("empirical_radius: need N >= 2");
    if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("empirical_radius: alpha must be in (0,1)");
    const double n = static_cast<double>(atoms);
    if (kind == EmpiricalKind::L1) return std::sqrt(2.0 / n * std::log(2.0 / alpha));
    return chi_square_quantile(n - 1.0, 1.0 - alpha) / n;
}

Vector project_empirical_ball(const EmpiricalBall& ball, const Vector& y) {
    ball.validate();
    if (static_cast<std::size_t>(y.size()) != ball.atoms)
        throw InvalidArgument("project_empirical_ball: vector length does not match atom count");
    const auto n = y.size();
    if (n == 1) return Vector::Ones(1);
    if (ball.radius <= 0.0) return Vector::Constant(n, 1.0 / static_cast<double>(n));
    if (ball.kind == EmpiricalKind::L1) return l1_ball_projection(y, ball.radius);
    // Ball condition in Euclidean form: ||p - 1/N||^2 <= radius / N. Every
    // candidate on the path is Proj_simplex(y / (1 + m)), m >= 0.
    return scaled_projection_in_ball(y, ball.radius / static_cast<double>(n), 1.0);
}

LowerLevelResult empirical_linear_max(const EmpiricalBall& ball, const Vector& c, double lambda) {
    ball.validate();
    if (static_cast<std::size_t>(c.size()) != ball.atoms)
        throw InvalidArgument("empirical_linear_max: loss vector length does not match atom count");
    if (!(lambda >= 0.0)) throw InvalidArgument("empirical_linear_max: lambda must be nonnegative");
    const auto n = c.size();
    LowerLevelResult out;
    if (n == 1 || ball.radius <= 0.0) {
        out.maximizer = Vector::Constant(n, 1.0 / static_cast<double>(n));
    } else if (lambda > 0.0) {
        out.maximizer = project_empirical_ball(ball, c / (2.0 * lambda));
    } else if (ball.kind == EmpiricalKind::L1) {
        out.maximizer = l1_greedy(c, ball.radius);
    } else {
        // p(s) = Proj_simplex(1/N + s c) = Proj_simplex(s c); the optimum is
        // the largest s whose point stays inside the ellipsoid.
        out.maximizer =
            scaled_projection_in_ball(c, ball.radius / static_cast<double>(n), std::numeric_limits<double>::infinity());
    }
    out.value = out.maximizer.dot(c) - lambda * out.maximizer.squaredNorm();
    return out;
}

EnvelopePoint empirical_cdf_envelope(EmpiricalKind kind, std::size_t atoms, double radius, std::size_t below) {
    if (atoms == 0) throw InvalidArgument("empirical_cdf_envelope: need at least one atom");
    if (below > atoms) throw InvalidArgument("empirical_cdf_envelope: count exceeds atom count");
    if (!(radius >= 0.0)) throw InvalidArgument("empirical_cdf_envelope: radius must be nonnegative");
    const double n = static_cast<double>(atoms);
    if (kind == EmpiricalKind::L1) {
        const double f = static_cast<double>(below) / n;
        return {std::max(0.0, f - 0.5 * radius), std::min(1.0, f + 0.5 * radius)};
    }
    auto upper = [&](std::size_t k) {
        if (k == 0) return 0.0;
        if (k == atoms) return 1.0;
        const double kk = static_cast<double>(k);
        // Symmetric solution is valid while the other atoms keep nonnegative mass.
        if (radius * kk <= n - kk) return std::min(1.0, kk / n + std::sqrt(radius * kk * (n - kk)) / n);
        Vector indicator = Vector::Zero(static_cast<Eigen::Index>(atoms));
        indicator.head(static_cast<Eigen::Index>(k)).setOnes();
        return std::min(1.0, empirical_linear_max({kind, atoms, radius}, indicator, 0.0).value);
    };
    return {std::max(0.0, 1.0 - upper(atoms - below)), upper(below)};
}

} // namespace bdrvi
