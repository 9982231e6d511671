#include "bdrvi/empirical.hpp"

#include "oracles.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <doctest.h>

#include <random>

using namespace bdrvi;

namespace {

Vector uniform(Eigen::Index n) { return Vector::Constant(n, 1.0 / static_cast<double>(n)); }

Vector dykstra_projection(const EmpiricalBall& ball, const Vector& y) {
    const auto n = static_cast<Eigen::Index>(ball.atoms);
    if (ball.kind == EmpiricalKind::L1)
        return oracle::dykstra(y, [&](const Vector& z) { return oracle::l1_ball_projection(z, uniform(n), ball.radius); });
    const double r = std::sqrt(ball.radius / static_cast<double>(n));
    return oracle::dykstra(y, [&](const Vector& z) { return oracle::l2_ball_projection(z, uniform(n), r); });
}

} // namespace

TEST_CASE("empirical_radius examples") {
    CHECK(empirical_radius(EmpiricalKind::L1, 50, 0.05) == doctest::Approx(std::sqrt(2.0 / 50 * std::log(40.0))));
    CHECK(empirical_radius(EmpiricalKind::L1, 50, 0.05) == doctest::Approx(0.38413).epsilon(1e-4));
    const double q = boost::math::quantile(boost::math::chi_squared(19.0), 0.95);
    CHECK(empirical_radius(EmpiricalKind::ModifiedChi2, 20, 0.05) == doctest::Approx(q / 20.0).epsilon(1e-9));
    CHECK(empirical_radius(EmpiricalKind::ModifiedChi2, 20, 0.05) == doctest::Approx(1.50718).epsilon(1e-3));
    CHECK(empirical_radius(EmpiricalKind::L1, 30, 1.0 - 1e-12) ==
          doctest::Approx(std::sqrt(2.0 / 30 * std::log(2.0))).epsilon(1e-9));
    CHECK_THROWS_AS(empirical_radius(EmpiricalKind::L1, 1, 0.05), InvalidArgument);
}

TEST_CASE("empirical_linear_max examples") {
    const EmpiricalBall ball{EmpiricalKind::L1, 4, 0.2};
    const auto r = empirical_linear_max(ball, (Vector(4) << 4, 3, 2, 1).finished());
    CHECK((r.maximizer - (Vector(4) << 0.35, 0.25, 0.25, 0.15).finished()).norm() < 1e-12);
    CHECK(r.value == doctest::Approx(2.8));

    for (auto kind : {EmpiricalKind::L1, EmpiricalKind::ModifiedChi2})
        for (double lambda : {0.0, 0.1})
            CHECK(empirical_linear_max({kind, 5, 0.7}, Vector::Constant(5, 1.3), lambda).maximizer.dot(
                      Vector::Constant(5, 1.3)) == doctest::Approx(1.3));

    // Symmetric KKT point of the chi-square ball with |S| unit losses.
    const std::size_t n = 40, s = 10;
    const double rho = 0.3;
    Vector c = Vector::Zero(n);
    c.head(s).setOnes();
    const double expected = double(s) / n + std::sqrt(rho * s * (n - s)) / n;
    CHECK(empirical_linear_max({EmpiricalKind::ModifiedChi2, n, rho}, c).value == doctest::Approx(expected).epsilon(1e-9));

    CHECK(empirical_linear_max({EmpiricalKind::L1, 1, 0.5}, Vector::Constant(1, 2.0)).maximizer[0] == 1.0);
}

TEST_CASE("ball projections match Dykstra") {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> g(0.0, 0.4);
    std::uniform_real_distribution<double> rad(0.02, 1.5);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + static_cast<std::size_t>(trial % 7);
        const EmpiricalBall ball{trial % 2 ? EmpiricalKind::L1 : EmpiricalKind::ModifiedChi2, n, rad(rng)};
        Vector y(static_cast<Eigen::Index>(n));
        for (auto& v : y) v = 1.0 / static_cast<double>(n) + g(rng);
        const Vector p = project_empirical_ball(ball, y);
        const Vector q = dykstra_projection(ball, y);
        CHECK((p - q).lpNorm<Eigen::Infinity>() <= 1e-6);
        CHECK(std::abs(p.sum() - 1.0) <= 1e-12);
        CHECK(p.minCoeff() >= 0.0);
    }
}

TEST_CASE("lambda = 0 maximizer agrees with the regularized route at tiny lambda") {
    std::mt19937_64 rng(22);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 3 + static_cast<std::size_t>(trial % 5);
        const EmpiricalBall ball{trial % 2 ? EmpiricalKind::L1 : EmpiricalKind::ModifiedChi2, n, 0.4};
        Vector c(static_cast<Eigen::Index>(n));
        for (auto& v : c) v = g(rng);
        const double exact = empirical_linear_max(ball, c).value;
        // The regularized maximizer (Dykstra on c / (2 lambda)) loses at most lambda.
        const double lambda = 1e-2;
        const Vector p = dykstra_projection(ball, c / (2.0 * lambda));
        CHECK(exact >= p.dot(c) - 1e-9);
        CHECK(exact - p.dot(c) <= lambda + 1e-9);
    }
}

TEST_CASE("empirical_cdf_envelope") {
    const auto zero = empirical_cdf_envelope(EmpiricalKind::L1, 50, 0.38413, 0);
    CHECK(zero.lower == 0.0);
    CHECK(zero.upper == doctest::Approx(0.38413 / 2));
    CHECK(empirical_cdf_envelope(EmpiricalKind::ModifiedChi2, 50, 1.3, 50).upper == 1.0);
    const auto mid = empirical_cdf_envelope(EmpiricalKind::L1, 50, 0.38413, 25);
    CHECK(mid.upper == doctest::Approx(0.6921).epsilon(1e-4));
    // LP oracle: the indicator of the first 25 atoms.
    Vector ind = Vector::Zero(50);
    ind.head(25).setOnes();
    CHECK(mid.upper == doctest::Approx(empirical_linear_max({EmpiricalKind::L1, 50, 0.38413}, ind).value));

    for (auto kind : {EmpiricalKind::L1, EmpiricalKind::ModifiedChi2}) {
        double last_lo = -1.0, last_hi = -1.0;
        for (std::size_t k = 0; k <= 30; ++k) {
            const auto e = empirical_cdf_envelope(kind, 30, 0.5, k);
            CHECK(e.lower <= double(k) / 30 + 1e-12);
            CHECK(e.upper >= double(k) / 30 - 1e-12);
            CHECK(e.lower >= last_lo - 1e-12);
            CHECK(e.upper >= last_hi - 1e-12);
            last_lo = e.lower;
            last_hi = e.upper;
        }
    }
}
