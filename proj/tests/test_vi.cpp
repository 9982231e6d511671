#include "bdrvi/vi.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace bdrvi;

namespace {

Vector v2(double a, double b) { return (Vector(2) << a, b).finished(); }

Vector theta_c() { return (Vector(3) << 0.5, 0.25, 0.25).finished(); }

Projector orthant() {
    return [](const Vector& y) { return Vector(y.cwiseMax(0.0)); };
}

FieldEvaluator linear_field(std::function<Vector(const Vector&)> f) {
    return FieldEvaluator(1, 2, [f = std::move(f)](const Vector& x) { return FieldValue{f(x), {}}; });
}

Vector joint(const Vector& a, const Vector& b) {
    Vector x(a.size() + b.size());
    x << a, b;
    return x;
}

} // namespace

TEST_CASE("portfolio projection") {
    CHECK((project_portfolio(v2(-0.2, 0.3)) - v2(0.0, 0.3)).norm() < 1e-15);
    CHECK((project_portfolio(v2(0.5, 0.7)) - v2(0.4, 0.6)).norm() < 1e-15);
    CHECK(project_portfolio(v2(0.2, 0.3)) == v2(0.2, 0.3));
    std::mt19937_64 rng(41);
    std::normal_distribution<double> g(0.2, 0.5);
    for (int trial = 0; trial < 300; ++trial) {
        Vector y(5);
        for (auto& v : y) v = g(rng);
        CHECK((project_simplex(y) - oracle::simplex_projection(y)).lpNorm<Eigen::Infinity>() < 1e-14);
        const Vector p = project_portfolio(y);
        CHECK(p.minCoeff() >= 0.0);
        CHECK(p.sum() <= 1.0 + 1e-14);
        // Variational characterization: (y - p)^T (z - p) <= 0 for feasible z.
        for (int k = 0; k < 5; ++k) CHECK((y - p).dot(oracle::random_portfolio(rng, 5) - p) <= 1e-12);
    }
    const auto both = portfolio_projector(2, 2);
    CHECK((both(joint(v2(0.5, 0.7), v2(-0.2, 0.3))) - joint(v2(0.4, 0.6), v2(0.0, 0.3))).norm() < 1e-15);
}

TEST_CASE("extragradient on a strongly monotone field") {
    const Vector target = v2(0.2, 0.3);
    const auto field = linear_field([&](const Vector& x) { return Vector(x - target); });
    SolverConfig cfg;
    cfg.eta = 0.5;
    cfg.x0 = v2(1, 1);
    double last = std::numeric_limits<double>::infinity();
    bool monotone = true;
    const auto r = extragradient(field, orthant(), cfg, [&](std::size_t, const Vector& x) {
        const double d = (x - target).norm();
        monotone = monotone && d <= last;
        last = d;
    });
    CHECK(r.converged);
    // The error contracts by 3/4 per step and the stop quantity is 3/4 of the
    // error, so ||(0.8, 0.7)|| (3/4)^k <= 1e-8 first holds at k = 65.
    CHECK(r.iterations == 65);
    CHECK(r.stop_value <= 1e-8);
    CHECK((r.x_star - target).norm() <= 1e-8);
    CHECK(monotone);
    CHECK(natural_residual(field, orthant(), target) <= 1e-10);
}

TEST_CASE("extragradient on a rotation field") {
    const auto field = linear_field([](const Vector& x) { return v2(x[1], -x[0]); });
    const Projector box = [](const Vector& y) { return Vector(y.cwiseMax(-1.0).cwiseMin(1.0)); };
    SolverConfig cfg;
    cfg.eta = 0.2;
    cfg.x0 = v2(0.9, -0.6);
    const auto r = extragradient(field, box, cfg);
    CHECK(r.converged);
    CHECK(r.x_star.norm() <= 1e-7);
}

TEST_CASE("one hand-executed extragradient step") {
    const auto field = linear_field([](const Vector& x) { return x; });
    SolverConfig cfg;
    cfg.eta = 0.5;
    cfg.x0 = v2(1, 1);
    cfg.max_iter = 1;
    const auto r = extragradient(field, orthant(), cfg);
    // y0 = (1,1) - 0.5 (1,1) = (0.5, 0.5); x1 = (1,1) - 0.5 (0.5, 0.5) = (0.75, 0.75).
    CHECK(r.x_star == v2(0.75, 0.75));
    CHECK(r.stop_value == doctest::Approx(std::sqrt(2.0) * 0.25 + std::sqrt(2.0) * 0.5));
    CHECK_FALSE(r.converged);
}

TEST_CASE("natural residual examples") {
    const auto field = linear_field([](const Vector& x) { return x; });
    CHECK(natural_residual(field, orthant(), v2(1, 1)) == doctest::Approx(std::sqrt(2.0)));
    const auto zero = linear_field([](const Vector& x) { return Vector(x - v2(0.3, 0.3)); });
    CHECK(natural_residual(zero, orthant(), v2(0.3, 0.3)) == 0.0);
}

TEST_CASE("solver configuration is validated") {
    const auto field = linear_field([](const Vector& x) { return x; });
    SolverConfig cfg;
    CHECK_THROWS_AS(extragradient(field, orthant(), cfg), InvalidArgument);
    cfg.eta = 0.1;
    cfg.x0 = Vector::Ones(3);
    CHECK_THROWS_AS(extragradient(field, orthant(), cfg), InvalidArgument);
    cfg.x0 = Vector::Ones(2);
    cfg.max_iter = 0;
    CHECK_THROWS_AS(extragradient(field, orthant(), cfg), InvalidArgument);
}

TEST_CASE("Lipschitz bound") {
    LipschitzParams p{0.5, 0.01, 3, 0.01, 0.1};
    const auto b = lipschitz_bound(p);
    CHECK(std::abs(b.modulus - 8.938) < 1e-3);
    CHECK(std::abs(b.default_eta - 0.0503) < 1e-4);
    CHECK(b.default_eta < 0.5 / b.modulus);
    const double kappa_term = 2.0 * std::sqrt(2.0) * 0.1;
    p.kappa = 0.0;
    CHECK(lipschitz_bound(p).modulus == doctest::Approx(b.modulus - kappa_term));
    const double first = lipschitz_bound(p).modulus;
    p.sigma_bar_sq = 0.02;
    CHECK(lipschitz_bound(p).modulus == doctest::Approx(2.0 * first));
    p.beta = 1.0;
    CHECK_THROWS_AS(lipschitz_bound(p), InvalidArgument);
}

TEST_CASE("estimated Lipschitz parameters for the three-regime model") {
    const auto comps = regime_distributions(three_regime_model());
    const auto pools = build_pools(comps, 20000, 42);
    const auto p = estimate_lipschitz_params(comps, pools, 0.01, 0.1);
    double worst = 0.0, sigma = 0.0;
    for (std::size_t j = 0; j < 3; ++j) {
        worst = std::max(worst, -pools[j].samples.minCoeff());
        sigma = std::max(sigma, comps[j].mean.squaredNorm() + comps[j].covariance.trace());
    }
    CHECK(p.beta == worst);
    CHECK(p.sigma_bar_sq == doctest::Approx(sigma));
    CHECK(p.n == 3);
}

TEST_CASE("Bayesian field structure") {
    const auto comps = regime_distributions(three_regime_model());
    const auto pools = std::make_shared<const std::vector<SamplePool>>(build_pools(comps, 5000, 43));
    std::mt19937_64 rng(44);
    const Vector a = oracle::random_portfolio(rng, 10);
    const Vector b = oracle::random_portfolio(rng, 10);

    // kappa = 0 and a singleton set decouple the accounts.
    const auto decoupled = bayes_field(pools, BoxSimplexSet(theta_c(), 0.0), 0.01, 0.0);
    const Vector f1 = decoupled(joint(a, b));
    const Vector f2 = decoupled(joint(a, a));
    CHECK(f1.head(10) == f2.head(10));
    const Vector expected = expectations(*pools, a).grad * theta_c();
    CHECK((f1.head(10) - expected).norm() < 1e-14);

    // Equal portfolios: the competition term vanishes.
    const auto coupled = bayes_field(pools, BoxSimplexSet(theta_c(), 0.1), 0.01, 0.1);
    const auto without = bayes_field(pools, BoxSimplexSet(theta_c(), 0.1), 0.01, 0.0);
    CHECK(coupled(joint(a, a)) == without(joint(a, a)));
    const auto v = coupled.evaluate(joint(a, b));
    CHECK((v.field.head(10) - without(joint(a, b)).head(10) - 0.1 * (a - b)).norm() < 1e-14);
    // theta_i is the regularized lower-level maximizer.
    CHECK((v.weights[0] - project_box_simplex(BoxSimplexSet(theta_c(), 0.1), expectations(*pools, a).phi / 0.02))
              .norm() < 1e-14);

    // Bitwise determinism.
    CHECK(coupled(joint(a, b)) == coupled(joint(a, b)));
}

TEST_CASE("Bayesian field is monotone") {
    const auto comps = regime_distributions(three_regime_model());
    const auto pools = std::make_shared<const std::vector<SamplePool>>(build_pools(comps, 5000, 45));
    const auto field = bayes_field(pools, BoxSimplexSet(theta_c(), 0.1), 0.01, 0.1);
    std::mt19937_64 rng(46);
    double worst = 0.0;
    for (int trial = 0; trial < 500; ++trial) {
        const Vector x = joint(oracle::random_portfolio(rng, 10), oracle::random_portfolio(rng, 10));
        const Vector z = joint(oracle::random_portfolio(rng, 10), oracle::random_portfolio(rng, 10));
        worst = std::min(worst, (field(x) - field(z)).dot(x - z));
    }
    CHECK(worst >= -1e-8);
}

TEST_CASE("Bayesian solve: finite history, small natural residual, symmetric iterates") {
    const auto comps = regime_distributions(three_regime_model());
    const auto pools = build_pools(comps, 20000, 47);
    const auto params = estimate_lipschitz_params(comps, pools, 0.01, 0.1);
    const auto field = bayes_field(quadrature_source(comps, 20), 3, 10, {BoxSimplexSet(theta_c(), 0.0)}, 0.01, 0.1);
    const auto proj = portfolio_projector(2, 10);
    SolverConfig cfg;
    cfg.eta = lipschitz_bound(params).default_eta;
    cfg.max_iter = 3'000'000;
    double asym = 0.0;
    const auto r = extragradient(field, proj, cfg, [&](std::size_t, const Vector& x) {
        asym = std::max(asym, (x.head(10) - x.tail(10)).norm());
    });
    CHECK(r.converged);
    for (double s : r.residual_history) REQUIRE(std::isfinite(s));
    CHECK(natural_residual(field, proj, r.x_star) <= 10.0 * cfg.eps);
    CHECK(asym <= 1e-10);
}

TEST_CASE("empirical field") {
    const auto comps = regime_distributions(three_regime_model());
    const auto atoms = std::make_shared<const SampleMatrix>(sample_mixture(theta_c(), comps, 40, 48));
    std::mt19937_64 rng(49);
    const Vector a = oracle::random_portfolio(rng, 10);
    const Vector b = oracle::random_portfolio(rng, 10);

    // Zero radius: sample average of the gradients plus competition.
    const auto saa = empirical_field(atoms, {EmpiricalKind::L1, 40, 0.0}, 0.01, 0.1);
    Vector grad = Vector::Zero(10);
    for (Eigen::Index t = 0; t < 40; ++t) {
        const Vector xi = atoms->row(t).transpose();
        grad -= xi / (1.0 + xi.dot(a)) / 40.0;
    }
    CHECK((saa(joint(a, b)).head(10) - grad - 0.1 * (a - b)).norm() < 1e-14);

    const auto one = std::make_shared<const SampleMatrix>(atoms->topRows(1));
    const auto single = empirical_field(one, {EmpiricalKind::ModifiedChi2, 1, 0.0}, 0.0, 0.0);
    CHECK(empirical_field(one, {EmpiricalKind::ModifiedChi2, 1, 0.5}, 0.0, 0.0).evaluate(joint(a, b)).weights[0] ==
          Vector::Ones(1));
    const auto l1_single = empirical_field(one, {EmpiricalKind::L1, 1, 0.5}, 0.0, 0.0);
    CHECK(l1_single.evaluate(joint(a, b)).weights[0] == Vector::Ones(1));
    CHECK(single.evaluate(joint(a, b)).weights[0] == Vector::Ones(1));

    // Identical atoms: every feasible weight gives the SAA gradient.
    const auto same = std::make_shared<const SampleMatrix>(SampleMatrix(atoms->topRows(1).replicate(5, 1)));
    const auto tied = empirical_field(same, {EmpiricalKind::L1, 5, 0.4}, 0.0, 0.0);
    const Vector xi = same->row(0).transpose();
    CHECK((tied(joint(a, b)).head(10) + xi / (1.0 + xi.dot(a))).norm() < 1e-14);

    // Robust weights tilt toward large losses.
    const auto robust = empirical_field(atoms, {EmpiricalKind::L1, 40, 0.5}, 0.0, 0.0);
    const auto w = robust.evaluate(joint(a, b)).weights[0];
    const Vector losses = -((*atoms * a).array() + 1.0).log().matrix();
    CHECK(w.dot(losses) >= losses.mean() - 1e-15);
}
