#include "bdrvi/experiment.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace bdrvi;

namespace {

ExperimentConfig small_config(std::size_t n_sim) {
    ExperimentConfig cfg = ExperimentConfig::desk();
    cfg.n_sim = n_sim;
    cfg.n_test = 500;
    cfg.seed = 11;
    cfg.threads = 1;
    return cfg;
}

double direct_utility(const std::vector<SamplePool>& pools, const Vector& theta, const Vector& x, double kappa) {
    const auto d = x.size() / 2;
    const Vector x1 = x.head(d), x2 = x.tail(d);
    double u = 0.0;
    for (std::size_t j = 0; j < pools.size(); ++j) {
        const auto& s = pools[j].samples;
        double sum = 0.0;
        for (Eigen::Index t = 0; t < s.rows(); ++t) sum += -std::log1p(s.row(t).dot(x1));
        u += theta[static_cast<Eigen::Index>(j)] * sum / static_cast<double>(s.rows());
    }
    return u + 0.5 * kappa * (x1 - x2).squaredNorm();
}

Vector joint(const Vector& a, const Vector& b) {
    Vector x(a.size() + b.size());
    x << a, b;
    return x;
}

} // namespace

TEST_CASE("return stats: symmetric returns have zero Sharpe") {
    Vector r(200);
    for (Eigen::Index t = 0; t < r.size(); ++t) r[t] = t % 2 == 0 ? 0.03 : -0.03;
    const auto s = return_stats(r, 0.10, TailConvention::Level);
    CHECK(std::abs(s.sharpe) <= 1e-15);
    CHECK_FALSE(s.sharpe_undefined);
}

TEST_CASE("return stats: constant positive returns") {
    const Vector r = Vector::Constant(50, 0.02);
    for (auto conv : {TailConvention::Level, TailConvention::Upper}) {
        const auto s = return_stats(r, 0.10, conv);
        CHECK(s.var == -0.02);
        CHECK(s.expected_shortfall == -0.02);
        CHECK(s.raroc == -1.0);
        CHECK(s.raroc_sign_degenerate);
        CHECK(s.sharpe_undefined);
        CHECK(std::isnan(s.sharpe));
    }
}

TEST_CASE("return stats: hand example under both tail conventions") {
    Vector r(10);
    r << -0.03, -0.01, 0.0, 0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07;
    const double mean = 0.024;
    double ss = 0.0;
    for (Eigen::Index t = 0; t < r.size(); ++t) ss += (r[t] - mean) * (r[t] - mean);
    const double sd = std::sqrt(ss / 9.0);

    // losses sorted: -0.07 ... 0.00, 0.01, 0.03
    const auto upper = return_stats(r, 0.10, TailConvention::Upper);
    CHECK(upper.mean == doctest::Approx(mean).epsilon(1e-14));
    CHECK(upper.sharpe == doctest::Approx(mean / sd).epsilon(1e-13));
    CHECK(upper.var == doctest::Approx(0.01).epsilon(1e-14));
    CHECK(upper.expected_shortfall == doctest::Approx(0.02).epsilon(1e-14));
    CHECK(upper.raroc == doctest::Approx(1.2).epsilon(1e-12));
    CHECK_FALSE(upper.raroc_sign_degenerate);

    // Level convention: VaR is the first order statistic, so ES is the mean loss.
    const auto level = return_stats(r, 0.10, TailConvention::Level);
    CHECK(level.var == doctest::Approx(-0.07).epsilon(1e-14));
    CHECK(level.expected_shortfall == doctest::Approx(-mean).epsilon(1e-13));
    CHECK(level.raroc == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(level.raroc_sign_degenerate);
}

TEST_CASE("return stats: ties at the threshold all enter the shortfall") {
    Vector r(5);
    r << -0.02, -0.02, 0.01, 0.01, 0.01;
    const auto s = return_stats(r, 0.4, TailConvention::Upper); // q = 0.6, k = 3
    CHECK(s.var == doctest::Approx(-0.01));
    CHECK(s.expected_shortfall == doctest::Approx((-0.01 * 3 + 0.02 * 2) / 5.0));
}

TEST_CASE("return stats rejects bad input") {
    CHECK_THROWS_AS(return_stats(Vector::Constant(1, 0.1), 0.1, TailConvention::Level), InvalidArgument);
    CHECK_THROWS_AS(return_stats(Vector::Constant(4, 0.1), 1.0, TailConvention::Level), InvalidArgument);
}

TEST_CASE("summarize") {
    const auto s = summarize({1.0, 2.0, 4.0});
    CHECK(s.mean == doctest::Approx(7.0 / 3.0));
    CHECK(s.variance == doctest::Approx(((1 - 7.0 / 3) * (1 - 7.0 / 3) + (2 - 7.0 / 3) * (2 - 7.0 / 3) +
                                         (4 - 7.0 / 3) * (4 - 7.0 / 3)) /
                                        2.0));
    CHECK(s.trials_completed == 3);
    const auto one = summarize({5.0});
    CHECK(one.mean == 5.0);
    CHECK(one.variance == 0.0);
    const auto none = summarize({});
    CHECK(none.trials_completed == 0);
    CHECK(std::isnan(none.mean));
}

TEST_CASE("trial seeds are stable, distinct, and shared across methods") {
    std::set<std::uint64_t> seen;
    for (std::size_t n : {20u, 200u, 1000u})
        for (std::size_t t = 0; t < 20; ++t) seen.insert(trial_seed(7, n, t));
    CHECK(seen.size() == 60);
    CHECK(trial_seed(7, 20, 3) == trial_seed(7, 20, 3));
    CHECK(trial_seed(7, 20, 3) != trial_seed(8, 20, 3));
    const auto a = experiment_seeds(7), b = experiment_seeds(7);
    CHECK(a.truth == b.truth);
    CHECK(a.truth != a.test);
    CHECK(a.test != a.pool);
}

TEST_CASE("config validation") {
    ExperimentConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    auto bad = cfg;
    bad.tail_level = 1.0;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    bad = cfg;
    bad.theta_c = Vector::Constant(3, 0.5);
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    bad = cfg;
    bad.lambda = 0.0;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    bad = cfg;
    bad.trials = 0;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    CHECK(ExperimentConfig::desk().n_sim == 100'000);
    CHECK(ExperimentConfig::full_scale().n_sim == 1'000'000);
    CHECK(ExperimentConfig::full_scale().trials == 100);
}

TEST_CASE("metrics: utility matches a direct pool average and x* = x^c gives zeros") {
    const auto ctx = make_context(small_config(4000));
    std::mt19937_64 rng(5);
    for (int rep = 0; rep < 5; ++rep) {
        const Vector x = joint(oracle::random_portfolio(rng, 10), oracle::random_portfolio(rng, 10));
        const double u = account_utility(*ctx.truth_pools, ctx.config.theta_c, x, ctx.config.kappa, 10);
        CHECK(u == doctest::Approx(direct_utility(*ctx.truth_pools, ctx.config.theta_c, x, ctx.config.kappa))
                       .epsilon(1e-12));

        const auto same = metrics(x, x, ctx);
        CHECK(same.residual == 0.0);
        CHECK(same.utility_error == 0.0);

        const Vector y = joint(oracle::random_portfolio(rng, 10), oracle::random_portfolio(rng, 10));
        const auto m = metrics(y, x, ctx);
        CHECK(m.residual == doctest::Approx((y - x).norm()).epsilon(1e-14));
        const double uy = direct_utility(*ctx.truth_pools, ctx.config.theta_c, y, ctx.config.kappa);
        const double rel = (uy - u) / u;
        CHECK(m.utility_error == doctest::Approx(rel * rel).epsilon(1e-9));
        CHECK(m.utility_error >= 0.0);
        const Vector returns = ctx.test_returns * y.head(10);
        CHECK(m.sharpe == doctest::Approx(return_stats(returns, 0.1, TailConvention::Level).sharpe).epsilon(1e-14));
    }
}

TEST_CASE("metrics: all-cash portfolio has undefined Sharpe") {
    const auto ctx = make_context(small_config(2000));
    Vector x_c = Vector::Zero(20);
    x_c[9] = x_c[19] = 1.0;
    const auto m = metrics(Vector::Zero(20), x_c, ctx);
    CHECK(m.sharpe_undefined);
    CHECK(std::isnan(m.raroc));
    CHECK(m.residual == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("ground truth: symmetry, Monte Carlo stability, all-bull comparison") {
    const auto ctx5 = make_context(small_config(100'000));
    const auto ctx4 = make_context(small_config(10'000));
    const auto t5 = solve_truth(ctx5);
    const auto t4 = solve_truth(ctx4);
    CHECK(t5.solve.converged);
    CHECK(t4.solve.converged);
    CHECK((t5.x_c.head(10) - t5.x_c.tail(10)).norm() <= 1e-8);
    CHECK((t5.x_c - t4.x_c).norm() <= 0.05);
    for (Eigen::Index i = 0; i < t5.x_c.size(); ++i) CHECK(t5.x_c[i] >= 0.0);
    CHECK(t5.x_c.head(10).sum() <= 1.0 + 1e-12);

    auto bull_cfg = small_config(10'000);
    bull_cfg.theta_c = Vector::Zero(3);
    bull_cfg.theta_c[2] = 1.0;
    const auto bull = solve_truth(make_context(bull_cfg));
    CHECK(bull.solve.converged);
    const Vector mu3 = ctx4.components[2].mean;
    // Ties are possible when both equilibria sit on the same vertex.
    CHECK(bull.x_c.head(10).dot(mu3) >= t4.x_c.head(10).dot(mu3) - 1e-12);
}

TEST_CASE("run_method: single-sample SAA converges") {
    auto cfg = small_config(2000);
    const auto ctx = make_context(cfg);
    const SampleMatrix one = sample_mixture(cfg.theta_c, ctx.components, 1, 99);
    const auto r = run_method(Method::Saa, one, ctx);
    CHECK(r.solve.converged);
    CHECK(r.radius == 0.0);
    CHECK_THROWS_AS(run_method(Method::Saa, SampleMatrix(0, 10), ctx), InvalidArgument);
    CHECK_THROWS_AS(run_method(Method::Saa, SampleMatrix::Zero(3, 4), ctx), InvalidArgument);
}

TEST_CASE("bayes field with zero radius is the fixed-weight field") {
    const auto cfg = small_config(2000);
    const auto ctx = make_context(cfg);
    PosteriorSummary summary;
    summary.theta_hat = Vector(3);
    summary.theta_hat << 0.6, 0.3, 0.1;
    summary.sigma_diag = Vector::Zero(3);
    summary.delta_hat = 0.0;
    const auto set = build_bayes_set(summary, 0.0).set;
    CHECK(set.radius == 0.0);
    const auto source = quadrature_source(ctx.components, 20);
    const auto field = bayes_field(source, 3, 10, {set}, cfg.lambda, cfg.kappa);
    std::mt19937_64 rng(17);
    for (int rep = 0; rep < 20; ++rep) {
        const Vector x1 = oracle::random_portfolio(rng, 10), x2 = oracle::random_portfolio(rng, 10);
        const auto v = field.evaluate(joint(x1, x2));
        for (const auto& w : v.weights) CHECK((w - summary.theta_hat).lpNorm<Eigen::Infinity>() <= 1e-15);
        const Vector f1 = source(x1).grad * summary.theta_hat + cfg.kappa * (x1 - x2);
        const Vector f2 = source(x2).grad * summary.theta_hat + cfg.kappa * (x2 - x1);
        CHECK((v.field - joint(f1, f2)).lpNorm<Eigen::Infinity>() <= 1e-14);
    }
}

TEST_CASE("run_method is deterministic and uses the configured radii") {
    auto cfg = small_config(2000);
    cfg.max_iter = 3000;
    const auto ctx = make_context(cfg);
    const SampleMatrix train = sample_mixture(cfg.theta_c, ctx.components, 50, trial_seed(cfg.seed, 50, 0));
    for (auto m : {Method::Bayes, Method::Saa, Method::L1, Method::Chi2}) {
        const auto a = run_method(m, train, ctx);
        const auto b = run_method(m, train, ctx);
        CHECK(a.solve.x_star == b.solve.x_star);
        CHECK(a.solve.iterations == b.solve.iterations);
        if (m == Method::Bayes) {
            REQUIRE(a.posterior);
            CHECK(a.radius == a.posterior->delta_hat);
        }
        if (m == Method::L1) CHECK(a.radius == empirical_radius(EmpiricalKind::L1, 50, cfg.alpha));
        if (m == Method::Chi2) CHECK(a.radius == empirical_radius(EmpiricalKind::ModifiedChi2, 50, cfg.alpha));
    }
}

TEST_CASE("tiny benchmark: deterministic across runs and thread counts") {
    auto cfg = small_config(2000);
    cfg.sample_sizes = {20, 60};
    cfg.trials = 3;
    cfg.max_iter = 1500;
    cfg.truth_warm_start = false;
    cfg.truth_max_iter = 20000;
    std::size_t callbacks = 0;
    const auto a = benchmark(cfg, [&](const MetricsReport&) { ++callbacks; });
    cfg.threads = 3;
    const auto b = benchmark(cfg);
    CHECK(callbacks == 4 * 2 * 3);
    REQUIRE(a.cells.size() == 8);
    REQUIRE(a.trials.size() == b.trials.size());
    CHECK(a.failures.empty());
    for (std::size_t i = 0; i < a.trials.size(); ++i) {
        CHECK(a.trials[i].method == b.trials[i].method);
        CHECK(a.trials[i].trial == b.trials[i].trial);
        CHECK(a.trials[i].residual == b.trials[i].residual);
        CHECK(a.trials[i].utility_error == b.trials[i].utility_error);
        CHECK(a.trials[i].iterations == b.trials[i].iterations);
    }
    for (std::size_t i = 0; i < a.cells.size(); ++i) {
        const auto& c = a.cells[i];
        CHECK(c.residual.mean == b.cells[i].residual.mean);
        CHECK(c.residual.variance == b.cells[i].residual.variance);
        CHECK(c.residual.variance >= 0.0);
        CHECK(c.utility_error.variance >= 0.0);
        CHECK(c.residual.trials_completed == cfg.trials);
        CHECK(c.raroc.trials_completed <= cfg.trials);
    }
    // Methods at the same (N, trial) see the same training data.
    CHECK(a.trials[0].seed == a.trials[6].seed);
    CHECK(a.cell(Method::Bayes, 60).sample_size == 60);
    CHECK_THROWS_AS(a.cell(Method::Bayes, 7), InvalidArgument);
}

TEST_CASE("envelope study: sandwich, monotone envelopes, table layout") {
    EnvelopeStudyConfig cfg;
    cfg.seed = 3;
    const auto tables = envelope_study(cfg);
    REQUIRE(tables.size() == 9);
    CHECK(tables[0].method == Method::Bayes);
    CHECK(tables[0].sample_size == 20);
    CHECK(tables[8].method == Method::Chi2);
    for (const auto& t : tables) {
        REQUIRE(t.t.size() == 200);
        CHECK(t.t[0] == -6.0);
        CHECK(t.t[199] == 6.0);
        for (Eigen::Index i = 0; i < 200; ++i) {
            CHECK(t.lower[i] <= t.nominal[i] + 1e-12);
            CHECK(t.nominal[i] <= t.upper[i] + 1e-12);
            CHECK(t.lower[i] >= -1e-12);
            CHECK(t.upper[i] <= 1.0 + 1e-12);
            if (i > 0) {
                CHECK(t.lower[i] >= t.lower[i - 1] - 1e-12);
                CHECK(t.upper[i] >= t.upper[i - 1] - 1e-12);
            }
        }
    }
    CHECK(envelope_study_sample(cfg, 20) == envelope_study_sample(cfg, 20));
    auto bad = cfg;
    bad.methods = {Method::Saa};
    CHECK_THROWS_AS(envelope_study(bad), InvalidArgument);
}
