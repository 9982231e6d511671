#include "bdrvi/experiment.hpp"

#include "bdrvi/empirical.hpp"
#include "bdrvi/quantiles.hpp"
#include "bdrvi/random.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

namespace bdrvi {

std::string to_string(Method m) {
    switch (m) {
    case Method::Bayes: return "bayes";
    case Method::Saa: return "saa";
    case Method::L1: return "l1";
    case Method::Chi2: return "chi2";
    }
    return "unknown";
}

Method method_from_string(const std::string& s) {
    if (s == "bayes") return Method::Bayes;
    if (s == "saa") return Method::Saa;
    if (s == "l1") return Method::L1;
    if (s == "chi2") return Method::Chi2;
    throw InvalidArgument("unknown method '" + s + "' (expected bayes, saa, l1 or chi2)");
}

std::string to_string(TailConvention t) { return t == TailConvention::Level ? "as_paper" : "upper"; }

TailConvention tail_convention_from_string(const std::string& s) {
    if (s == "as_paper") return TailConvention::Level;
    if (s == "upper") return TailConvention::Upper;
    throw InvalidArgument("unknown tail convention '" + s + "' (expected as_paper or upper)");
}

std::string to_string(ExpectationBackend b) { return b == ExpectationBackend::Pool ? "pool" : "quadrature"; }

ExpectationBackend expectation_backend_from_string(const std::string& s) {
    if (s == "pool") return ExpectationBackend::Pool;
    if (s == "quadrature") return ExpectationBackend::Quadrature;
    throw InvalidArgument("unknown expectation backend '" + s + "' (expected pool or quadrature)");
}

Vector ExperimentConfig::default_theta_c() {
    Vector t(3);
    t << 0.5, 0.25, 0.25;
    return t;
}

ExperimentConfig ExperimentConfig::full_scale() { return ExperimentConfig{}; }

ExperimentConfig ExperimentConfig::desk() {
    ExperimentConfig cfg;
    cfg.n_sim = 100'000;
    cfg.trials = 20;
    cfg.sample_sizes = {20, 200, 1000};
    return cfg;
}

void ExperimentConfig::validate() const {
    factor.validate();
    if (static_cast<std::size_t>(theta_c.size()) != factor.regimes.size())
        throw InvalidArgument("theta_c length must equal the number of regimes");
    require_weight_vector(theta_c, "theta_c");
    if (!(r_c >= 0.0)) throw InvalidArgument("r_c must be nonnegative");
    if (!(kappa >= 0.0)) throw InvalidArgument("kappa must be nonnegative");
    if (!(lambda >= 0.0)) throw InvalidArgument("lambda must be nonnegative");
    if (baseline_lambda && !(*baseline_lambda >= 0.0)) throw InvalidArgument("baseline_lambda must be nonnegative");
    if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must lie in (0,1)");
    if (sample_sizes.empty()) throw InvalidArgument("sample_sizes is empty");
    for (auto n : sample_sizes)
        if (n == 0) throw InvalidArgument("sample sizes must be positive");
    if (trials == 0) throw InvalidArgument("trials must be positive");
    if (n_sim == 0) throw InvalidArgument("n_sim must be positive");
    if (n_test < 2) throw InvalidArgument("n_test must be at least 2");
    if (!(tail_level > 0.0 && tail_level < 1.0)) throw InvalidArgument("tail_level must lie in (0,1)");
    if (methods.empty()) throw InvalidArgument("methods is empty");
    if (pool_size == 0) throw InvalidArgument("pool_size must be positive");
    if (quadrature_nodes == 0) throw InvalidArgument("quadrature_nodes must be positive");
    if (!(eta >= 0.0)) throw InvalidArgument("eta must be nonnegative (0 selects the Lipschitz default)");
    if (eta == 0.0 && lambda == 0.0) throw InvalidArgument("eta must be given when lambda = 0");
    if (!(eps > 0.0) || !(truth_eps > 0.0)) throw InvalidArgument("eps and truth_eps must be positive");
    if (max_iter == 0 || truth_max_iter == 0) throw InvalidArgument("max_iter and truth_max_iter must be positive");
    for (auto m : methods)
        if (m == Method::Bayes && !(lambda > 0.0))
            throw InvalidArgument("the Bayesian method needs lambda > 0");
}

ExperimentSeeds experiment_seeds(std::uint64_t base) {
    return {derive_seed(base, {label_key("truth")}), derive_seed(base, {label_key("test")}),
            derive_seed(base, {label_key("pool")})};
}

std::uint64_t trial_seed(std::uint64_t base, std::size_t sample_size, std::size_t trial) {
    return derive_seed(base, {label_key("train"), static_cast<std::uint64_t>(sample_size),
                              static_cast<std::uint64_t>(trial)});
}

ExperimentContext make_context(const ExperimentConfig& cfg) {
    cfg.validate();
    ExperimentContext ctx;
    ctx.config = cfg;
    ctx.seeds = experiment_seeds(cfg.seed);
    ctx.components = regime_distributions(cfg.factor);
    ctx.truth_pools = std::make_shared<const std::vector<SamplePool>>(
        build_pools(ctx.components, cfg.n_sim, ctx.seeds.truth));
    if (cfg.expectation == ExpectationBackend::Pool)
        ctx.method_pools = std::make_shared<const std::vector<SamplePool>>(
            build_pools(ctx.components, cfg.pool_size, ctx.seeds.pool));
    ctx.test_returns = sample_mixture(cfg.theta_c, ctx.components, cfg.n_test, ctx.seeds.test);
    ctx.lipschitz = estimate_lipschitz_params(ctx.components, *ctx.truth_pools, cfg.lambda, cfg.kappa);
    ctx.eta = cfg.eta > 0.0 ? cfg.eta : lipschitz_bound(ctx.lipschitz).default_eta;
    return ctx;
}

namespace {

std::size_t asset_count(const ExperimentContext& ctx) { return ctx.components.front().dim(); }

SolverConfig solver_config(const ExperimentContext& ctx, double eps, std::size_t max_iter) {
    SolverConfig sc;
    sc.eta = ctx.eta;
    sc.eps = eps;
    sc.max_iter = max_iter;
    sc.x0 = uniform_start(2, asset_count(ctx));
    return sc;
}

ExpectationFn method_source(const ExperimentContext& ctx) {
    if (ctx.config.expectation == ExpectationBackend::Quadrature)
        return quadrature_source(ctx.components, ctx.config.quadrature_nodes);
    return pool_expectations(ctx.method_pools);
}

} // namespace

TruthResult solve_truth(const ExperimentContext& ctx) {
    const auto& cfg = ctx.config;
    const std::size_t d = asset_count(ctx);
    const std::size_t n = ctx.components.size();
    const BoxSimplexSet truth_set(cfg.theta_c, 0.0);
    const auto projector = portfolio_projector(2, d);
    SolverConfig sc = solver_config(ctx, cfg.truth_eps, cfg.truth_max_iter);

    TruthResult out;
    if (cfg.truth_warm_start) {
        const auto exact = bayes_field(quadrature_source(ctx.components, cfg.quadrature_nodes), n, d, {truth_set},
                                       cfg.lambda, cfg.kappa);
        const auto warm = extragradient(exact, projector, sc);
        out.warm_start_iterations = warm.iterations;
        sc.x0 = warm.x_star;
    }
    const auto field = bayes_field(pool_expectations(ctx.truth_pools), n, d, {truth_set}, cfg.lambda, cfg.kappa);
    out.solve = extragradient(field, projector, sc);
    out.x_c = out.solve.x_star;
    return out;
}

MethodResult run_method(Method method, const SampleMatrix& train, const ExperimentContext& ctx) {
    const auto& cfg = ctx.config;
    if (train.rows() == 0) throw InvalidArgument("run_method: empty training sample");
    const std::size_t d = asset_count(ctx);
    if (static_cast<std::size_t>(train.cols()) != d) throw InvalidArgument("run_method: training data has wrong width");
    const auto projector = portfolio_projector(2, d);
    const SolverConfig sc = solver_config(ctx, cfg.eps, cfg.max_iter);
    const auto count = static_cast<std::size_t>(train.rows());

    MethodResult out;
    if (method == Method::Bayes) {
        const auto summary = posterior_summary(train, ctx.components, DirichletPrior::uniform(ctx.components.size()),
                                               cfg.alpha, cfg.sigma_scaling);
        const auto set = build_bayes_set(summary, cfg.r_c).set;
        out.radius = set.radius;
        out.posterior = summary;
        const auto field =
            bayes_field(method_source(ctx), ctx.components.size(), d, {set}, cfg.lambda, cfg.kappa);
        out.solve = extragradient(field, projector, sc);
        return out;
    }

    EmpiricalBall ball;
    ball.atoms = count;
    switch (method) {
    case Method::Saa:
        ball.kind = EmpiricalKind::L1;
        ball.radius = 0.0;
        break;
    case Method::L1:
        ball.kind = EmpiricalKind::L1;
        ball.radius = empirical_radius(EmpiricalKind::L1, count, cfg.alpha);
        break;
    case Method::Chi2:
        ball.kind = EmpiricalKind::ModifiedChi2;
        ball.radius = empirical_radius(EmpiricalKind::ModifiedChi2, count, cfg.alpha);
        break;
    case Method::Bayes: break;
    }
    out.radius = ball.radius;
    const auto field = empirical_field(std::make_shared<const SampleMatrix>(train), ball,
                                       cfg.resolved_baseline_lambda(), cfg.kappa);
    out.solve = extragradient(field, projector, sc);
    return out;
}

double account_utility(const std::vector<SamplePool>& pools, const Vector& theta, const Vector& x, double kappa,
                       std::size_t assets) {
    if (pools.size() != static_cast<std::size_t>(theta.size()))
        throw InvalidArgument("account_utility: weight length does not match the pools");
    const auto d = static_cast<Eigen::Index>(assets);
    if (x.size() != 2 * d) throw InvalidArgument("account_utility: expected a two-account joint vector");
    const Vector x1 = x.head(d);
    const Vector x2 = x.tail(d);
    Vector grad(d);
    double value = 0.0;
    for (std::size_t j = 0; j < pools.size(); ++j) {
        if (theta[static_cast<Eigen::Index>(j)] == 0.0) continue;
        double loss = 0.0;
        loss_and_gradient(pools[j].samples, x1, loss, grad, j);
        value += theta[static_cast<Eigen::Index>(j)] * loss;
    }
    return value + 0.5 * kappa * (x1 - x2).squaredNorm();
}

ReturnStats return_stats(const Vector& returns, double tail_level, TailConvention convention) {
    const auto n = returns.size();
    if (n < 2) throw InvalidArgument("return_stats: need at least two returns");
    if (!(tail_level > 0.0 && tail_level < 1.0)) throw InvalidArgument("return_stats: tail level must lie in (0,1)");
    ReturnStats out;
    // Moments about the first return so constant series give exactly zero spread.
    const double shift = returns[0];
    const double offset = (returns.array() - shift).mean();
    out.mean = shift + offset;
    const double var = (returns.array() - shift - offset).square().sum() / static_cast<double>(n - 1);
    if (var > 0.0) {
        out.sharpe = out.mean / std::sqrt(var);
    } else {
        out.sharpe = std::numeric_limits<double>::quiet_NaN();
        out.sharpe_undefined = true;
    }

    std::vector<double> losses(static_cast<std::size_t>(n));
    for (Eigen::Index t = 0; t < n; ++t) losses[static_cast<std::size_t>(t)] = -returns[t];
    std::sort(losses.begin(), losses.end());
    const double q = convention == TailConvention::Level ? tail_level : 1.0 - tail_level;
    // 1-based lower order statistic at ceil(q N); the 1e-9 guards q N landing a hair above an integer.
    auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n) - 1e-9));
    k = std::clamp<std::size_t>(k, 1, static_cast<std::size_t>(n));
    out.var = losses[k - 1];
    double tail_excess = 0.0;
    std::size_t tail_count = 0;
    for (double l : losses) {
        if (l >= out.var) {
            tail_excess += l - out.var;
            ++tail_count;
        }
    }
    out.expected_shortfall = out.var + tail_excess / static_cast<double>(tail_count);
    out.raroc = out.mean / out.expected_shortfall;
    out.raroc_sign_degenerate = !(out.expected_shortfall > 0.0);
    return out;
}

MetricsReport metrics(const Vector& x_star, const Vector& x_c, const ExperimentContext& ctx) {
    const auto& cfg = ctx.config;
    const std::size_t d = asset_count(ctx);
    if (x_star.size() != x_c.size() || static_cast<std::size_t>(x_star.size()) != 2 * d)
        throw InvalidArgument("metrics: joint vectors have the wrong length");
    MetricsReport out;
    out.residual = (x_star - x_c).norm();
    const double u_c = account_utility(*ctx.truth_pools, cfg.theta_c, x_c, cfg.kappa, d);
    if (u_c == 0.0) throw DomainError("metrics: U(x^c) = 0, relative utility error undefined");
    const double u_star = account_utility(*ctx.truth_pools, cfg.theta_c, x_star, cfg.kappa, d);
    const double rel = (u_star - u_c) / u_c;
    out.utility_error = rel * rel;

    const Vector returns = ctx.test_returns * x_star.head(static_cast<Eigen::Index>(d));
    const auto stats = return_stats(returns, cfg.tail_level, cfg.tail_convention);
    out.sharpe = stats.sharpe;
    out.sharpe_undefined = stats.sharpe_undefined;
    out.raroc = stats.raroc;
    out.raroc_sign_degenerate = stats.raroc_sign_degenerate;
    return out;
}

MetricSummary summarize(const std::vector<double>& values) {
    MetricSummary out;
    out.trials_completed = values.size();
    if (values.empty()) {
        out.mean = std::numeric_limits<double>::quiet_NaN();
        out.variance = std::numeric_limits<double>::quiet_NaN();
        return out;
    }
    double sum = 0.0;
    for (double v : values) sum += v;
    out.mean = sum / static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - out.mean) * (v - out.mean);
        out.variance = ss / static_cast<double>(values.size() - 1);
    }
    return out;
}

const BenchmarkCell& BenchmarkReport::cell(Method m, std::size_t n) const {
    for (const auto& c : cells)
        if (c.method == m && c.sample_size == n) return c;
    throw InvalidArgument("benchmark report has no cell (" + to_string(m) + ", " + std::to_string(n) + ")");
}

BenchmarkReport benchmark(const ExperimentConfig& cfg, const TrialCallback& on_trial) {
    const ExperimentContext ctx = make_context(cfg);
    BenchmarkReport report;
    report.seeds = ctx.seeds;
    report.eta = ctx.eta;
    report.truth = solve_truth(ctx);
    const Vector& x_c = report.truth.x_c;

    struct Task {
        Method method;
        std::size_t n;
        std::size_t trial;
    };
    std::vector<Task> tasks;
    for (auto m : cfg.methods)
        for (auto n : cfg.sample_sizes)
            for (std::size_t t = 0; t < cfg.trials; ++t) tasks.push_back({m, n, t});

    std::vector<std::optional<MetricsReport>> results(tasks.size());
    std::vector<std::string> errors(tasks.size());
    std::atomic<std::size_t> next{0};
    std::mutex callback_mutex;

    auto worker = [&] {
        for (std::size_t i = next++; i < tasks.size(); i = next++) {
            const Task& task = tasks[i];
            const std::uint64_t seed = trial_seed(cfg.seed, task.n, task.trial);
            try {
                const SampleMatrix train = sample_mixture(cfg.theta_c, ctx.components, task.n, seed);
                const auto run = run_method(task.method, train, ctx);
                MetricsReport m = metrics(run.solve.x_star, x_c, ctx);
                m.method = task.method;
                m.sample_size = task.n;
                m.trial = task.trial;
                m.seed = seed;
                m.converged = run.solve.converged;
                m.iterations = run.solve.iterations;
                results[i] = m;
                if (on_trial) {
                    std::lock_guard lock(callback_mutex);
                    on_trial(m);
                }
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    };

    std::size_t threads = cfg.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : cfg.threads;
    threads = std::min(threads, tasks.size());
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    for (auto m : cfg.methods) {
        for (auto n : cfg.sample_sizes) {
            BenchmarkCell cell;
            cell.method = m;
            cell.sample_size = n;
            std::vector<double> residual, utility, sharpe, raroc;
            for (std::size_t i = 0; i < tasks.size(); ++i) {
                if (tasks[i].method != m || tasks[i].n != n) continue;
                if (!results[i]) {
                    ++cell.failures;
                    report.failures.push_back(
                        {m, n, tasks[i].trial, trial_seed(cfg.seed, n, tasks[i].trial), errors[i]});
                    continue;
                }
                const auto& r = *results[i];
                report.trials.push_back(r);
                residual.push_back(r.residual);
                utility.push_back(r.utility_error);
                if (!r.sharpe_undefined) sharpe.push_back(r.sharpe);
                if (!std::isnan(r.raroc)) raroc.push_back(r.raroc);
                if (!r.converged) ++cell.not_converged;
                if (r.raroc_sign_degenerate) ++cell.raroc_sign_degenerate;
            }
            cell.residual = summarize(residual);
            cell.utility_error = summarize(utility);
            cell.sharpe = summarize(sharpe);
            cell.raroc = summarize(raroc);
            report.cells.push_back(cell);
        }
    }
    return report;
}

std::vector<GaussianComponent> EnvelopeStudyConfig::components() const {
    std::vector<GaussianComponent> out;
    for (std::size_t j = 0; j < means.size(); ++j) {
        GaussianComponent c;
        c.mean = Vector::Constant(1, means[j]);
        c.covariance = Matrix::Constant(1, 1, variances[j]);
        out.push_back(std::move(c));
    }
    return out;
}

void EnvelopeStudyConfig::validate() const {
    if (means.empty() || means.size() != variances.size())
        throw InvalidArgument("envelope study: means and variances must be nonempty and of equal length");
    for (double v : variances)
        if (!(v > 0.0)) throw InvalidArgument("envelope study: variances must be positive");
    if (!(t_dof > 0.0)) throw InvalidArgument("envelope study: t_dof must be positive");
    if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("envelope study: alpha must lie in (0,1)");
    if (sample_sizes.empty()) throw InvalidArgument("envelope study: no sample sizes");
    for (auto n : sample_sizes)
        if (n < 2) throw InvalidArgument("envelope study: sample sizes must be at least 2");
    if (grid_points < 2 || !(grid_hi > grid_lo)) throw InvalidArgument("envelope study: bad grid");
    for (auto m : methods)
        if (m == Method::Saa) throw InvalidArgument("envelope study: saa has no ambiguity set");
}

Vector envelope_study_sample(const EnvelopeStudyConfig& cfg, std::size_t sample_size) {
    Rng rng(derive_seed(cfg.seed, {label_key("envelope"), static_cast<std::uint64_t>(sample_size)}));
    std::student_t_distribution<double> dist(cfg.t_dof);
    Vector out(static_cast<Eigen::Index>(sample_size));
    for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = dist(rng);
    return out;
}

std::vector<EnvelopeTable> envelope_study(const EnvelopeStudyConfig& cfg) {
    cfg.validate();
    const auto components = cfg.components();
    const auto g = static_cast<Eigen::Index>(cfg.grid_points);
    Vector grid(g);
    for (Eigen::Index i = 0; i < g; ++i)
        grid[i] = cfg.grid_lo + (cfg.grid_hi - cfg.grid_lo) * static_cast<double>(i) / static_cast<double>(g - 1);
    const boost::math::students_t_distribution<double> truth(cfg.t_dof);
    Vector true_cdf(g);
    Matrix component_cdfs(g, static_cast<Eigen::Index>(components.size()));
    for (Eigen::Index i = 0; i < g; ++i) {
        true_cdf[i] = boost::math::cdf(truth, grid[i]);
        for (std::size_t j = 0; j < components.size(); ++j)
            component_cdfs(i, static_cast<Eigen::Index>(j)) =
                normal_cdf((grid[i] - cfg.means[j]) / std::sqrt(cfg.variances[j]));
    }

    std::vector<EnvelopeTable> out;
    for (auto n : cfg.sample_sizes) {
        Vector data = envelope_study_sample(cfg, n);
        Vector sorted = data;
        std::sort(sorted.data(), sorted.data() + sorted.size());
        Vector ecdf(g);
        std::vector<std::size_t> below(static_cast<std::size_t>(g));
        for (Eigen::Index i = 0; i < g; ++i) {
            below[static_cast<std::size_t>(i)] = static_cast<std::size_t>(
                std::upper_bound(sorted.data(), sorted.data() + sorted.size(), grid[i]) - sorted.data());
            ecdf[i] = static_cast<double>(below[static_cast<std::size_t>(i)]) / static_cast<double>(n);
        }
        for (auto m : cfg.methods) {
            EnvelopeTable table;
            table.method = m;
            table.sample_size = n;
            table.t = grid;
            table.empirical_cdf = ecdf;
            table.true_cdf = true_cdf;
            if (m == Method::Bayes) {
                SampleMatrix samples(data.size(), 1);
                samples.col(0) = data;
                const auto summary = posterior_summary(samples, components,
                                                       DirichletPrior::uniform(components.size()), cfg.alpha,
                                                       cfg.sigma_scaling);
                const auto set = build_bayes_set(summary, 0.0).set;
                const auto env = cdf_envelope(set, component_cdfs);
                table.lower = env.lower;
                table.upper = env.upper;
                table.nominal = env.nominal;
                table.radius = set.radius;
            } else {
                const auto kind = m == Method::L1 ? EmpiricalKind::L1 : EmpiricalKind::ModifiedChi2;
                table.radius = empirical_radius(kind, n, cfg.alpha);
                table.lower.resize(g);
                table.upper.resize(g);
                for (Eigen::Index i = 0; i < g; ++i) {
                    const auto e = empirical_cdf_envelope(kind, n, table.radius, below[static_cast<std::size_t>(i)]);
                    table.lower[i] = e.lower;
                    table.upper[i] = e.upper;
                }
                table.nominal = ecdf;
            }
            out.push_back(std::move(table));
        }
    }
    return out;
}

} // namespace bdrvi
