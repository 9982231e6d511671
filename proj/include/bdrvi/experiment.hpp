#pragma once

#include "bdrvi/bayes.hpp"
#include "bdrvi/mixture.hpp"
#include "bdrvi/types.hpp"
#include "bdrvi/vi.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace bdrvi {

enum class Method { Bayes, Saa, L1, Chi2 };

std::string to_string(Method m);
Method method_from_string(const std::string& s);

/// Which order statistic defines the VaR threshold of the losses l = -R.
///   Level:   the tail-level quantile (index ceil(q N), q = tail level)
///   Upper:   the (1 - q) quantile, i.e. the conventional worst-q tail
enum class TailConvention { Level, Upper };

std::string to_string(TailConvention t);
TailConvention tail_convention_from_string(const std::string& s);

/// How E_{Q_j}[.] is evaluated for the Bayesian method.
///   Pool:       fixed common-random-number pools of `pool_size` draws
///   Quadrature: Gauss-Hermite on the univariate law of x^T xi
enum class ExpectationBackend { Pool, Quadrature };

std::string to_string(ExpectationBackend b);
ExpectationBackend expectation_backend_from_string(const std::string& s);

struct ExperimentConfig {
    FactorModelConfig factor = three_regime_model();
    Vector theta_c = default_theta_c();
    double r_c = 0.0;
    double kappa = 0.1;
    double lambda = 0.01;
    /// Lower-level regularization for the SAA / l1 / chi2 baselines; unset means `lambda`.
    std::optional<double> baseline_lambda;
    double alpha = 0.05;
    std::vector<std::size_t> sample_sizes{20, 50, 500, 1000, 3000};
    std::size_t trials = 100;
    std::size_t n_sim = 1'000'000;
    std::size_t n_test = 5000;
    double tail_level = 0.10;
    std::uint64_t seed = 0;
    std::vector<Method> methods{Method::L1, Method::Chi2, Method::Saa, Method::Bayes};
    SigmaScaling sigma_scaling = SigmaScaling::Bvm;
    TailConvention tail_convention = TailConvention::Level;
    ExpectationBackend expectation = ExpectationBackend::Quadrature;
    std::size_t pool_size = 20000;
    std::size_t quadrature_nodes = 20;

    /// Shared by every method; eta = 0 selects the Lipschitz default.
    double eta = 0.0;
    double eps = 1e-8;
    std::size_t max_iter = 200000;
    double truth_eps = 1e-9;
    std::size_t truth_max_iter = 5'000'000;
    /// Start the pooled ground-truth solve from the quadrature equilibrium.
    bool truth_warm_start = true;
    /// Worker threads for independent trials; 0 = hardware concurrency.
    std::size_t threads = 0;

    static Vector default_theta_c();
    /// Full study scale.
    static ExperimentConfig full_scale();
    /// Reduced scale for routine runs: N_sim = 1e5, 20 trials, N in {20, 200, 1000}.
    static ExperimentConfig desk();

    double resolved_baseline_lambda() const { return baseline_lambda.value_or(lambda); }
    void validate() const;
};

/// Seeds derived from the base seed; every random input of a run comes from one of these.
struct ExperimentSeeds {
    std::uint64_t truth = 0; ///< N_sim pools (ground truth and utility)
    std::uint64_t test = 0;  ///< out-of-sample returns
    std::uint64_t pool = 0;  ///< Bayesian expectation pools
};

ExperimentSeeds experiment_seeds(std::uint64_t base);

/// Training-data seed of (N, trial). Shared by all methods so they see the same data.
std::uint64_t trial_seed(std::uint64_t base, std::size_t sample_size, std::size_t trial);

/// Problem data shared by all trials of one run.
struct ExperimentContext {
    ExperimentConfig config;
    ExperimentSeeds seeds;
    std::vector<GaussianComponent> components;
    std::shared_ptr<const std::vector<SamplePool>> truth_pools;
    std::shared_ptr<const std::vector<SamplePool>> method_pools; ///< empty with the quadrature backend
    SampleMatrix test_returns;
    double eta = 0.0;
    LipschitzParams lipschitz;
};

ExperimentContext make_context(const ExperimentConfig& cfg);

struct TruthResult {
    Vector x_c;
    SolveResult solve;
    std::size_t warm_start_iterations = 0;
};

/// Ground truth: degenerate ambiguity {theta_c} on the N_sim pools.
TruthResult solve_truth(const ExperimentContext& ctx);

struct MethodResult {
    SolveResult solve;
    std::optional<PosteriorSummary> posterior; ///< Bayesian method only
    double radius = 0.0;                       ///< ambiguity radius actually used
};

MethodResult run_method(Method method, const SampleMatrix& train, const ExperimentContext& ctx);

struct MetricsReport {
    Method method = Method::Bayes;
    std::size_t sample_size = 0;
    std::size_t trial = 0;
    std::uint64_t seed = 0;
    double residual = 0.0;
    double utility_error = 0.0;
    double sharpe = 0.0;
    double raroc = 0.0;
    bool sharpe_undefined = false;   ///< zero return variance; sharpe is NaN
    bool raroc_sign_degenerate = false; ///< expected shortfall <= 0
    bool converged = false;
    std::size_t iterations = 0;
};

/// sum_j theta_j pool-mean_j(-log(1 + xi^T x^1)) + kappa/2 ||x^1 - x^2||^2.
double account_utility(const std::vector<SamplePool>& pools, const Vector& theta, const Vector& x, double kappa,
                       std::size_t assets);

struct ReturnStats {
    double mean = 0.0;
    double sharpe = 0.0;
    double raroc = 0.0;
    double var = 0.0;
    double expected_shortfall = 0.0;
    bool sharpe_undefined = false;
    bool raroc_sign_degenerate = false;
};

ReturnStats return_stats(const Vector& returns, double tail_level, TailConvention convention);

MetricsReport metrics(const Vector& x_star, const Vector& x_c, const ExperimentContext& ctx);

struct MetricSummary {
    double mean = 0.0;
    double variance = 0.0; ///< unbiased; 0 with a single trial
    std::size_t trials_completed = 0;
};

struct BenchmarkCell {
    Method method = Method::Bayes;
    std::size_t sample_size = 0;
    MetricSummary residual;
    MetricSummary utility_error;
    MetricSummary sharpe;
    MetricSummary raroc;
    std::size_t failures = 0;
    std::size_t not_converged = 0;
    std::size_t raroc_sign_degenerate = 0;
};

struct TrialFailure {
    Method method = Method::Bayes;
    std::size_t sample_size = 0;
    std::size_t trial = 0;
    std::uint64_t seed = 0;
    std::string message;
};

struct BenchmarkReport {
    TruthResult truth;
    double eta = 0.0;
    ExperimentSeeds seeds;
    std::vector<BenchmarkCell> cells; ///< in (method, N) order of the config
    std::vector<MetricsReport> trials; ///< in (method, N, trial) order
    std::vector<TrialFailure> failures;

    const BenchmarkCell& cell(Method m, std::size_t n) const;
};

MetricSummary summarize(const std::vector<double>& values);

using TrialCallback = std::function<void(const MetricsReport&)>;

BenchmarkReport benchmark(const ExperimentConfig& cfg, const TrialCallback& on_trial = {});

/// One-dimensional CDF-envelope study: Student-t data, a fixed Gaussian
/// dictionary for the Bayesian set, and the l1 / chi2 empirical balls.
struct EnvelopeStudyConfig {
    std::vector<double> means{0.0, 0.0, 0.0, -2.8, 2.8};
    std::vector<double> variances{0.45, 1.1, 4.0, 0.8, 0.8};
    double t_dof = 3.0;
    double alpha = 0.05;
    std::vector<std::size_t> sample_sizes{20, 50, 200};
    std::size_t grid_points = 200;
    double grid_lo = -6.0;
    double grid_hi = 6.0;
    std::uint64_t seed = 0;
    SigmaScaling sigma_scaling = SigmaScaling::Bvm;
    std::vector<Method> methods{Method::Bayes, Method::L1, Method::Chi2};

    std::vector<GaussianComponent> components() const;
    void validate() const;
};

struct EnvelopeTable {
    Method method = Method::Bayes;
    std::size_t sample_size = 0;
    Vector t;
    Vector lower;
    Vector upper;
    Vector nominal;
    Vector empirical_cdf;
    Vector true_cdf;
    double radius = 0.0;
};

/// Draws of the Student-t data for one sample size (seed derived from (seed, N)).
Vector envelope_study_sample(const EnvelopeStudyConfig& cfg, std::size_t sample_size);

/// Tables in (N, method) order. Methods other than bayes / l1 / chi2 are rejected.
std::vector<EnvelopeTable> envelope_study(const EnvelopeStudyConfig& cfg);

} // namespace bdrvi
