#pragma once

#include "bdrvi/ambiguity.hpp"
#include "bdrvi/empirical.hpp"
#include "bdrvi/mixture.hpp"
#include "bdrvi/types.hpp"

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

namespace bdrvi {

/// Value of the joint field together with each account's lower-level maximizer.
struct FieldValue {
    Vector field;
    std::vector<Vector> weights;
};

/// Deterministic map x -> F(x) on the joint portfolio vector (accounts x assets).
class FieldEvaluator {
public:
    using Function = std::function<FieldValue(const Vector&)>;

    FieldEvaluator(std::size_t accounts, std::size_t assets, Function fn);

    FieldValue evaluate(const Vector& x) const;
    Vector operator()(const Vector& x) const { return evaluate(x).field; }

    std::size_t accounts() const { return accounts_; }
    std::size_t assets() const { return assets_; }
    std::size_t dim() const { return accounts_ * assets_; }

private:
    std::size_t accounts_;
    std::size_t assets_;
    Function fn_;
};

using Projector = std::function<Vector(const Vector&)>;

/// Euclidean projection onto the probability simplex (sum = 1, nonnegative).
Vector project_simplex(const Vector& y);

/// Projection onto {x >= 0, sum x <= 1}.
Vector project_portfolio(const Vector& y);

/// Blockwise portfolio projection for `accounts` stacked portfolios.
Projector portfolio_projector(std::size_t accounts, std::size_t assets);

/// Source of per-component expectations (phi, gradient) at a portfolio.
using ExpectationFn = std::function<Expectations(const Vector&)>;

ExpectationFn pool_expectations(std::shared_ptr<const std::vector<SamplePool>> pools);
ExpectationFn quadrature_source(std::vector<GaussianComponent> components, std::size_t nodes);

/// Regularized Bayesian field:
///   theta_i = Proj_set(phi(x^i) / (2 lambda)),
///   F_i     = G(x^i) theta_i + kappa (x^i - mean_{k != i} x^k).
/// `sets` holds one ambiguity set per account, or a single shared set.
FieldEvaluator bayes_field(ExpectationFn source, std::size_t components, std::size_t assets,
                           std::vector<BoxSimplexSet> sets, double lambda, double kappa, std::size_t accounts = 2);

FieldEvaluator bayes_field(std::shared_ptr<const std::vector<SamplePool>> pools, const BoxSimplexSet& set,
                           double lambda, double kappa, std::size_t accounts = 2);

/// Empirical-ball field over training atoms: p = argmax of the lower level
/// on the per-atom losses, F_i = sum_t p_t grad phi(x^i, xi_t) + competition.
/// A zero-radius ball gives the sample average approximation.
FieldEvaluator empirical_field(std::shared_ptr<const SampleMatrix> atoms, EmpiricalBall ball, double lambda,
                               double kappa, std::size_t accounts = 2);

struct SolverConfig {
    double eta = 0.0;
    double eps = 1e-8;
    std::size_t max_iter = 200000;
    Vector x0;

    void validate() const;
};

struct SolveResult {
    Vector x_star;
    std::vector<Vector> theta_star;
    std::size_t iterations = 0;
    double stop_value = 0.0;
    std::vector<double> residual_history;
    bool converged = false;
};

/// Called with (k, x^{k+1}) after every iteration.
using IterateObserver = std::function<void(std::size_t, const Vector&)>;

/// Extragradient iteration
///   y^k     = P(x^k - eta F(x^k))
///   x^{k+1} = P(x^k - eta F(y^k))
/// until ||x^{k+1} - y^k|| + ||y^k - x^k|| <= eps. Hitting max_iter is not an
/// error: the result carries converged = false.
SolveResult extragradient(const FieldEvaluator& field, const Projector& project, const SolverConfig& cfg,
                          const IterateObserver& observer = {});

/// ||x - P(x - F(x))||_2, zero exactly at solutions.
double natural_residual(const FieldEvaluator& field, const Projector& project, const Vector& x);

struct LipschitzParams {
    double beta = 0.0;         ///< x^T xi >= -beta almost surely on the feasible set
    double sigma_bar_sq = 0.0; ///< max_j E_j ||xi||^2
    std::size_t n = 0;         ///< number of mixture components
    double lambda = 0.0;
    double kappa = 0.0;

    void validate() const;
};

struct LipschitzBound {
    double modulus = 0.0;
    double default_eta = 0.0; ///< 0.45 / modulus, strictly inside (0, 1/(2 L))
};

/// (sqrt2 + sqrt2 / (2 lambda)) n sigma_bar^2 / (1 - beta)^2 + 2 sqrt2 kappa.
LipschitzBound lipschitz_bound(const LipschitzParams& params);

/// sigma_bar^2 from the component moments, beta from the worst single-asset
/// return over the pools (x >= 0, e^T x <= 1 gives x^T xi >= min(0, min_m xi_m)).
LipschitzParams estimate_lipschitz_params(const std::vector<GaussianComponent>& components,
                                          const std::vector<SamplePool>& pools, double lambda, double kappa);

/// Uniform start 1/(2d) per account.
Vector uniform_start(std::size_t accounts, std::size_t assets);

} // namespace bdrvi
