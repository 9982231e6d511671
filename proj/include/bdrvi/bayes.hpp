#pragma once

#include "bdrvi/ambiguity.hpp"
#include "bdrvi/mixture.hpp"
#include "bdrvi/types.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace bdrvi {

/// Dirichlet prior on the mixture weights; all-ones is the uniform prior.
struct DirichletPrior {
    Vector concentration;

    static DirichletPrior uniform(std::size_t n) { return {Vector::Ones(static_cast<Eigen::Index>(n))}; }
    void validate() const;
};

struct EmOptions {
    double tol = 1e-10;
    std::size_t max_iter = 10000;
    /// Throw if an iteration decreases the log posterior (beyond 1e-9 relative).
    bool check_ascent = false;
};

/// Lowest and highest admissible weight after EM.
inline constexpr double kWeightFloor = 1e-6;

/// MAP mixture weights by EM. Starts from uniform weights, stops when the
/// l_inf change is <= tol, then clamps to [1e-6, 1 - 1e-6] and renormalizes.
Vector em_map(const SampleMatrix& samples, const std::vector<GaussianComponent>& components,
              const DirichletPrior& prior, const EmOptions& options = {});

/// Same, from precomputed component log densities (N x n).
Vector em_map_from_log_densities(const Matrix& log_densities, const DirichletPrior& prior,
                                 const EmOptions& options = {});

/// Log posterior (up to a constant) at theta.
double log_posterior(const Matrix& log_densities, const DirichletPrior& prior, const Vector& theta);

/// Raised when the reduced information matrix cannot be inverted.
class SingularInformationError : public DomainError {
public:
    SingularInformationError(double condition_estimate);
    double condition_estimate() const { return condition_; }

private:
    double condition_;
};

/// Diagonal of the ambient covariance J H^{-1} J^T, where H is the negative
/// Hessian of the log posterior in the reduced coordinates theta_1..theta_{n-1}
/// (theta_n = 1 - sum) and J embeds them back into the simplex.
Vector observed_information(const Vector& theta_hat, const std::vector<GaussianComponent>& components,
                            const SampleMatrix& samples, const DirichletPrior& prior);

Vector observed_information_from_log_densities(const Vector& theta_hat, const Matrix& log_densities,
                                               const DirichletPrior& prior);

/// max_j sqrt(sigma_j) * z_{1 - alpha / (2n)}.
double bonferroni_radius(const Vector& sigma_diag, double alpha);

/// How the posterior covariance is scaled from the observed information.
///   Bvm:     Sigma = I^{-1}       (inverse observed information of the log posterior)
///   Literal: Sigma = I^{-1} / N
enum class SigmaScaling { Bvm, Literal };

std::string to_string(SigmaScaling s);
SigmaScaling sigma_scaling_from_string(const std::string& s);

struct PosteriorSummary {
    Vector theta_hat;
    Vector sigma_diag;
    double delta_hat = 0.0;
    double alpha = 0.05;
    std::size_t sample_count = 0;
};

PosteriorSummary posterior_summary(const SampleMatrix& samples, const std::vector<GaussianComponent>& components,
                                   const DirichletPrior& prior, double alpha,
                                   SigmaScaling scaling = SigmaScaling::Bvm, const EmOptions& options = {});

struct BayesAmbiguityResult {
    BoxSimplexSet set;
    double r_c = 0.0;
};

/// B(theta_hat, r_c + delta_hat) intersected with the simplex.
BayesAmbiguityResult build_bayes_set(const PosteriorSummary& summary, double r_c);

} // namespace bdrvi
