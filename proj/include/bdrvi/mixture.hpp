#pragma once

#include "bdrvi/random.hpp"
#include "bdrvi/types.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace bdrvi {

/// A fixed Gaussian mixture component Q_j.
struct GaussianComponent {
    Vector mean;
    Matrix covariance;

    std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }

    /// Throws InvalidArgument on shape mismatch, asymmetry beyond 1e-12 or
    /// eigenvalues below -1e-12.
    void validate() const;
};

/// One regime of the single-factor return model
/// xi_m = a_m + b_m * z + e_m,  z ~ N(mu, var_z),  e_m ~ N(0, var_e).
struct FactorRegime {
    std::string name;
    Vector intercepts;
    Vector loadings;
    double factor_mean = 0.0;
    double factor_var = 0.0;
    double residual_var = 0.0;
};

struct FactorModelConfig {
    std::vector<FactorRegime> regimes;
    std::size_t asset_count = 0;

    void validate() const;
};

/// Bear / oscillating / bull regimes over ten assets.
FactorModelConfig three_regime_model();

/// Moments of regime `j`: mean a + b mu, covariance var_z b b^T + var_e I.
GaussianComponent regime_distribution(const FactorModelConfig& cfg, std::size_t j);
std::vector<GaussianComponent> regime_distributions(const FactorModelConfig& cfg);

/// Draws from one Gaussian via a Cholesky factor of its covariance. A jitter
/// of 1e-12 is added to the diagonal when the plain factorization fails.
class GaussianSampler {
public:
    explicit GaussianSampler(const GaussianComponent& component);

    Vector draw(Rng& rng) const;
    void draw_into(Rng& rng, Eigen::Ref<Vector> out) const;
    const GaussianComponent& component() const { return component_; }

private:
    GaussianComponent component_;
    Matrix factor_;
};

/// Two-stage draw: a categorical label on `theta`, then the labelled component.
struct MixtureDraw {
    SampleMatrix samples;
    std::vector<std::size_t> labels;
};

MixtureDraw sample_mixture_labeled(const Vector& theta, const std::vector<GaussianComponent>& components,
                                   std::size_t count, std::uint64_t seed);

SampleMatrix sample_mixture(const Vector& theta, const std::vector<GaussianComponent>& components,
                            std::size_t count, std::uint64_t seed);

/// Log density of one Gaussian at every row of `points`.
Vector gaussian_log_density(const GaussianComponent& component, const SampleMatrix& points);

/// N x n matrix of component log densities log q_j(xi_i).
Matrix component_log_densities(const std::vector<GaussianComponent>& components, const SampleMatrix& points);

/// log sum_j theta_j q_j(point), evaluated with log-sum-exp.
double mixture_log_pdf(const Vector& theta, const std::vector<GaussianComponent>& components,
                       const Vector& point);

/// Fixed common-random-number draws from one component.
struct SamplePool {
    SampleMatrix samples;
    std::uint64_t seed = 0;

    std::size_t size() const { return static_cast<std::size_t>(samples.rows()); }
    std::size_t dim() const { return static_cast<std::size_t>(samples.cols()); }
};

/// One pool per component; pool j is drawn with a seed derived from (seed, j).
std::vector<SamplePool> build_pools(const std::vector<GaussianComponent>& components, std::size_t pool_size,
                                    std::uint64_t seed);

/// Raised when 1 + x^T xi <= 0 for some pooled draw.
class WealthDomainError : public DomainError {
public:
    WealthDomainError(std::size_t component, double min_wealth);

    std::size_t component() const { return component_; }
    double min_wealth() const { return min_wealth_; }

private:
    std::size_t component_;
    double min_wealth_;
};

/// Per-component expectations of the log disutility and its gradient.
struct Expectations {
    Vector phi;  ///< phi[j] = E_j[-log(1 + x^T xi)]
    Matrix grad; ///< column j = E_j[-xi / (1 + x^T xi)], d x n
};

Expectations expectations(const std::vector<SamplePool>& pools, const Vector& x);

/// Pool mean of the log disutility and gradient over a single sample matrix.
/// Used both for pools and for empirical atoms.
void loss_and_gradient(const SampleMatrix& samples, const Vector& x, double& mean_loss,
                       Eigen::Ref<Vector> mean_grad, std::size_t component_index = 0);

/// Gauss-Hermite rule for E[h(Z)], Z ~ N(0, 1): sum_q weights[q] h(nodes[q]).
struct HermiteRule {
    Vector nodes;
    Vector weights;

    /// Golub-Welsch on the probabilists' Hermite recurrence.
    static HermiteRule standard_normal(std::size_t count);
};

/// Exact-model expectations by quadrature. Under Q_j, w = x^T xi is normal
/// with mean x^T mu_j and variance x^T Sigma_j x, so
///   phi[j]       = -E[log(1 + w)]
///   grad col j   = -(mu_j E[1/(1+w)] - Sigma_j x E[1/(1+w)^2])   (Stein's identity).
/// Throws WealthDomainError if some node has 1 + w <= 0.
Expectations quadrature_expectations(const std::vector<GaussianComponent>& components, const HermiteRule& rule,
                                     const Vector& x);

} // namespace bdrvi
