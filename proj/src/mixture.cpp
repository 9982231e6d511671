#include "bdrvi/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace bdrvi {

bool is_weight_vector(const Vector& w, double tol) {
    if (w.size() == 0) return false;
    for (Eigen::Index j = 0; j < w.size(); ++j) {
        if (!std::isfinite(w[j]) || w[j] < -tol || w[j] > 1.0 + tol) return false;
    }
    return std::abs(w.sum() - 1.0) <= tol;
}

void require_weight_vector(const Vector& w, const std::string& what, double tol) {
    if (!is_weight_vector(w, tol)) {
        std::ostringstream os;
        os << what << " is not a probability vector (size " << w.size() << ", sum "
           << (w.size() ? w.sum() : 0.0) << ")";
        throw InvalidArgument(os.str());
    }
}

void GaussianComponent::validate() const {
    const auto d = mean.size();
    if (d == 0) throw InvalidArgument("component mean is empty");
    if (covariance.rows() != d || covariance.cols() != d)
        throw InvalidArgument("component covariance shape does not match mean length");
    if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-12)
        throw InvalidArgument("component covariance is not symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> eig(covariance, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < -1e-12)
        throw InvalidArgument("component covariance is not positive semidefinite");
}

void FactorModelConfig::validate() const {
    if (regimes.empty()) throw InvalidArgument("factor model has no regimes");
    if (asset_count == 0) throw InvalidArgument("factor model has no assets");
    for (const auto& r : regimes) {
        if (static_cast<std::size_t>(r.intercepts.size()) != asset_count ||
            static_cast<std::size_t>(r.loadings.size()) != asset_count)
            throw InvalidArgument("regime '" + r.name + "': intercepts and loadings must have length " +
                                  std::to_string(asset_count));
        if (!(r.factor_var > 0.0) || !(r.residual_var > 0.0))
            throw InvalidArgument("regime '" + r.name + "': variances must be positive");
    }
}

FactorModelConfig three_regime_model() {
    constexpr std::size_t d = 10;
    struct Row {
        const char* name;
        double intercept, load0, load_step, mu, var_z, var_e;
    };
    const Row rows[] = {
        {"bear", -0.0005, 0.60, 0.020, 0.005, 0.001, 2e-5},
        {"oscillating", 0.0, 0.80, 0.015, 0.010, 0.004, 1e-5},
        {"bull", 0.0005, 1.00, 0.010, 0.015, 0.007, 0.5e-5},
    };
    FactorModelConfig cfg;
    cfg.asset_count = d;
    for (const auto& r : rows) {
        FactorRegime reg;
        reg.name = r.name;
        reg.intercepts = Vector::Constant(d, r.intercept);
        reg.loadings.resize(d);
        for (std::size_t m = 0; m < d; ++m) reg.loadings[m] = r.load0 + r.load_step * static_cast<double>(m);
        reg.factor_mean = r.mu;
        reg.factor_var = r.var_z;
        reg.residual_var = r.var_e;
        cfg.regimes.push_back(std::move(reg));
    }
    return cfg;
}

GaussianComponent regime_distribution(const FactorModelConfig& cfg, std::size_t j) {
    if (j >= cfg.regimes.size())
        throw InvalidArgument("regime index " + std::to_string(j) + " out of range (have " +
                              std::to_string(cfg.regimes.size()) + ")");
    const auto& r = cfg.regimes[j];
    const auto d = static_cast<Eigen::Index>(cfg.asset_count);
    if (r.intercepts.size() != d || r.loadings.size() != d)
        throw InvalidArgument("regime '" + r.name + "' has inconsistent dimensions");
    GaussianComponent c;
    c.mean = r.intercepts + r.loadings * r.factor_mean;
    c.covariance = r.factor_var * (r.loadings * r.loadings.transpose());
    c.covariance.diagonal().array() += r.residual_var;
    return c;
}

std::vector<GaussianComponent> regime_distributions(const FactorModelConfig& cfg) {
    cfg.validate();
    std::vector<GaussianComponent> out;
    out.reserve(cfg.regimes.size());
    for (std::size_t j = 0; j < cfg.regimes.size(); ++j) out.push_back(regime_distribution(cfg, j));
    return out;
}

GaussianSampler::GaussianSampler(const GaussianComponent& component) : component_(component) {
    component_.validate();
    Eigen::LLT<Matrix> llt(component_.covariance);
    if (llt.info() != Eigen::Success) {
        Matrix jittered = component_.covariance;
        jittered.diagonal().array() += 1e-12;
        llt.compute(jittered);
        if (llt.info() != Eigen::Success) {
            // Rank-deficient beyond jitter: fall back to a symmetric square root.
            Eigen::SelfAdjointEigenSolver<Matrix> eig(component_.covariance);
            const Vector root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
            factor_ = eig.eigenvectors() * root.asDiagonal();
            return;
        }
    }
    factor_ = llt.matrixL();
}

void GaussianSampler::draw_into(Rng& rng, Eigen::Ref<Vector> out) const {
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto d = component_.mean.size();
    Vector z(d);
    for (Eigen::Index k = 0; k < d; ++k) z[k] = normal(rng);
    out = component_.mean + factor_ * z;
}

Vector GaussianSampler::draw(Rng& rng) const {
    Vector out(component_.mean.size());
    draw_into(rng, out);
    return out;
}

MixtureDraw sample_mixture_labeled(const Vector& theta, const std::vector<GaussianComponent>& components,
                                   std::size_t count, std::uint64_t seed) {
    if (components.empty()) throw InvalidArgument("sample_mixture: empty component list");
    if (static_cast<std::size_t>(theta.size()) != components.size())
        throw InvalidArgument("sample_mixture: weight length does not match component count");
    require_weight_vector(theta, "mixture weights");
    if (count == 0) throw InvalidArgument("sample_mixture: count must be >= 1");

    std::vector<GaussianSampler> samplers;
    samplers.reserve(components.size());
    for (const auto& c : components) samplers.emplace_back(c);
    const auto d = components.front().mean.size();
    for (const auto& c : components)
        if (c.mean.size() != d) throw InvalidArgument("sample_mixture: components differ in dimension");

    Vector cumulative(theta.size());
    double acc = 0.0;
    for (Eigen::Index j = 0; j < theta.size(); ++j) cumulative[j] = (acc += std::max(theta[j], 0.0));

    Rng rng(seed);
    std::uniform_real_distribution<double> uniform(0.0, acc);
    MixtureDraw out;
    out.samples.resize(static_cast<Eigen::Index>(count), d);
    out.labels.resize(count);
    Vector row(d);
    for (std::size_t i = 0; i < count; ++i) {
        const double u = uniform(rng);
        // First strictly larger cumulative weight, which always has theta_j > 0.
        auto j = static_cast<std::size_t>(
            std::upper_bound(cumulative.data(), cumulative.data() + cumulative.size(), u) - cumulative.data());
        j = std::min(j, components.size() - 1);
        while (theta[static_cast<Eigen::Index>(j)] <= 0.0 && j > 0) --j;
        out.labels[i] = j;
        samplers[j].draw_into(rng, row);
        out.samples.row(static_cast<Eigen::Index>(i)) = row.transpose();
    }
    return out;
}

SampleMatrix sample_mixture(const Vector& theta, const std::vector<GaussianComponent>& components,
                            std::size_t count, std::uint64_t seed) {
    return sample_mixture_labeled(theta, components, count, seed).samples;
}

Vector gaussian_log_density(const GaussianComponent& component, const SampleMatrix& points) {
    const auto d = component.mean.size();
    if (points.cols() != d) throw InvalidArgument("point dimension does not match component dimension");
    Eigen::LLT<Matrix> llt(component.covariance);
    if (llt.info() != Eigen::Success) {
        Matrix jittered = component.covariance;
        jittered.diagonal().array() += 1e-12;
        llt.compute(jittered);
        if (llt.info() != Eigen::Success) throw DomainError("component covariance is singular; density undefined");
    }
    const Matrix& factor = llt.matrixLLT();
    double log_det = 0.0;
    for (Eigen::Index k = 0; k < d; ++k) log_det += 2.0 * std::log(factor(k, k));
    const double norm_const = -0.5 * (static_cast<double>(d) * std::log(2.0 * std::numbers::pi) + log_det);

    Matrix centered = (points.rowwise() - component.mean.transpose()).transpose();
    llt.matrixL().solveInPlace(centered);
    return (norm_const - 0.5 * centered.colwise().squaredNorm().array()).matrix().transpose();
}

Matrix component_log_densities(const std::vector<GaussianComponent>& components, const SampleMatrix& points) {
    Matrix out(points.rows(), static_cast<Eigen::Index>(components.size()));
    for (std::size_t j = 0; j < components.size(); ++j)
        out.col(static_cast<Eigen::Index>(j)) = gaussian_log_density(components[j], points);
    return out;
}

double mixture_log_pdf(const Vector& theta, const std::vector<GaussianComponent>& components,
                       const Vector& point) {
    if (components.empty()) throw InvalidArgument("mixture_log_pdf: empty component list");
    if (static_cast<std::size_t>(theta.size()) != components.size())
        throw InvalidArgument("mixture_log_pdf: weight length does not match component count");
    require_weight_vector(theta, "mixture weights");
    if (point.size() != components.front().mean.size())
        throw InvalidArgument("mixture_log_pdf: point dimension mismatch");

    SampleMatrix row = point.transpose();
    double max_term = -std::numeric_limits<double>::infinity();
    Vector terms(theta.size());
    for (std::size_t j = 0; j < components.size(); ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        terms[jj] = theta[jj] > 0.0 ? std::log(theta[jj]) + gaussian_log_density(components[j], row)[0]
                                    : -std::numeric_limits<double>::infinity();
        max_term = std::max(max_term, terms[jj]);
    }
    if (!std::isfinite(max_term)) return max_term;
    return max_term + std::log((terms.array() - max_term).exp().sum());
}

std::vector<SamplePool> build_pools(const std::vector<GaussianComponent>& components, std::size_t pool_size,
                                    std::uint64_t seed) {
    if (pool_size == 0) throw InvalidArgument("build_pools: pool_size must be >= 1");
    std::vector<SamplePool> pools;
    pools.reserve(components.size());
    for (std::size_t j = 0; j < components.size(); ++j) {
        GaussianSampler sampler(components[j]);
        SamplePool pool;
        pool.seed = derive_seed(seed, {label_key("pool"), j});
        Rng rng(pool.seed);
        pool.samples.resize(static_cast<Eigen::Index>(pool_size), components[j].mean.size());
        Vector row(components[j].mean.size());
        for (std::size_t i = 0; i < pool_size; ++i) {
            sampler.draw_into(rng, row);
            pool.samples.row(static_cast<Eigen::Index>(i)) = row.transpose();
        }
        pools.push_back(std::move(pool));
    }
    return pools;
}

WealthDomainError::WealthDomainError(std::size_t component, double min_wealth)
    : DomainError([&] {
          std::ostringstream os;
          os << "1 + x^T xi <= 0 in component " << component << " (minimum " << min_wealth << ")";
          return os.str();
      }()),
      component_(component), min_wealth_(min_wealth) {}

void loss_and_gradient(const SampleMatrix& samples, const Vector& x, double& mean_loss,
                       Eigen::Ref<Vector> mean_grad, std::size_t component_index) {
    if (samples.cols() != x.size()) throw InvalidArgument("portfolio dimension does not match sample dimension");
    if (samples.rows() == 0) throw InvalidArgument("loss_and_gradient: no samples");
    // Fixed-size row blocks keep the temporaries small; the summation order is
    // fixed, so results are reproducible bit for bit.
    constexpr Eigen::Index kBlock = 512;
    const Eigen::Index rows = samples.rows();
    double loss_sum = 0.0;
    double min_wealth = std::numeric_limits<double>::infinity();
    mean_grad.setZero();
    Eigen::ArrayXd wealth(std::min(kBlock, rows));
    for (Eigen::Index start = 0; start < rows; start += kBlock) {
        const Eigen::Index len = std::min(kBlock, rows - start);
        const auto block = samples.middleRows(start, len);
        auto w = wealth.head(len);
        w = (block * x).array() + 1.0;
        min_wealth = std::min(min_wealth, w.minCoeff());
        if (!(min_wealth > 0.0)) throw WealthDomainError(component_index, min_wealth);
        loss_sum += w.log().sum();
        w = w.inverse();
        mean_grad.noalias() += block.transpose() * w.matrix();
    }
    const double inv_count = 1.0 / static_cast<double>(rows);
    mean_loss = -loss_sum * inv_count;
    mean_grad *= -inv_count;
}

Expectations expectations(const std::vector<SamplePool>& pools, const Vector& x) {
    if (pools.empty()) throw InvalidArgument("expectations: no pools");
    Expectations out;
    const auto n = static_cast<Eigen::Index>(pools.size());
    out.phi.resize(n);
    out.grad.resize(x.size(), n);
    for (Eigen::Index j = 0; j < n; ++j) {
        double loss = 0.0;
        loss_and_gradient(pools[static_cast<std::size_t>(j)].samples, x, loss, out.grad.col(j),
                          static_cast<std::size_t>(j));
        out.phi[j] = loss;
    }
    return out;
}

HermiteRule HermiteRule::standard_normal(std::size_t count) {
    if (count == 0) throw InvalidArgument("HermiteRule: need at least one node");
    const auto q = static_cast<Eigen::Index>(count);
    Matrix jacobi = Matrix::Zero(q, q);
    for (Eigen::Index k = 1; k < q; ++k) {
        jacobi(k, k - 1) = std::sqrt(static_cast<double>(k));
        jacobi(k - 1, k) = jacobi(k, k - 1);
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(jacobi);
    HermiteRule rule;
    rule.nodes = eig.eigenvalues();
    rule.weights = eig.eigenvectors().row(0).array().square().matrix().transpose();
    rule.weights /= rule.weights.sum();
    return rule;
}

Expectations quadrature_expectations(const std::vector<GaussianComponent>& components, const HermiteRule& rule,
                                     const Vector& x) {
    if (components.empty()) throw InvalidArgument("quadrature_expectations: no components");
    Expectations out;
    const auto n = static_cast<Eigen::Index>(components.size());
    out.phi.resize(n);
    out.grad.resize(x.size(), n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const auto& c = components[static_cast<std::size_t>(j)];
        if (c.mean.size() != x.size())
            throw InvalidArgument("portfolio dimension does not match component dimension");
        const Vector cov_x = c.covariance * x;
        const double mean = c.mean.dot(x);
        const double sd = std::sqrt(std::max(0.0, x.dot(cov_x)));
        const Eigen::ArrayXd wealth = (rule.nodes.array() * sd) + (1.0 + mean);
        const double min_wealth = wealth.minCoeff();
        if (!(min_wealth > 0.0)) throw WealthDomainError(static_cast<std::size_t>(j), min_wealth);
        const Eigen::ArrayXd inv = wealth.inverse();
        const double e_inv = (rule.weights.array() * inv).sum();
        const double e_inv_sq = (rule.weights.array() * inv.square()).sum();
        out.phi[j] = -(rule.weights.array() * wealth.log()).sum();
        out.grad.col(j) = -(c.mean * e_inv - cov_x * e_inv_sq);
    }
    return out;
}

} // namespace bdrvi
