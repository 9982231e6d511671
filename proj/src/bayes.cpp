#include "bdrvi/bayes.hpp"

#include "bdrvi/quantiles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace bdrvi {

namespace {

/// Densities rescaled per row by exp(-max_j log q_ij); the scale cancels in
/// responsibilities and in every information term.
struct ScaledDensities {
    Matrix q;
    Vector row_log_scale;
};

ScaledDensities scale_rows(const Matrix& log_densities) {
    ScaledDensities out;
    out.row_log_scale = log_densities.rowwise().maxCoeff();
    for (Eigen::Index i = 0; i < log_densities.rows(); ++i) {
        if (!std::isfinite(out.row_log_scale[i]) || log_densities.row(i).array().isNaN().any()) {
            std::ostringstream os;
            os << "non-finite component density at sample " << i;
            throw DomainError(os.str());
        }
    }
    out.q = (log_densities.colwise() - out.row_log_scale).array().exp().matrix();
    return out;
}

void require_prior(const DirichletPrior& prior, Eigen::Index n) {
    prior.validate();
    if (prior.concentration.size() != n)
        throw InvalidArgument("prior length does not match the number of components");
}

} // namespace

void DirichletPrior::validate() const {
    if (concentration.size() == 0) throw InvalidArgument("Dirichlet prior is empty");
    if (!(concentration.array() > 0.0).all()) throw InvalidArgument("Dirichlet concentrations must be positive");
}

double log_posterior(const Matrix& log_densities, const DirichletPrior& prior, const Vector& theta) {
    require_prior(prior, log_densities.cols());
    const auto scaled = scale_rows(log_densities);
    double value = (scaled.q * theta).array().log().sum() + scaled.row_log_scale.sum();
    for (Eigen::Index j = 0; j < theta.size(); ++j)
        if (prior.concentration[j] != 1.0) value += (prior.concentration[j] - 1.0) * std::log(theta[j]);
    return value;
}

Vector em_map_from_log_densities(const Matrix& log_densities, const DirichletPrior& prior, const EmOptions& options) {
    const auto n = log_densities.cols();
    if (log_densities.rows() == 0) throw InvalidArgument("em_map: need at least one sample");
    if (!(options.tol > 0.0)) throw InvalidArgument("em_map: tol must be positive");
    require_prior(prior, n);
    if (n == 1) return Vector::Ones(1);

    const auto scaled = scale_rows(log_densities);
    const Matrix& q = scaled.q;
    Vector theta = Vector::Constant(n, 1.0 / static_cast<double>(n));
    double previous = options.check_ascent ? log_posterior(log_densities, prior, theta) : 0.0;

    for (std::size_t it = 0; it < options.max_iter; ++it) {
        const Vector mix = q * theta;
        // sum_i gamma_ij = theta_j * sum_i q_ij / u_i
        const Vector counts = theta.cwiseProduct(q.transpose() * mix.cwiseInverse());
        Vector next = (counts + prior.concentration - Vector::Ones(n)).cwiseMax(0.0);
        const double total = next.sum();
        if (!(total > 0.0)) throw DomainError("em_map: M-step produced zero total weight");
        next /= total;
        const double change = (next - theta).cwiseAbs().maxCoeff();
        theta = std::move(next);
        if (options.check_ascent) {
            const double current = log_posterior(log_densities, prior, theta.cwiseMax(1e-300));
            if (current < previous - 1e-9 * std::max(1.0, std::abs(previous))) {
                std::ostringstream os;
                os << "em_map: log posterior decreased at iteration " << it << " (" << previous << " -> " << current
                   << ")";
                throw DomainError(os.str());
            }
            previous = current;
        }
        if (change <= options.tol) break;
    }
    theta = theta.cwiseMax(kWeightFloor).cwiseMin(1.0 - kWeightFloor);
    return theta / theta.sum();
}

Vector em_map(const SampleMatrix& samples, const std::vector<GaussianComponent>& components,
              const DirichletPrior& prior, const EmOptions& options) {
    if (components.empty()) throw InvalidArgument("em_map: no components");
    return em_map_from_log_densities(component_log_densities(components, samples), prior, options);
}

SingularInformationError::SingularInformationError(double condition_estimate)
    : DomainError([&] {
          std::ostringstream os;
          os << "observed information is singular (condition estimate " << condition_estimate
             << "); the mixture weights are not identifiable from these components";
          return os.str();
      }()),
      condition_(condition_estimate) {}

Vector observed_information_from_log_densities(const Vector& theta_hat, const Matrix& log_densities,
                                               const DirichletPrior& prior) {
    const auto n = log_densities.cols();
    if (theta_hat.size() != n) throw InvalidArgument("observed_information: weight length mismatch");
    require_prior(prior, n);
    if (!(theta_hat.array() > 0.0).all()) throw InvalidArgument("observed_information: theta_hat must be interior");
    if (n == 1) return Vector::Zero(1);

    const auto scaled = scale_rows(log_densities);
    const Vector mix = scaled.q * theta_hat;
    const auto m = n - 1;
    // Score directions in reduced coordinates: (q_k - q_n) / u.
    Matrix scores = scaled.q.leftCols(m).colwise() - scaled.q.col(m);
    scores = scores.array().colwise() / mix.array();
    Matrix hessian = scores.transpose() * scores;

    const Vector a = prior.concentration;
    for (Eigen::Index k = 0; k < m; ++k) hessian(k, k) += (a[k] - 1.0) / (theta_hat[k] * theta_hat[k]);
    hessian.array() += (a[m] - 1.0) / (theta_hat[m] * theta_hat[m]);

    Eigen::SelfAdjointEigenSolver<Matrix> eig(hessian);
    const double largest = eig.eigenvalues().cwiseAbs().maxCoeff();
    const double smallest = eig.eigenvalues().minCoeff();
    if (!(smallest > 0.0) || !(largest > 0.0) || largest / smallest > 1e12) {
        const double cond = smallest > 0.0 ? largest / smallest : std::numeric_limits<double>::infinity();
        throw SingularInformationError(cond);
    }
    const Matrix reduced = eig.eigenvectors() * eig.eigenvalues().cwiseInverse().asDiagonal() *
                           eig.eigenvectors().transpose();
    Vector out(n);
    out.head(m) = reduced.diagonal();
    out[m] = reduced.sum();
    return out.cwiseMax(0.0);
}

Vector observed_information(const Vector& theta_hat, const std::vector<GaussianComponent>& components,
                            const SampleMatrix& samples, const DirichletPrior& prior) {
    return observed_information_from_log_densities(theta_hat, component_log_densities(components, samples), prior);
}

double bonferroni_radius(const Vector& sigma_diag, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("bonferroni_radius: alpha must be in (0,1)");
    if (sigma_diag.size() == 0) throw InvalidArgument("bonferroni_radius: empty covariance diagonal");
    if (!(sigma_diag.array() >= 0.0).all()) throw InvalidArgument("bonferroni_radius: negative variance");
    const double n = static_cast<double>(sigma_diag.size());
    return std::sqrt(sigma_diag.maxCoeff()) * normal_quantile(1.0 - alpha / (2.0 * n));
}

std::string to_string(SigmaScaling s) { return s == SigmaScaling::Bvm ? "bvm" : "literal"; }

SigmaScaling sigma_scaling_from_string(const std::string& s) {
    if (s == "bvm") return SigmaScaling::Bvm;
    if (s == "literal") return SigmaScaling::Literal;
    throw InvalidArgument("unknown sigma scaling '" + s + "' (expected bvm or literal)");
}

PosteriorSummary posterior_summary(const SampleMatrix& samples, const std::vector<GaussianComponent>& components,
                                   const DirichletPrior& prior, double alpha, SigmaScaling scaling,
                                   const EmOptions& options) {
    if (components.empty()) throw InvalidArgument("posterior_summary: no components");
    const Matrix log_q = component_log_densities(components, samples);
    PosteriorSummary out;
    out.alpha = alpha;
    out.sample_count = static_cast<std::size_t>(samples.rows());
    out.theta_hat = em_map_from_log_densities(log_q, prior, options);
    out.sigma_diag = observed_information_from_log_densities(out.theta_hat, log_q, prior);
    if (scaling == SigmaScaling::Literal) out.sigma_diag /= static_cast<double>(out.sample_count);
    out.delta_hat = bonferroni_radius(out.sigma_diag, alpha);
    return out;
}

BayesAmbiguityResult build_bayes_set(const PosteriorSummary& summary, double r_c) {
    if (!(r_c >= 0.0)) throw InvalidArgument("build_bayes_set: r_c must be nonnegative");
    return {BoxSimplexSet(summary.theta_hat, r_c + summary.delta_hat), r_c};
}

} // namespace bdrvi
