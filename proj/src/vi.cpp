#include "bdrvi/vi.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>
#include <utility>

namespace bdrvi {

namespace {

bool same_bits(const Vector& a, const Vector& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

bool same_set(const BoxSimplexSet& a, const BoxSimplexSet& b) {
    return a.radius == b.radius && same_bits(a.center, b.center);
}

void require_joint(const Vector& x, std::size_t accounts, std::size_t assets, const char* what) {
    if (static_cast<std::size_t>(x.size()) != accounts * assets) {
        std::ostringstream os;
        os << what << ": expected joint vector of length " << accounts * assets << ", got " << x.size();
        throw InvalidArgument(os.str());
    }
}

/// kappa (x^i - mean_{k != i} x^k) for every account, added in place.
void add_competition(Vector& field, const Vector& x, std::size_t accounts, std::size_t assets, double kappa) {
    if (kappa == 0.0 || accounts < 2) return;
    const auto d = static_cast<Eigen::Index>(assets);
    Vector total = Vector::Zero(d);
    for (std::size_t i = 0; i < accounts; ++i) total += x.segment(static_cast<Eigen::Index>(i) * d, d);
    const double others = static_cast<double>(accounts - 1);
    for (std::size_t i = 0; i < accounts; ++i) {
        const auto xi = x.segment(static_cast<Eigen::Index>(i) * d, d);
        field.segment(static_cast<Eigen::Index>(i) * d, d) += kappa * (xi - (total - xi) / others);
    }
}

} // namespace

FieldEvaluator::FieldEvaluator(std::size_t accounts, std::size_t assets, Function fn)
    : accounts_(accounts), assets_(assets), fn_(std::move(fn)) {
    if (accounts == 0 || assets == 0) throw InvalidArgument("FieldEvaluator: empty dimensions");
    if (!fn_) throw InvalidArgument("FieldEvaluator: missing function");
}

FieldValue FieldEvaluator::evaluate(const Vector& x) const {
    require_joint(x, accounts_, assets_, "FieldEvaluator");
    FieldValue out = fn_(x);
    if (static_cast<std::size_t>(out.field.size()) != dim())
        throw InvalidArgument("FieldEvaluator: field has the wrong length");
    return out;
}

Vector project_simplex(const Vector& y) {
    const auto n = y.size();
    if (n == 0) throw InvalidArgument("project_simplex: empty vector");
    Vector sorted = y;
    std::sort(sorted.data(), sorted.data() + n, std::greater<>());
    double cumulative = 0.0;
    double tau = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
        cumulative += sorted[k];
        const double candidate = (cumulative - 1.0) / static_cast<double>(k + 1);
        if (sorted[k] - candidate > 0.0) tau = candidate;
    }
    return (y.array() - tau).cwiseMax(0.0).matrix();
}

Vector project_portfolio(const Vector& y) {
    Vector clipped = y.cwiseMax(0.0);
    if (clipped.sum() <= 1.0) return clipped;
    return project_simplex(y);
}

Projector portfolio_projector(std::size_t accounts, std::size_t assets) {
    if (accounts == 0 || assets == 0) throw InvalidArgument("portfolio_projector: empty dimensions");
    return [accounts, assets](const Vector& y) {
        require_joint(y, accounts, assets, "portfolio_projector");
        const auto d = static_cast<Eigen::Index>(assets);
        Vector out(y.size());
        for (std::size_t i = 0; i < accounts; ++i) {
            const auto off = static_cast<Eigen::Index>(i) * d;
            out.segment(off, d) = project_portfolio(y.segment(off, d));
        }
        return out;
    };
}

ExpectationFn pool_expectations(std::shared_ptr<const std::vector<SamplePool>> pools) {
    if (!pools || pools->empty()) throw InvalidArgument("pool_expectations: no pools");
    return [pools = std::move(pools)](const Vector& x) { return expectations(*pools, x); };
}

ExpectationFn quadrature_source(std::vector<GaussianComponent> components, std::size_t nodes) {
    if (components.empty()) throw InvalidArgument("quadrature_source: no components");
    for (const auto& c : components) c.validate();
    return [components = std::move(components), rule = HermiteRule::standard_normal(nodes)](const Vector& x) {
        return quadrature_expectations(components, rule, x);
    };
}

FieldEvaluator bayes_field(ExpectationFn source, std::size_t components, std::size_t assets,
                           std::vector<BoxSimplexSet> sets, double lambda, double kappa, std::size_t accounts) {
    if (!source) throw InvalidArgument("bayes_field: missing expectation source");
    if (!(lambda > 0.0)) throw InvalidArgument("bayes_field: lambda must be positive");
    if (!(kappa >= 0.0)) throw InvalidArgument("bayes_field: kappa must be nonnegative");
    if (sets.size() != 1 && sets.size() != accounts)
        throw InvalidArgument("bayes_field: need one ambiguity set or one per account");
    for (const auto& s : sets) {
        if (s.dim() != components) throw InvalidArgument("bayes_field: ambiguity set dimension mismatch");
        if (!clip_bounds(s).feasible) throw InfeasibleSetError("bayes_field: ambiguity set is empty");
    }

    auto fn = [source = std::move(source), sets = std::move(sets), lambda, kappa, accounts,
               assets](const Vector& x) {
        const auto d = static_cast<Eigen::Index>(assets);
        FieldValue out;
        out.field = Vector::Zero(x.size());
        out.weights.resize(accounts);
        std::vector<Vector> blocks(accounts);
        std::vector<Expectations> cache(accounts);
        for (std::size_t i = 0; i < accounts; ++i) {
            blocks[i] = x.segment(static_cast<Eigen::Index>(i) * d, d);
            const BoxSimplexSet& set_i = sets.size() == 1 ? sets[0] : sets[i];
            // Symmetric accounts share their expectations and lower-level solution.
            std::size_t twin = i;
            for (std::size_t k = 0; k < i; ++k) {
                if (same_bits(blocks[k], blocks[i])) {
                    twin = k;
                    break;
                }
            }
            if (twin != i) {
                cache[i] = cache[twin];
                const BoxSimplexSet& set_k = sets.size() == 1 ? sets[0] : sets[twin];
                if (same_set(set_i, set_k)) {
                    out.weights[i] = out.weights[twin];
                    out.field.segment(static_cast<Eigen::Index>(i) * d, d) =
                        out.field.segment(static_cast<Eigen::Index>(twin) * d, d);
                    continue;
                }
            } else {
                cache[i] = source(blocks[i]);
            }
            const Expectations& e = cache[i];
            out.weights[i] = project_box_simplex(set_i, e.phi / (2.0 * lambda));
            out.field.segment(static_cast<Eigen::Index>(i) * d, d) = e.grad * out.weights[i];
        }
        add_competition(out.field, x, accounts, assets, kappa);
        return out;
    };
    return FieldEvaluator(accounts, assets, std::move(fn));
}

FieldEvaluator bayes_field(std::shared_ptr<const std::vector<SamplePool>> pools, const BoxSimplexSet& set,
                           double lambda, double kappa, std::size_t accounts) {
    if (!pools || pools->empty()) throw InvalidArgument("bayes_field: no pools");
    const std::size_t assets = pools->front().dim();
    const std::size_t n = pools->size();
    return bayes_field(pool_expectations(std::move(pools)), n, assets, {set}, lambda, kappa, accounts);
}

FieldEvaluator empirical_field(std::shared_ptr<const SampleMatrix> atoms, EmpiricalBall ball, double lambda,
                               double kappa, std::size_t accounts) {
    if (!atoms || atoms->rows() == 0) throw InvalidArgument("empirical_field: no atoms");
    ball.validate();
    if (ball.atoms != static_cast<std::size_t>(atoms->rows()))
        throw InvalidArgument("empirical_field: ball size does not match the number of atoms");
    if (!(lambda >= 0.0)) throw InvalidArgument("empirical_field: lambda must be nonnegative");
    if (!(kappa >= 0.0)) throw InvalidArgument("empirical_field: kappa must be nonnegative");
    const std::size_t assets = static_cast<std::size_t>(atoms->cols());

    auto fn = [atoms = std::move(atoms), ball, lambda, kappa, accounts, assets](const Vector& x) {
        const auto d = static_cast<Eigen::Index>(assets);
        const SampleMatrix& xi = *atoms;
        FieldValue out;
        out.field = Vector::Zero(x.size());
        out.weights.resize(accounts);
        for (std::size_t i = 0; i < accounts; ++i) {
            const auto off = static_cast<Eigen::Index>(i) * d;
            const Vector block = x.segment(off, d);
            std::size_t twin = i;
            for (std::size_t k = 0; k < i; ++k) {
                if (same_bits(x.segment(static_cast<Eigen::Index>(k) * d, d), block)) {
                    twin = k;
                    break;
                }
            }
            if (twin != i) {
                out.weights[i] = out.weights[twin];
                out.field.segment(off, d) = out.field.segment(static_cast<Eigen::Index>(twin) * d, d);
                continue;
            }
            const Vector wealth = (xi * block).array() + 1.0;
            const double min_wealth = wealth.minCoeff();
            if (!(min_wealth > 0.0)) throw WealthDomainError(0, min_wealth);
            const Vector losses = -wealth.array().log().matrix();
            out.weights[i] = empirical_linear_max(ball, losses, lambda).maximizer;
            const Vector scaled = out.weights[i].cwiseQuotient(wealth);
            out.field.segment(off, d) = -(xi.transpose() * scaled);
        }
        add_competition(out.field, x, accounts, assets, kappa);
        return out;
    };
    return FieldEvaluator(accounts, assets, std::move(fn));
}

void SolverConfig::validate() const {
    if (!(eta > 0.0) || !std::isfinite(eta)) throw InvalidArgument("solver: eta must be positive and finite");
    if (!(eps > 0.0)) throw InvalidArgument("solver: eps must be positive");
    if (max_iter == 0) throw InvalidArgument("solver: max_iter must be positive");
}

SolveResult extragradient(const FieldEvaluator& field, const Projector& project, const SolverConfig& cfg,
                          const IterateObserver& observer) {
    cfg.validate();
    if (!project) throw InvalidArgument("extragradient: missing projector");
    const Vector start = cfg.x0.size() == 0 ? uniform_start(field.accounts(), field.assets()) : cfg.x0;
    require_joint(start, field.accounts(), field.assets(), "extragradient");

    SolveResult out;
    Vector x = project(start);
    for (std::size_t k = 0; k < cfg.max_iter; ++k) {
        const Vector y = project(x - cfg.eta * field(x));
        Vector next = project(x - cfg.eta * field(y));
        if (!next.allFinite()) throw DomainError("extragradient: iterate became non-finite");
        const double stop = (next - y).norm() + (y - x).norm();
        out.residual_history.push_back(stop);
        x = std::move(next);
        out.iterations = k + 1;
        out.stop_value = stop;
        if (observer) observer(k, x);
        if (stop <= cfg.eps) {
            out.converged = true;
            break;
        }
    }
    out.x_star = x;
    out.theta_star = field.evaluate(x).weights;
    return out;
}

double natural_residual(const FieldEvaluator& field, const Projector& project, const Vector& x) {
    return (x - project(x - field(x))).norm();
}

void LipschitzParams::validate() const {
    if (!(beta >= 0.0 && beta < 1.0)) throw InvalidArgument("lipschitz: beta must lie in [0,1)");
    if (!(sigma_bar_sq >= 0.0)) throw InvalidArgument("lipschitz: sigma_bar^2 must be nonnegative");
    if (n == 0) throw InvalidArgument("lipschitz: need at least one component");
    if (!(lambda > 0.0)) throw InvalidArgument("lipschitz: lambda must be positive");
    if (!(kappa >= 0.0)) throw InvalidArgument("lipschitz: kappa must be nonnegative");
}

LipschitzBound lipschitz_bound(const LipschitzParams& p) {
    p.validate();
    const double root2 = std::sqrt(2.0);
    const double shrink = (1.0 - p.beta) * (1.0 - p.beta);
    LipschitzBound out;
    out.modulus = (root2 + root2 / (2.0 * p.lambda)) * static_cast<double>(p.n) * p.sigma_bar_sq / shrink +
                  2.0 * root2 * p.kappa;
    if (!(out.modulus > 0.0)) throw InvalidArgument("lipschitz: modulus is zero");
    out.default_eta = 0.45 / out.modulus;
    return out;
}

LipschitzParams estimate_lipschitz_params(const std::vector<GaussianComponent>& components,
                                          const std::vector<SamplePool>& pools, double lambda, double kappa) {
    if (components.empty()) throw InvalidArgument("estimate_lipschitz_params: no components");
    LipschitzParams out;
    out.n = components.size();
    out.lambda = lambda;
    out.kappa = kappa;
    for (const auto& c : components)
        out.sigma_bar_sq = std::max(out.sigma_bar_sq, c.mean.squaredNorm() + c.covariance.trace());
    for (const auto& pool : pools)
        if (pool.samples.size() > 0) out.beta = std::max(out.beta, -pool.samples.minCoeff());
    if (out.beta >= 1.0) throw DomainError("estimate_lipschitz_params: some pooled asset return is <= -1");
    return out;
}

Vector uniform_start(std::size_t accounts, std::size_t assets) {
    return Vector::Constant(static_cast<Eigen::Index>(accounts * assets), 1.0 / (2.0 * static_cast<double>(assets)));
}

} // namespace bdrvi
