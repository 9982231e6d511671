#include "bdrvi/cli.hpp"

#include "bdrvi/io.hpp"
#include "bdrvi/random.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>

#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

namespace bdrvi::cli {

namespace {

namespace fs = std::filesystem;
using io::FormatError;
using io::Json;

Json versions() {
    return {{"bdrvi", kVersion},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                          std::to_string(EIGEN_MINOR_VERSION)},
            {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
            {"cli11", CLI11_VERSION}};
}

/// Writes the manifest last so that it lists every other output.
void finish(io::OutputSet& outputs, const std::vector<std::string>& args, const std::string& subcommand,
            const Json& config, const Json& seed) {
    Json manifest;
    manifest["command"] = args;
    manifest["subcommand"] = subcommand;
    manifest["config"] = config;
    manifest["config_sha256"] = io::sha256_hex(io::dump(config));
    manifest["seed"] = seed;
    manifest["outputs"] = outputs.listing();
    manifest["versions"] = versions();
    outputs.write("manifest.json", io::dump(manifest));
}

FactorModelConfig factor_preset(const std::string& name) {
    if (name == "sec5") return three_regime_model();
    throw FormatError("unknown regime preset '" + name + "' (expected sec5)");
}

ExperimentConfig experiment_preset(const std::string& name) {
    if (name == "desk") return ExperimentConfig::desk();
    if (name == "sec5") return ExperimentConfig::full_scale();
    throw FormatError("unknown experiment preset '" + name + "' (expected desk or sec5)");
}

std::vector<std::string> regime_names(const FactorModelConfig& cfg) {
    std::vector<std::string> names;
    for (const auto& r : cfg.regimes) names.push_back(r.name);
    return names;
}

std::string file_sha256(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream bytes;
    bytes << in.rdbuf();
    return io::sha256_hex(bytes.str());
}

/// Relative paths inside a problem file resolve against the file's directory.
fs::path resolve(const fs::path& base, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

struct ExperimentOptions {
    std::string preset = "desk";
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;

    void attach(CLI::App* sub) {
        sub->add_option("--preset", preset, "desk or sec5 (ignored with --config)")->capture_default_str();
        sub->add_option("--config", config_path, "ExperimentConfig JSON");
        sub->add_option("--set", overrides, "dot-path override key=value (repeatable)");
        sub->add_option("--seed", seed, "base seed (overrides the config)");
        sub->add_option("--threads", threads, "worker threads (0 = all cores)");
    }

    ExperimentConfig resolve_config() const {
        Json doc = config_path.empty() ? io::to_json(experiment_preset(preset)) : io::read_json(config_path);
        for (const auto& o : overrides) io::apply_override(doc, o);
        if (seed) doc["seed"] = *seed;
        if (threads) doc["threads"] = *threads;
        return io::experiment_config_from_json(doc);
    }
};

std::vector<std::size_t> parse_sizes(const std::vector<std::size_t>& sizes) {
    if (sizes.empty()) throw FormatError("--sizes: expected at least one sample size");
    return sizes;
}

// ---- subcommands ----

void cmd_regimes(const std::string& preset, io::OutputSet& outputs, std::ostream& out, Json& config) {
    const FactorModelConfig cfg = factor_preset(preset);
    const auto components = regime_distributions(cfg);
    Json doc = io::regimes_to_json(components, regime_names(cfg));
    doc["factor"] = io::to_json(cfg);
    outputs.write("regimes.json", io::dump(doc));
    config = {{"preset", preset}};
    out << "regimes: " << components.size() << " components of dimension " << components.front().dim() << "\n";
}

struct FitOptions {
    std::string samples;
    std::string regimes;
    double alpha = 0.05;
    std::string scaling = "bvm";
};

void cmd_fit(const FitOptions& o, io::OutputSet& outputs, std::ostream& out, Json& config) {
    const auto components = io::regimes_from_json(io::read_json(o.regimes));
    const SampleMatrix samples = io::parse_samples(o.samples);
    if (static_cast<std::size_t>(samples.cols()) != components.front().dim())
        throw FormatError("samples have " + std::to_string(samples.cols()) + " columns but the regimes have dimension " +
                          std::to_string(components.front().dim()));
    const SigmaScaling scaling = sigma_scaling_from_string(o.scaling);
    const auto summary =
        posterior_summary(samples, components, DirichletPrior::uniform(components.size()), o.alpha, scaling);
    outputs.write("posterior.json", io::dump(io::to_json(summary)));
    config = {{"samples", o.samples},
              {"samples_sha256", file_sha256(o.samples)},
              {"regimes", o.regimes},
              {"alpha", o.alpha},
              {"sigma_scaling", to_string(scaling)}};
    out << "fit: N=" << samples.rows() << " delta_hat=" << io::format_double(summary.delta_hat) << "\n";
}

struct AmbiguityOptions {
    std::string posterior;
    double r_c = 0.0;
    std::string kind;
    std::optional<std::size_t> atoms;
    std::string samples;
    double alpha = 0.05;
};

void cmd_ambiguity(const AmbiguityOptions& o, io::OutputSet& outputs, std::ostream& out, Json& config) {
    if (o.posterior.empty() == o.kind.empty())
        throw FormatError("ambiguity: give exactly one of --posterior or --kind");
    if (!o.posterior.empty()) {
        const auto summary = io::posterior_from_json(io::read_json(o.posterior));
        const auto built = build_bayes_set(summary, o.r_c);
        Json doc = io::to_json(built.set);
        doc["kind"] = "bayes";
        doc["r_c"] = built.r_c;
        doc["delta_hat"] = summary.delta_hat;
        doc["alpha"] = summary.alpha;
        outputs.write("ambiguity.json", io::dump(doc));
        config = {{"posterior", o.posterior}, {"r_c", o.r_c}};
        out << "ambiguity: bayes radius " << io::format_double(built.set.radius)
            << (doc["feasible"].get<bool>() ? "" : " (infeasible)") << "\n";
        return;
    }
    const EmpiricalKind kind = empirical_kind_from_string(o.kind);
    if (o.atoms.has_value() == !o.samples.empty())
        throw FormatError("ambiguity --kind: give exactly one of --atoms or --samples");
    const std::size_t atoms = o.atoms ? *o.atoms : static_cast<std::size_t>(io::parse_samples(o.samples).rows());
    const double radius = empirical_radius(kind, atoms, o.alpha);
    Json doc{{"kind", to_string(kind)}, {"atoms", atoms}, {"radius", radius}, {"alpha", o.alpha}};
    outputs.write("ambiguity.json", io::dump(doc));
    config = {{"kind", to_string(kind)}, {"atoms", atoms}, {"alpha", o.alpha}};
    if (!o.samples.empty()) config["samples"] = o.samples;
    out << "ambiguity: " << to_string(kind) << " radius " << io::format_double(radius) << "\n";
}

struct EnvelopeOptions {
    std::uint64_t seed = 0;
    double alpha = 0.05;
    std::vector<std::size_t> sizes{20, 50, 200};
    std::size_t grid_points = 200;
    std::string scaling = "bvm";
    std::vector<std::string> methods{"bayes", "l1", "chi2"};
};

void cmd_envelope(const EnvelopeOptions& o, io::OutputSet& outputs, std::ostream& out, Json& config) {
    EnvelopeStudyConfig cfg;
    cfg.seed = o.seed;
    cfg.alpha = o.alpha;
    cfg.sample_sizes = parse_sizes(o.sizes);
    cfg.grid_points = o.grid_points;
    cfg.sigma_scaling = sigma_scaling_from_string(o.scaling);
    cfg.methods.clear();
    for (const auto& m : o.methods) cfg.methods.push_back(method_from_string(m));
    const auto tables = envelope_study(cfg);
    for (const auto& t : tables) {
        std::vector<std::vector<std::string>> rows;
        for (Eigen::Index g = 0; g < t.t.size(); ++g)
            rows.push_back({io::format_double(t.t[g]), io::format_double(t.lower[g]), io::format_double(t.upper[g]),
                            io::format_double(t.nominal[g]), io::format_double(t.empirical_cdf[g]),
                            io::format_double(t.true_cdf[g])});
        const std::string name = "envelope_" + to_string(t.method) + "_N" + std::to_string(t.sample_size) + ".csv";
        outputs.write(name, io::csv({"t", "lower", "upper", "nominal", "empirical_cdf", "true_cdf"}, rows));
        out << name << ": radius " << io::format_double(t.radius) << "\n";
    }
    config = {{"seed", o.seed},
              {"alpha", o.alpha},
              {"sample_sizes", cfg.sample_sizes},
              {"grid_points", o.grid_points},
              {"grid", {cfg.grid_lo, cfg.grid_hi}},
              {"sigma_scaling", to_string(cfg.sigma_scaling)},
              {"methods", o.methods},
              {"means", cfg.means},
              {"variances", cfg.variances},
              {"t_dof", cfg.t_dof}};
}

/// Problem file of the `solve` subcommand.
struct Problem {
    BoxSimplexSet set;
    FactorModelConfig factor;
    double kappa = 0.1;
    double lambda = 0.01;
    double eta = 0.0;
    double eps = 1e-8;
    std::size_t max_iter = 200000;
    ExpectationBackend expectation = ExpectationBackend::Quadrature;
    std::size_t pool_size = 20000;
    std::size_t quadrature_nodes = 20;
    std::uint64_t seed = 0;
};

Json problem_defaults() {
    const Problem p;
    return {{"kappa", p.kappa},
            {"lambda", p.lambda},
            {"eta", p.eta},
            {"eps", p.eps},
            {"max_iter", p.max_iter},
            {"expectation", to_string(p.expectation)},
            {"pool_size", p.pool_size},
            {"quadrature_nodes", p.quadrature_nodes},
            {"seed", p.seed}};
}

/// Returns the problem with every default filled in, inline ambiguity and factor.
Json resolve_problem(const fs::path& path) {
    Json doc = io::read_json(path);
    if (!doc.is_object()) throw FormatError("problem: expected a JSON object");
    Json resolved = problem_defaults();
    for (const auto& [k, v] : doc.items()) {
        if (k == "ambiguity" || k == "factor") continue;
        if (!resolved.contains(k))
            throw FormatError("problem: unknown key '" + k + "' (allowed: ambiguity, factor, kappa, lambda, eta, eps, "
                              "max_iter, expectation, pool_size, quadrature_nodes, seed)");
        resolved[k] = v;
    }
    const fs::path base = path.parent_path();
    if (!doc.contains("ambiguity")) throw FormatError("problem: missing key 'ambiguity'");
    const Json& amb = doc["ambiguity"];
    resolved["ambiguity"] = amb.is_string() ? io::read_json(resolve(base, amb.get<std::string>())) : amb;
    const Json factor = doc.value("factor", Json("sec5"));
    if (factor.is_string()) {
        const std::string name = factor.get<std::string>();
        resolved["factor"] =
            name == "sec5" ? io::to_json(factor_preset(name)) : io::read_json(resolve(base, name));
    } else {
        resolved["factor"] = factor;
    }
    return resolved;
}

Problem problem_from_json(const Json& j) {
    Problem p;
    p.set = io::box_simplex_from_json(j.at("ambiguity"));
    p.factor = io::factor_model_from_json(j.at("factor"));
    auto num = [&](const char* key) {
        if (!j.at(key).is_number()) throw FormatError(std::string("problem.") + key + ": expected a number");
        return j.at(key).get<double>();
    };
    auto whole = [&](const char* key) {
        if (!j.at(key).is_number_unsigned())
            throw FormatError(std::string("problem.") + key + ": expected a nonnegative integer");
        return j.at(key).get<std::uint64_t>();
    };
    p.kappa = num("kappa");
    p.lambda = num("lambda");
    p.eta = num("eta");
    p.eps = num("eps");
    p.max_iter = whole("max_iter");
    if (!j.at("expectation").is_string()) throw FormatError("problem.expectation: expected a string");
    p.expectation = expectation_backend_from_string(j.at("expectation").get<std::string>());
    p.pool_size = whole("pool_size");
    p.quadrature_nodes = whole("quadrature_nodes");
    p.seed = whole("seed");
    p.factor.validate();
    if (p.set.dim() != p.factor.regimes.size())
        throw FormatError("problem: ambiguity dimension " + std::to_string(p.set.dim()) + " differs from " +
                          std::to_string(p.factor.regimes.size()) + " regimes");
    return p;
}

void cmd_solve(const std::string& problem_path, io::OutputSet& outputs, std::ostream& out, Json& config,
               Json& seed) {
    config = resolve_problem(problem_path);
    const Problem p = problem_from_json(config);
    seed = p.seed;
    if (!clip_bounds(p.set).feasible) throw InfeasibleSetError("problem: the ambiguity set is empty");

    const auto components = regime_distributions(p.factor);
    const std::size_t d = components.front().dim();
    // Pools are always drawn: they bound x^T xi from below for the default step size.
    const auto pools = std::make_shared<const std::vector<SamplePool>>(
        build_pools(components, p.pool_size, derive_seed(p.seed, {label_key("pool")})));
    const auto lipschitz = estimate_lipschitz_params(components, *pools, p.lambda, p.kappa);
    const double eta = p.eta > 0.0 ? p.eta : lipschitz_bound(lipschitz).default_eta;

    const ExpectationFn source = p.expectation == ExpectationBackend::Quadrature
                                     ? quadrature_source(components, p.quadrature_nodes)
                                     : pool_expectations(pools);
    const auto field = bayes_field(source, components.size(), d, {p.set}, p.lambda, p.kappa);
    const auto projector = portfolio_projector(2, d);
    SolverConfig sc;
    sc.eta = eta;
    sc.eps = p.eps;
    sc.max_iter = p.max_iter;
    const SolveResult result = extragradient(field, projector, sc);

    Json doc = io::to_json(result);
    doc["eta"] = eta;
    doc["natural_residual"] = natural_residual(field, projector, result.x_star);
    doc["lipschitz"] = {{"beta", lipschitz.beta},
                        {"sigma_bar_sq", lipschitz.sigma_bar_sq},
                        {"modulus", lipschitz_bound(lipschitz).modulus}};
    outputs.write("solve.json", io::dump(doc));
    std::vector<std::vector<std::string>> rows;
    for (std::size_t k = 0; k < result.residual_history.size(); ++k)
        rows.push_back({std::to_string(k + 1), io::format_double(result.residual_history[k])});
    outputs.write("residual_history.csv", io::csv({"iteration", "stop_value"}, rows));
    out << "solve: " << (result.converged ? "converged" : "not converged") << " after " << result.iterations
        << " iterations, stop " << io::format_double(result.stop_value) << "\n";
}

void cmd_truth(const ExperimentOptions& o, io::OutputSet& outputs, std::ostream& out, Json& config, Json& seed) {
    const ExperimentConfig cfg = o.resolve_config();
    config = io::to_json(cfg);
    seed = cfg.seed;
    const ExperimentContext ctx = make_context(cfg);
    const TruthResult truth = solve_truth(ctx);
    Json doc = io::to_json(truth.solve);
    doc["x_c"] = io::to_json(truth.x_c);
    doc["warm_start_iterations"] = truth.warm_start_iterations;
    doc["eta"] = ctx.eta;
    outputs.write("truth.json", io::dump(doc));
    out << "truth: " << (truth.solve.converged ? "converged" : "not converged") << " after "
        << truth.warm_start_iterations << "+" << truth.solve.iterations << " iterations\n";
}

void cmd_benchmark(const ExperimentOptions& o, bool progress, io::OutputSet& outputs, std::ostream& out,
                   std::ostream& err, Json& config, Json& seed) {
    const ExperimentConfig cfg = o.resolve_config();
    config = io::to_json(cfg);
    seed = cfg.seed;
    TrialCallback cb;
    if (progress)
        cb = [&err](const MetricsReport& m) {
            err << to_string(m.method) << " N=" << m.sample_size << " trial=" << m.trial
                << " d=" << io::format_double(m.residual) << " it=" << m.iterations << std::endl;
        };
    const BenchmarkReport report = benchmark(cfg, cb);
    for (const auto& [name, contents] : io::benchmark_tables(report)) outputs.write(name, contents);
    outputs.write("trials.csv", io::trials_csv(report));
    Json truth = io::to_json(report.truth.solve);
    truth["x_c"] = io::to_json(report.truth.x_c);
    truth["warm_start_iterations"] = report.truth.warm_start_iterations;
    truth["eta"] = report.eta;
    Json failures = Json::array();
    for (const auto& f : report.failures)
        failures.push_back({{"method", to_string(f.method)},
                            {"N", f.sample_size},
                            {"trial", f.trial},
                            {"seed", f.seed},
                            {"message", f.message}});
    truth["failures"] = failures;
    outputs.write("truth.json", io::dump(truth));

    out << "method,N,residual_mean,residual_variance,trials_completed,not_converged\n";
    for (const auto& c : report.cells)
        out << to_string(c.method) << "," << c.sample_size << "," << io::format_double(c.residual.mean) << ","
            << io::format_double(c.residual.variance) << "," << c.residual.trials_completed << "," << c.not_converged
            << "\n";
    if (!report.failures.empty()) err << report.failures.size() << " trial(s) failed; see truth.json\n";
}

} // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Bayesian distributionally robust VIs over mixture ambiguity sets", "bdrvi"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    std::string out_dir = "out";
    auto add_out = [&](CLI::App* sub) {
        sub->add_option("--out", out_dir, "output directory")->capture_default_str();
    };

    std::string preset = "sec5";
    auto* regimes = app.add_subcommand("regimes", "write the regime components of a preset");
    regimes->add_option("--preset", preset, "regime preset")->capture_default_str();
    add_out(regimes);

    FitOptions fit_opts;
    auto* fit = app.add_subcommand("fit", "posterior summary of the mixture weights from samples");
    fit->add_option("--samples", fit_opts.samples, "CSV of samples, one row per observation")->required();
    fit->add_option("--regimes", fit_opts.regimes, "regimes JSON")->required();
    fit->add_option("--alpha", fit_opts.alpha)->capture_default_str();
    fit->add_option("--scaling", fit_opts.scaling, "bvm or literal")->capture_default_str();
    add_out(fit);

    AmbiguityOptions amb_opts;
    auto* amb = app.add_subcommand("ambiguity", "build a Bayesian box or an empirical ball");
    amb->add_option("--posterior", amb_opts.posterior, "posterior JSON from `fit`");
    amb->add_option("--rc", amb_opts.r_c, "extra radius r_c")->capture_default_str();
    amb->add_option("--kind", amb_opts.kind, "l1 or chi2");
    amb->add_option("--atoms", amb_opts.atoms, "number of empirical atoms");
    amb->add_option("--samples", amb_opts.samples, "CSV whose row count gives the atoms");
    amb->add_option("--alpha", amb_opts.alpha)->capture_default_str();
    add_out(amb);

    EnvelopeOptions env_opts;
    auto* env = app.add_subcommand("envelope", "one-dimensional CDF envelopes");
    env->add_option("--seed", env_opts.seed)->capture_default_str();
    env->add_option("--alpha", env_opts.alpha)->capture_default_str();
    env->add_option("--sizes", env_opts.sizes)->delimiter(',')->capture_default_str();
    env->add_option("--grid-points", env_opts.grid_points)->capture_default_str();
    env->add_option("--scaling", env_opts.scaling, "bvm or literal")->capture_default_str();
    env->add_option("--methods", env_opts.methods)->delimiter(',')->capture_default_str();
    add_out(env);

    std::string problem;
    auto* solve = app.add_subcommand("solve", "solve one Bayesian DRVI");
    solve->add_option("--problem", problem, "problem JSON")->required();
    add_out(solve);

    ExperimentOptions truth_opts;
    auto* truth = app.add_subcommand("truth", "ground-truth equilibrium of an experiment");
    truth_opts.attach(truth);
    add_out(truth);

    ExperimentOptions bench_opts;
    bool progress = false;
    auto* bench = app.add_subcommand("benchmark", "multi-portfolio benchmark tables");
    bench_opts.attach(bench);
    bench->add_flag("--progress", progress, "print one line per finished trial to stderr");
    add_out(bench);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::CallForVersion&) {
        out << kVersion << "\n";
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        const std::string name = app.get_subcommands().front()->get_name();
        io::OutputSet outputs(out_dir);
        Json config;
        Json seed = nullptr;
        if (name == "regimes") cmd_regimes(preset, outputs, out, config);
        else if (name == "fit") cmd_fit(fit_opts, outputs, out, config);
        else if (name == "ambiguity") cmd_ambiguity(amb_opts, outputs, out, config);
        else if (name == "envelope") {
            cmd_envelope(env_opts, outputs, out, config);
            seed = env_opts.seed;
        } else if (name == "solve") cmd_solve(problem, outputs, out, config, seed);
        else if (name == "truth") cmd_truth(truth_opts, outputs, out, config, seed);
        else cmd_benchmark(bench_opts, progress, outputs, out, err, config, seed);
        finish(outputs, args, name, config, seed);
        return kExitOk;
    } catch (const DomainError& e) {
        err << "error: " << e.what() << "\n";
        return kExitDomain;
    } catch (const InvalidArgument& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const Json::exception& e) {
        err << "error: malformed JSON input: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitDomain;
    }
}

} // namespace bdrvi::cli
