#include "bdrvi/io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace bdrvi::io {

namespace {

const Json& require_key(const Json& j, const std::string& key, const std::string& what) {
    if (!j.is_object()) throw FormatError(what + ": expected a JSON object");
    const auto it = j.find(key);
    if (it == j.end()) throw FormatError(what + ": missing key '" + key + "'");
    return *it;
}

double number(const Json& j, const std::string& what) {
    if (!j.is_number()) throw FormatError(what + ": expected a number");
    return j.get<double>();
}

std::size_t count(const Json& j, const std::string& what) {
    if (!j.is_number_integer() && !j.is_number_unsigned()) throw FormatError(what + ": expected an integer");
    const auto v = j.get<long long>();
    if (v < 0) throw FormatError(what + ": expected a nonnegative integer");
    return static_cast<std::size_t>(v);
}

std::string text(const Json& j, const std::string& what) {
    if (!j.is_string()) throw FormatError(what + ": expected a string");
    return j.get<std::string>();
}

bool parse_number(const std::string& cell, double& out) {
    std::size_t b = 0, e = cell.size();
    while (b < e && (cell[b] == ' ' || cell[b] == '\t')) ++b;
    while (e > b && (cell[e - 1] == ' ' || cell[e - 1] == '\t' || cell[e - 1] == '\r')) --e;
    if (b == e) return false;
    const char* first = cell.data() + b;
    if (*first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, cell.data() + e, out);
    return ec == std::errc() && ptr == cell.data() + e && std::isfinite(out);
}

std::vector<std::string> split_row(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

} // namespace

Json to_json(const Vector& v) {
    Json out = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

Json to_json(const Matrix& m) {
    Json out = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) out.push_back(to_json(Vector(m.row(r).transpose())));
    return out;
}

Vector vector_from_json(const Json& j, const std::string& what) {
    if (!j.is_array()) throw FormatError(what + ": expected an array of numbers");
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i)
        v[static_cast<Eigen::Index>(i)] = number(j[i], what + "[" + std::to_string(i) + "]");
    return v;
}

Matrix matrix_from_json(const Json& j, const std::string& what) {
    if (!j.is_array()) throw FormatError(what + ": expected an array of rows");
    const std::size_t rows = j.size();
    const std::size_t cols = rows == 0 ? 0 : (j[0].is_array() ? j[0].size() : 0);
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows; ++r) {
        const Vector row = vector_from_json(j[r], what + "[" + std::to_string(r) + "]");
        if (static_cast<std::size_t>(row.size()) != cols)
            throw FormatError(what + ": row " + std::to_string(r) + " has the wrong length");
        m.row(static_cast<Eigen::Index>(r)) = row.transpose();
    }
    return m;
}

Json to_json(const FactorModelConfig& cfg) {
    Json regimes = Json::array();
    for (const auto& r : cfg.regimes) {
        regimes.push_back({{"name", r.name},
                           {"intercepts", to_json(r.intercepts)},
                           {"loadings", to_json(r.loadings)},
                           {"factor_mean", r.factor_mean},
                           {"factor_var", r.factor_var},
                           {"residual_var", r.residual_var}});
    }
    return {{"asset_count", cfg.asset_count}, {"regimes", regimes}};
}

FactorModelConfig factor_model_from_json(const Json& j) {
    const std::string what = "factor";
    static const std::set<std::string> keys{"asset_count", "regimes"};
    for (const auto& [k, v] : j.items())
        if (!keys.count(k)) throw FormatError(what + ": unknown key '" + k + "'");
    FactorModelConfig cfg;
    cfg.asset_count = count(require_key(j, "asset_count", what), what + ".asset_count");
    const Json& regimes = require_key(j, "regimes", what);
    if (!regimes.is_array()) throw FormatError(what + ".regimes: expected an array");
    static const std::set<std::string> rkeys{"name",       "intercepts", "loadings",
                                             "factor_mean", "factor_var", "residual_var"};
    for (std::size_t i = 0; i < regimes.size(); ++i) {
        const Json& r = regimes[i];
        const std::string rw = what + ".regimes[" + std::to_string(i) + "]";
        for (const auto& [k, v] : r.items())
            if (!rkeys.count(k)) throw FormatError(rw + ": unknown key '" + k + "'");
        FactorRegime reg;
        reg.name = text(require_key(r, "name", rw), rw + ".name");
        reg.intercepts = vector_from_json(require_key(r, "intercepts", rw), rw + ".intercepts");
        reg.loadings = vector_from_json(require_key(r, "loadings", rw), rw + ".loadings");
        reg.factor_mean = number(require_key(r, "factor_mean", rw), rw + ".factor_mean");
        reg.factor_var = number(require_key(r, "factor_var", rw), rw + ".factor_var");
        reg.residual_var = number(require_key(r, "residual_var", rw), rw + ".residual_var");
        cfg.regimes.push_back(std::move(reg));
    }
    cfg.validate();
    return cfg;
}

Json regimes_to_json(const std::vector<GaussianComponent>& components, const std::vector<std::string>& names) {
    Json list = Json::array();
    for (std::size_t j = 0; j < components.size(); ++j) {
        Json c{{"mean", to_json(components[j].mean)}, {"covariance", to_json(components[j].covariance)}};
        c["name"] = j < names.size() ? names[j] : "component" + std::to_string(j + 1);
        list.push_back(std::move(c));
    }
    return {{"components", list}};
}

std::vector<GaussianComponent> regimes_from_json(const Json& j) {
    const Json& list = require_key(j, "components", "regimes");
    if (!list.is_array() || list.empty()) throw FormatError("regimes.components: expected a nonempty array");
    std::vector<GaussianComponent> out;
    for (std::size_t i = 0; i < list.size(); ++i) {
        const std::string what = "regimes.components[" + std::to_string(i) + "]";
        GaussianComponent c;
        c.mean = vector_from_json(require_key(list[i], "mean", what), what + ".mean");
        c.covariance = matrix_from_json(require_key(list[i], "covariance", what), what + ".covariance");
        c.validate();
        if (!out.empty() && c.dim() != out.front().dim())
            throw FormatError(what + ": dimension differs from the first component");
        out.push_back(std::move(c));
    }
    return out;
}

Json to_json(const PosteriorSummary& s) {
    return {{"theta_hat", to_json(s.theta_hat)},
            {"sigma_diag", to_json(s.sigma_diag)},
            {"delta_hat", s.delta_hat},
            {"alpha", s.alpha},
            {"N", s.sample_count}};
}

PosteriorSummary posterior_from_json(const Json& j) {
    const std::string what = "posterior";
    PosteriorSummary s;
    s.theta_hat = vector_from_json(require_key(j, "theta_hat", what), what + ".theta_hat");
    s.sigma_diag = vector_from_json(require_key(j, "sigma_diag", what), what + ".sigma_diag");
    s.delta_hat = number(require_key(j, "delta_hat", what), what + ".delta_hat");
    s.alpha = number(require_key(j, "alpha", what), what + ".alpha");
    s.sample_count = count(require_key(j, "N", what), what + ".N");
    require_weight_vector(s.theta_hat, what + ".theta_hat", 1e-9);
    if (s.sigma_diag.size() != s.theta_hat.size()) throw FormatError(what + ": sigma_diag length mismatch");
    return s;
}

Json to_json(const BoxSimplexSet& set) {
    const auto b = clip_bounds(set);
    return {{"center", to_json(set.center)},
            {"radius", set.radius},
            {"lower", to_json(b.lower)},
            {"upper", to_json(b.upper)},
            {"feasible", b.feasible}};
}

BoxSimplexSet box_simplex_from_json(const Json& j) {
    const std::string what = "ambiguity";
    return BoxSimplexSet(vector_from_json(require_key(j, "center", what), what + ".center"),
                         number(require_key(j, "radius", what), what + ".radius"));
}

Json to_json(const SolveResult& r) {
    Json theta = Json::array();
    for (const auto& t : r.theta_star) theta.push_back(to_json(t));
    return {{"x_star", to_json(r.x_star)},   {"theta_star", theta},         {"iterations", r.iterations},
            {"stop_value", r.stop_value},    {"converged", r.converged}};
}

Json to_json(const ExperimentConfig& cfg) {
    Json methods = Json::array();
    for (auto m : cfg.methods) methods.push_back(to_string(m));
    Json j;
    j["factor"] = to_json(cfg.factor);
    j["theta_c"] = to_json(cfg.theta_c);
    j["r_c"] = cfg.r_c;
    j["kappa"] = cfg.kappa;
    j["lambda"] = cfg.lambda;
    j["baseline_lambda"] = cfg.baseline_lambda ? Json(*cfg.baseline_lambda) : Json(nullptr);
    j["alpha"] = cfg.alpha;
    j["sample_sizes"] = cfg.sample_sizes;
    j["trials"] = cfg.trials;
    j["n_sim"] = cfg.n_sim;
    j["n_test"] = cfg.n_test;
    j["tail_level"] = cfg.tail_level;
    j["seed"] = cfg.seed;
    j["methods"] = methods;
    j["sigma_scaling"] = to_string(cfg.sigma_scaling);
    j["tail_convention"] = to_string(cfg.tail_convention);
    j["expectation"] = to_string(cfg.expectation);
    j["pool_size"] = cfg.pool_size;
    j["quadrature_nodes"] = cfg.quadrature_nodes;
    j["eta"] = cfg.eta;
    j["eps"] = cfg.eps;
    j["max_iter"] = cfg.max_iter;
    j["truth_eps"] = cfg.truth_eps;
    j["truth_max_iter"] = cfg.truth_max_iter;
    j["truth_warm_start"] = cfg.truth_warm_start;
    j["threads"] = cfg.threads;
    return j;
}

ExperimentConfig experiment_config_from_json(const Json& j) {
    const std::string what = "config";
    if (!j.is_object()) throw FormatError("config: expected a JSON object");
    const Json reference = to_json(ExperimentConfig{});
    for (const auto& [k, v] : j.items())
        if (!reference.contains(k)) throw FormatError("config: unknown key '" + k + "'");
    for (const auto& [k, v] : reference.items())
        if (!j.contains(k)) throw FormatError("config: missing key '" + k + "'");

    ExperimentConfig cfg;
    cfg.factor = factor_model_from_json(j.at("factor"));
    cfg.theta_c = vector_from_json(j.at("theta_c"), "config.theta_c");
    cfg.r_c = number(j.at("r_c"), "config.r_c");
    cfg.kappa = number(j.at("kappa"), "config.kappa");
    cfg.lambda = number(j.at("lambda"), "config.lambda");
    if (j.at("baseline_lambda").is_null())
        cfg.baseline_lambda.reset();
    else
        cfg.baseline_lambda = number(j.at("baseline_lambda"), "config.baseline_lambda");
    cfg.alpha = number(j.at("alpha"), "config.alpha");
    cfg.sample_sizes.clear();
    if (!j.at("sample_sizes").is_array()) throw FormatError("config.sample_sizes: expected an array");
    for (const auto& n : j.at("sample_sizes")) cfg.sample_sizes.push_back(count(n, "config.sample_sizes"));
    cfg.trials = count(j.at("trials"), "config.trials");
    cfg.n_sim = count(j.at("n_sim"), "config.n_sim");
    cfg.n_test = count(j.at("n_test"), "config.n_test");
    cfg.tail_level = number(j.at("tail_level"), "config.tail_level");
    cfg.seed = j.at("seed").is_number_unsigned() || j.at("seed").is_number_integer()
                   ? j.at("seed").get<std::uint64_t>()
                   : throw FormatError("config.seed: expected an integer");
    cfg.methods.clear();
    if (!j.at("methods").is_array()) throw FormatError("config.methods: expected an array");
    for (const auto& m : j.at("methods")) cfg.methods.push_back(method_from_string(text(m, "config.methods")));
    cfg.sigma_scaling = sigma_scaling_from_string(text(j.at("sigma_scaling"), "config.sigma_scaling"));
    cfg.tail_convention = tail_convention_from_string(text(j.at("tail_convention"), "config.tail_convention"));
    cfg.expectation = expectation_backend_from_string(text(j.at("expectation"), "config.expectation"));
    cfg.pool_size = count(j.at("pool_size"), "config.pool_size");
    cfg.quadrature_nodes = count(j.at("quadrature_nodes"), "config.quadrature_nodes");
    cfg.eta = number(j.at("eta"), "config.eta");
    cfg.eps = number(j.at("eps"), "config.eps");
    cfg.max_iter = count(j.at("max_iter"), "config.max_iter");
    cfg.truth_eps = number(j.at("truth_eps"), "config.truth_eps");
    cfg.truth_max_iter = count(j.at("truth_max_iter"), "config.truth_max_iter");
    if (!j.at("truth_warm_start").is_boolean()) throw FormatError("config.truth_warm_start: expected a boolean");
    cfg.truth_warm_start = j.at("truth_warm_start").get<bool>();
    cfg.threads = count(j.at("threads"), "config.threads");
    (void)what;
    cfg.validate();
    return cfg;
}

void apply_override(Json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw FormatError("override '" + assignment + "': expected key.path=value");
    const std::string path = assignment.substr(0, eq);
    const std::string value_text = assignment.substr(eq + 1);

    Json* node = &doc;
    std::string prefix;
    std::istringstream parts(path);
    std::string part;
    while (std::getline(parts, part, '.')) {
        prefix += prefix.empty() ? part : "." + part;
        if (node->is_object()) {
            if (!node->contains(part)) throw FormatError("override: unknown key '" + prefix + "'");
            node = &(*node)[part];
        } else if (node->is_array()) {
            std::size_t idx = 0;
            const auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), idx);
            if (ec != std::errc() || ptr != part.data() + part.size() || idx >= node->size())
                throw FormatError("override: bad index '" + prefix + "'");
            node = &(*node)[idx];
        } else {
            throw FormatError("override: '" + prefix + "' is not a container");
        }
    }
    Json value = Json::parse(value_text, nullptr, false);
    if (value.is_discarded()) value = value_text;
    *node = std::move(value);
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

Json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    Json j = Json::parse(buf.str(), nullptr, false);
    if (j.is_discarded()) throw FormatError("'" + path.string() + "' is not valid JSON");
    return j;
}

SampleMatrix parse_samples_text(const std::string& content, const std::string& source) {
    std::vector<std::vector<double>> rows;
    std::istringstream in(content);
    std::string line;
    std::size_t line_no = 0;
    std::size_t width = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        const auto cells = split_row(line);
        std::vector<double> values(cells.size());
        std::size_t bad = cells.size();
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (!parse_number(cells[c], values[c])) {
                bad = c;
                break;
            }
        }
        if (first) {
            first = false;
            width = cells.size();
            if (bad != cells.size()) continue; // header
        }
        if (cells.size() != width) {
            std::ostringstream os;
            os << source << ": ragged row at line " << line_no << " (" << cells.size() << " columns, expected "
               << width << ")";
            throw FormatError(os.str());
        }
        if (bad != cells.size()) {
            std::ostringstream os;
            os << source << ": non-numeric cell at line " << line_no << ", column " << bad + 1 << " ('"
               << cells[bad] << "')";
            throw FormatError(os.str());
        }
        rows.push_back(std::move(values));
    }
    if (rows.empty()) throw FormatError(source + ": no data rows");
    SampleMatrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < width; ++c)
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    return m;
}

SampleMatrix parse_samples(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open samples file '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_samples_text(buf.str(), path.string());
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

std::string csv(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
    std::string out;
    auto append = [&](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out += ',';
            out += cells[i];
        }
        out += '\n';
    };
    append(header);
    for (const auto& r : rows) append(r);
    return out;
}

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw Error("sha256 failed");
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return os.str();
}

OutputSet::OutputSet(std::filesystem::path dir) : dir_(std::move(dir)) {}

void OutputSet::write(const std::string& name, const std::string& contents) {
    if (files_.empty()) {
        // Created on first write so failed runs leave nothing behind.
        std::error_code ec;
        std::filesystem::create_directories(dir_, ec);
        if (ec || !std::filesystem::is_directory(dir_))
            throw FormatError("cannot create output directory '" + dir_.string() + "'");
    }
    const auto path = dir_ / name;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write '" + path.string() + "'");
    out << contents;
    if (!out) throw FormatError("failed writing '" + path.string() + "'");
    files_.emplace_back(name, sha256_hex(contents));
}

Json OutputSet::listing() const {
    Json out = Json::array();
    for (const auto& [name, hash] : files_) out.push_back({{"file", name}, {"sha256", hash}});
    return out;
}

std::map<std::string, std::string> benchmark_tables(const BenchmarkReport& report) {
    using Pick = MetricSummary BenchmarkCell::*;
    const std::vector<std::pair<std::string, Pick>> tables{{"table1_residual.csv", &BenchmarkCell::residual},
                                                           {"table2_utility_error.csv", &BenchmarkCell::utility_error},
                                                           {"table3_sharpe.csv", &BenchmarkCell::sharpe},
                                                           {"table4_raroc.csv", &BenchmarkCell::raroc}};
    std::map<std::string, std::string> out;
    for (const auto& [name, pick] : tables) {
        std::vector<std::vector<std::string>> rows;
        for (const auto& cell : report.cells) {
            const MetricSummary& s = cell.*pick;
            rows.push_back({to_string(cell.method), std::to_string(cell.sample_size), format_double(s.mean),
                            format_double(s.variance), std::to_string(s.trials_completed)});
        }
        out[name] = csv({"method", "N", "mean", "variance", "trials_completed"}, rows);
    }
    return out;
}

std::string trials_csv(const BenchmarkReport& report) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& t : report.trials) {
        rows.push_back({to_string(t.method), std::to_string(t.sample_size), std::to_string(t.trial),
                        std::to_string(t.seed), format_double(t.residual), format_double(t.utility_error),
                        format_double(t.sharpe), format_double(t.raroc), t.raroc_sign_degenerate ? "1" : "0",
                        t.converged ? "1" : "0", std::to_string(t.iterations)});
    }
    return csv({"method", "N", "trial", "seed", "residual", "utility_error", "sharpe", "raroc",
                "raroc_sign_degenerate", "converged", "iterations"},
               rows);
}

} // namespace bdrvi::io
