#pragma once

#include "bdrvi/ambiguity.hpp"
#include "bdrvi/bayes.hpp"
#include "bdrvi/empirical.hpp"
#include "bdrvi/experiment.hpp"
#include "bdrvi/mixture.hpp"
#include "bdrvi/types.hpp"
#include "bdrvi/vi.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace bdrvi::io {

using Json = nlohmann::json;

/// Malformed input files or configuration (exit status 2 in the CLI).
class FormatError : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

Json to_json(const Vector& v);
Json to_json(const Matrix& m);
Vector vector_from_json(const Json& j, const std::string& what);
Matrix matrix_from_json(const Json& j, const std::string& what);

Json to_json(const FactorModelConfig& cfg);
FactorModelConfig factor_model_from_json(const Json& j);

/// {"components": [{"name", "mean", "covariance"}...]} plus the factor parameters when known.
Json regimes_to_json(const std::vector<GaussianComponent>& components, const std::vector<std::string>& names);
std::vector<GaussianComponent> regimes_from_json(const Json& j);

Json to_json(const PosteriorSummary& s);
PosteriorSummary posterior_from_json(const Json& j);

Json to_json(const BoxSimplexSet& set);
BoxSimplexSet box_simplex_from_json(const Json& j);

Json to_json(const SolveResult& r);

Json to_json(const ExperimentConfig& cfg);
/// Strict: every key must be known and every known key present.
ExperimentConfig experiment_config_from_json(const Json& j);

/// Apply "a.b.c=value" overrides to a JSON document. The path must already
/// exist; value text is parsed as JSON when possible and as a string otherwise.
void apply_override(Json& doc, const std::string& assignment);

/// Sorted-key, two-space pretty printing with a trailing newline.
std::string dump(const Json& j);

Json read_json(const std::filesystem::path& path);

/// CSV of numbers, one observation per row. A first row with any non-numeric
/// cell is treated as a header. Ragged rows and non-numeric cells are errors
/// naming the 1-based line and column.
SampleMatrix parse_samples(const std::filesystem::path& path);
SampleMatrix parse_samples_text(const std::string& text, const std::string& source = "<input>");

/// Shortest round-trip decimal text of a double ("nan", "inf", "-inf" for the rest).
std::string format_double(double v);

/// Rows joined with ',' and terminated by '\n'.
std::string csv(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows);

std::string sha256_hex(const std::string& bytes);

/// Output directory writer that records each file with its content hash.
class OutputSet {
public:
    explicit OutputSet(std::filesystem::path dir);

    void write(const std::string& name, const std::string& contents);
    const std::filesystem::path& dir() const { return dir_; }
    /// [{"file", "sha256"}] in write order.
    Json listing() const;

private:
    std::filesystem::path dir_;
    std::vector<std::pair<std::string, std::string>> files_;
};

/// The four table CSVs keyed by file name.
std::map<std::string, std::string> benchmark_tables(const BenchmarkReport& report);
std::string trials_csv(const BenchmarkReport& report);

} // namespace bdrvi::io
