#pragma once

// Seeded grid runner shared by the command line tool and the acceptance suite.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctlab/error.hpp"
#include "ctlab/scm.hpp"

namespace ctlab {

/// Unparseable or inconsistent experiment configuration (exit status 2).
class ConfigError : public ContractViolation {
public:
    using ContractViolation::ContractViolation;
};

inline constexpr const char* kToolVersion = "ctlab 0.1.0";

struct ExperimentConfig {
    std::string experiment;
    std::string fixture;  // a named fixture, or "files" with scm_files set
    nlohmann::json fixture_params = nlohmann::json::object();
    std::vector<std::string> source_files;
    std::string target_file;
    std::string algorithm;
    std::vector<std::size_t> N;
    std::vector<std::size_t> n;
    std::vector<std::uint64_t> seeds;
    nlohmann::json params = nlohmann::json::object();
    std::string out;
    nlohmann::json raw;  // the parsed document, for hashing
};

/// Validates field types, grids (non-empty) and seeds (distinct). Relative
/// SCM file paths resolve against `base_dir`.
ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

struct ResultRow {
    std::string experiment;
    std::string fixture;
    std::string method;
    int K = 0;
    int T = 0;
    int vocab = 0;
    std::size_t N = 0;
    std::size_t n = 0;
    std::uint64_t seed = 0;
    std::optional<double> nll;
    std::optional<double> excess;
    std::optional<double> kl;
    nlohmann::json extra = nlohmann::json::object();
};

struct ExperimentOutput {
    std::vector<ResultRow> rows;     // grid order: N, then n, then seed
    std::vector<nlohmann::json> details;  // per-run detail documents, same order
    nlohmann::json bounds;           // bounds report (algorithm "bounds" only)
    std::string curve_csv;           // n, seed, method, risk (algorithm "bounds" only)
    std::vector<nlohmann::json> run_seeds;
    double wall_seconds = 0.0;
};

/// Stable stream seed for data drawn inside one grid cell.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

DomainCollection config_domains(const ExperimentConfig& config);

/// Runs the grid on `jobs` workers; results do not depend on `jobs`.
ExperimentOutput run_experiment(const ExperimentConfig& config, int jobs = 1);

extern const std::vector<std::string> kResultColumns;
std::string results_csv(const std::vector<ResultRow>& rows);
nlohmann::json run_manifest(const ExperimentConfig& config, const ExperimentOutput& output);

/// Writes results.csv, manifest.json, runs/*.json and, for bounds, bounds.json and curve.csv.
void write_outputs(const std::filesystem::path& dir, const ExperimentConfig& config, const ExperimentOutput& output);

/// RFC 4180 reader; the first record is the header.
std::vector<std::vector<std::string>> read_csv_records(std::istream& is);

/// Mean and sample sd per (method, N, n); writes summary.csv and one curve file per method.
/// Throws ConfigError when required columns are missing.
std::vector<std::string> write_report(const std::filesystem::path& results_dir);

std::string sha256_hex(const std::string& bytes);

}  // namespace ctlab
