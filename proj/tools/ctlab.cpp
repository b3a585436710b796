// ctlab command line: gen, run, report, oracle, bounds.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ctlab/bounds.hpp"
#include "ctlab/dataset.hpp"
#include "ctlab/experiment.hpp"
#include "ctlab/fixtures.hpp"
#include "ctlab/joint.hpp"

using namespace ctlab;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitBudget = 3;

ExperimentConfig with_overrides(ExperimentConfig c, const std::optional<std::uint64_t>& seed, const std::string& out) {
    if (seed) c.seeds = {*seed};
    if (!out.empty()) c.out = out;
    if (c.out.empty()) c.out = "results/" + c.experiment;
    return c;
}

int do_run(const std::string& config_path, const std::optional<std::uint64_t>& seed, int jobs, const std::string& out) {
    const auto cfg = with_overrides(load_config(config_path), seed, out);
    const auto res = run_experiment(cfg, jobs);
    write_outputs(cfg.out, cfg, res);
    std::cout << res.rows.size() << " rows -> " << (fs::path(cfg.out) / "results.csv").string() << "\n";
    return 0;
}

int do_gen(const std::string& config_path, const std::optional<std::uint64_t>& seed, const std::string& out) {
    const auto cfg = load_config(config_path);
    const auto dom = config_domains(cfg);
    const std::uint64_t s = seed.value_or(cfg.seeds.front());
    const fs::path dir = out.empty() ? fs::path("data") / cfg.experiment : fs::path(out);
    fs::create_directories(dir);
    for (int d = 0; d <= dom.num_sources(); ++d) {
        const bool tgt = d == dom.num_sources();
        const std::size_t rows = tgt ? cfg.n.front() : cfg.N.front();
        const std::uint64_t ds = derive_seed(s, tgt ? 0 : static_cast<std::uint64_t>(d) + 1);
        const Dataset data = sample_dataset(dom.domain(d), rows, ds, tgt ? kTargetDomain : d);
        const std::string name = tgt ? "target" : "source" + std::to_string(d);
        std::ofstream csv(dir / (name + ".csv"), std::ios::binary);
        write_csv(csv, data);
        std::ofstream scm(dir / (name + ".scm.json"));
        scm << scm_to_json(dom.domain(d)).dump(2) << "\n";
    }
    std::cout << "wrote " << dom.num_sources() + 1 << " datasets to " << dir.string() << "\n";
    return 0;
}

int do_oracle(const std::string& config_path, int domain, const std::string& out) {
    const auto cfg = load_config(config_path);
    const auto dom = config_domains(cfg);
    const int d = domain < 0 ? dom.num_sources() : domain;
    if (d > dom.num_sources()) throw ConfigError("domain index out of range");
    const auto joint = exact_joint(dom.domain(d));
    const json j{{"fixture", cfg.fixture},
                 {"domain", d},
                 {"vocab", joint.vocab()},
                 {"num_vars", joint.num_vars()},
                 {"probs", joint.probs()}};
    if (out.empty()) {
        std::cout << j.dump(2) << "\n";
    } else {
        std::ofstream f(out);
        f << j.dump(2) << "\n";
    }
    return 0;
}

int do_bounds(const std::string& config_path, const std::optional<std::uint64_t>& seed, const std::string& out) {
    auto cfg = with_overrides(load_config(config_path), seed, out);
    if (cfg.algorithm != "bounds") throw ConfigError("the bounds subcommand needs algorithm = bounds");
    const auto res = run_experiment(cfg, 1);
    write_outputs(cfg.out, cfg, res);
    std::cout << res.bounds.at("bounds").dump() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"causal transportability lab"};
    app.require_subcommand(1);
    std::string config, out;
    std::optional<std::uint64_t> seed;
    int jobs = 1;
    int domain = -1;
    std::string results_dir;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "override the seed list with one seed");
        sub->add_option("--out", out, "output path");
    };
    auto* run = app.add_subcommand("run", "run an experiment grid");
    add_common(run);
    run->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
    auto* gen = app.add_subcommand("gen", "sample source and target datasets");
    add_common(gen);
    auto* report = app.add_subcommand("report", "summarize a results directory");
    report->add_option("--out", results_dir, "results directory")->required();
    auto* oracle = app.add_subcommand("oracle", "dump an exact joint");
    add_common(oracle);
    oracle->add_option("--domain", domain, "domain index (default: target)");
    auto* bounds = app.add_subcommand("bounds", "partial-transport bounds, CRO and the ERM curve");
    add_common(bounds);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }
    try {
        if (*run) return do_run(config, seed, jobs, out);
        if (*gen) return do_gen(config, seed, out);
        if (*oracle) return do_oracle(config, domain, out);
        if (*bounds) return do_bounds(config, seed, out);
        if (*report) {
            for (const auto& f : write_report(results_dir)) std::cout << (fs::path(results_dir) / f).string() << "\n";
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "invalid config: " << e.what() << "\n";
        return kExitConfig;
    } catch (const BudgetExceeded& e) {
        std::cerr << "budget exceeded: " << e.what() << "\n";
        return kExitBudget;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
