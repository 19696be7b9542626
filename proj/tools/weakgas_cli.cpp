#include <chrono>
#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "weakgas/harness.hpp"

namespace {

constexpr int kConfigError = 3;

int run(const std::string& kind, const std::string& config_path, const weakgas::RunOptions& opt)
{
    using namespace weakgas;
    auto start = std::chrono::steady_clock::now();
    ExperimentConfig config = parse_experiment(JsonSource::from_file(config_path), kind);
    ExperimentResult result = run_experiment(config, opt);
    double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_outputs(result, config, opt, wall);

    for (const auto& c : result.checks) {
        std::printf("%-13s %s%s  (stat %.6g, se %.3g)\n", to_string(c.verdict).c_str(), c.claim.c_str(),
                    c.control ? "  [negative control]" : "", c.statistic, c.se);
    }
    std::printf("%s: %s, %zu checks, %.1f s, outputs in %s\n", kind.c_str(), to_string(result.overall()).c_str(),
                result.checks.size(), wall, opt.out_dir.c_str());
    return result.exit_code();
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"weakgas: experiments for charged continuum gases with concave field energy"};
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed = 0;
    weakgas::RunOptions opt;
    opt.workers = 1;
    std::string out_dir;

    for (const auto& kind : weakgas::kExperimentKinds) {
        auto* sub = app.add_subcommand(kind, "run the " + kind + " experiment");
        sub->add_option("--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "override the config seed");
        sub->add_option("--workers", opt.workers, "worker threads for replicated chains")->check(CLI::PositiveNumber);
        sub->add_option("--out", out_dir, "output directory (default: runs/<experiment>)");
        sub->add_flag("--samples", opt.samples, "also write samples.jsonl");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : kConfigError;
    }

    std::string kind = app.get_subcommands().front()->get_name();
    auto* sub = app.get_subcommands().front();
    if (sub->count("--seed")) opt.seed = seed;
    opt.out_dir = out_dir.empty() ? "runs/" + kind : out_dir;

    try {
        return run(kind, config_path, opt);
    } catch (const weakgas::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
