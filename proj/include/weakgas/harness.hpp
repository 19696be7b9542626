#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "weakgas/model_io.hpp"
#include "weakgas/observables.hpp"
#include "weakgas/sampler.hpp"
#include "weakgas/statistics.hpp"

namespace weakgas {

inline constexpr const char* kVersion = "0.1.0";

enum class Verdict { pass, fail, inconclusive };

std::string to_string(Verdict v);

/// Pre-registered decision bands for a statistic that should be >= 0:
/// pass if stat >= -pass_k * se, fail if stat < -fail_k * se.
struct Band {
    double pass_k = 4.0;
    double fail_k = 6.0;
};

/// One verified claim. Every verdict carries the statistic, the threshold it
/// was compared against, and the tolerance (SE multiples or absolute slack).
struct Check {
    std::string group;     //!< variant the check belongs to
    std::string claim;
    double statistic = 0.0;
    double threshold = 0.0;
    double se = 0.0;
    std::string tolerance;
    Verdict verdict = Verdict::pass;
    bool control = false;  //!< negative control: this claim is expected to fail
    std::string note;
};

/// stat >= 0 in the band sense
Check one_sided(std::string claim, double stat, double se, Band band = {});
/// |stat| <= pass_k se passes, |stat| > fail_k se fails
Check two_sided(std::string claim, double stat, double se, Band band = {3.0, 6.0});
/// deterministic comparison stat <= threshold
Check at_most(std::string claim, double stat, double threshold, std::string tolerance);

struct EstimateRow {
    std::string quantity;
    double mean = 0.0;
    double se = 0.0;
    double n_eff = 0.0;
};

struct ExperimentResult {
    std::string experiment;
    std::vector<Check> checks;
    std::vector<EstimateRow> estimates;
    json tables = json::object();       //!< convergence tables and similar
    json diagnostics = json::object();  //!< acceptance rates, drift, split-stream checks
    std::vector<json> samples;          //!< thinned records, filled only on request
    std::map<std::string, std::string> files;  //!< extra CSV outputs by file name

    /// 0 all claims pass and every control group fails, 1 violation,
    /// 2 inconclusive (no violation)
    int exit_code() const;
    Verdict overall() const;
};

/// A model variant scanned by one experiment: the base model block with
/// the variant's keys merged in.
struct ModelVariant {
    std::string name;
    ModelSpec model;
    bool negative_control = false;
};

struct ExperimentConfig {
    std::string kind;
    JsonSource source;
    std::vector<ModelVariant> variants;
    SamplerParams sampler;
    int replicas = 4;
    double quadrature_spacing = 0.0;
    std::vector<std::uint64_t> seeds;
    std::vector<Observable> observables;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    std::vector<double> plateau_radii;
    bool randomized_family = false;
    std::vector<TestFunction> char_functions;

    const json& root() const { return source.root(); }
    std::uint64_t seed() const { return seeds.front(); }
};

extern const std::vector<std::string> kExperimentKinds;

/// Parses and validates an experiment config; `kind` (if nonempty) must
/// match the "experiment" key when one is present. Throws ConfigError.
ExperimentConfig parse_experiment(const JsonSource& src, const std::string& kind = "");

TestFunction parse_test_function(const json& j, int dim);
Observable parse_observable(const json& j, int dim);

struct RunOptions {
    std::optional<std::uint64_t> seed;
    int workers = 1;
    std::string out_dir;    //!< empty: write nothing
    bool samples = false;   //!< also write samples.jsonl
};

ExperimentResult run_experiment(ExperimentConfig config, const RunOptions& opt);

/// FNV-1a of the canonical (key-sorted) dump, as 16 hex digits
std::string config_hash(const json& config);
/// Deterministic sub-seed for a named component of a run.
std::uint64_t derive_seed(std::uint64_t seed, const std::string& tag);

json summary_json(const ExperimentResult& r, const ExperimentConfig& config);
void write_outputs(const ExperimentResult& r, const ExperimentConfig& config, const RunOptions& opt,
                   double wall_seconds);

}  // namespace weakgas
