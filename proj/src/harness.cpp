#include "weakgas/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "weakgas/lattice.hpp"
#include "weakgas/oracles.hpp"

namespace weakgas {

const std::vector<std::string> kExperimentKinds = {"fkg-mc",       "fkg-exact",       "criterion-scan",
                                                   "monotone-g",   "domination",      "tdlimit-scan",
                                                   "lattice-converge", "translate-check", "free-oracle-check"};

std::string to_string(Verdict v)
{
    switch (v) {
        case Verdict::pass: return "pass";
        case Verdict::fail: return "fail";
        case Verdict::inconclusive: return "inconclusive";
    }
    return "?";
}

namespace {

std::string fmt(double x)
{
    std::ostringstream os;
    os << std::setprecision(6) << x;
    return os.str();
}

std::string se_band(const Band& b)
{
    return "pass >= -" + fmt(b.pass_k) + " SE, fail < -" + fmt(b.fail_k) + " SE";
}

}  // namespace

Check one_sided(std::string claim, double stat, double se, Band band)
{
    Check c;
    c.claim = std::move(claim);
    c.statistic = stat;
    c.threshold = 0.0;
    c.se = se;
    c.tolerance = se_band(band);
    if (stat >= -band.pass_k * se)
        c.verdict = Verdict::pass;
    else if (stat < -band.fail_k * se)
        c.verdict = Verdict::fail;
    else
        c.verdict = Verdict::inconclusive;
    return c;
}

Check two_sided(std::string claim, double stat, double se, Band band)
{
    Check c = one_sided(std::move(claim), -std::abs(stat), se, band);
    c.statistic = stat;
    c.tolerance = "pass |stat| <= " + fmt(band.pass_k) + " SE, fail > " + fmt(band.fail_k) + " SE";
    return c;
}

Check at_most(std::string claim, double stat, double threshold, std::string tolerance)
{
    Check c;
    c.claim = std::move(claim);
    c.statistic = stat;
    c.threshold = threshold;
    c.tolerance = std::move(tolerance);
    c.verdict = stat <= threshold ? Verdict::pass : Verdict::fail;
    return c;
}

int ExperimentResult::exit_code() const
{
    bool violation = false, inconclusive = false;
    std::map<std::string, bool> control_failed;
    for (const auto& c : checks) {
        if (c.control) {
            control_failed[c.group] = control_failed[c.group] || c.verdict == Verdict::fail;
            continue;
        }
        violation = violation || c.verdict == Verdict::fail;
        inconclusive = inconclusive || c.verdict == Verdict::inconclusive;
    }
    for (const auto& [group, failed] : control_failed) violation = violation || !failed;
    if (violation) return 1;
    return inconclusive ? 2 : 0;
}

Verdict ExperimentResult::overall() const
{
    switch (exit_code()) {
        case 0: return Verdict::pass;
        case 1: return Verdict::fail;
        default: return Verdict::inconclusive;
    }
}

//---------------------------------------------------------------------------//
// Hashing and seeds
//---------------------------------------------------------------------------//

namespace {

std::uint64_t fnv1a(const std::string& s)
{
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t splitmix(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

}  // namespace

std::string config_hash(const json& config)
{
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << fnv1a(config.dump());
    return os.str();
}

std::uint64_t derive_seed(std::uint64_t seed, const std::string& tag)
{
    return splitmix(seed ^ fnv1a(tag));
}

//---------------------------------------------------------------------------//
// Parsing
//---------------------------------------------------------------------------//

namespace {

double number(const json& j, const char* key)
{
    if (!j.contains(key)) throw std::invalid_argument(std::string("missing '") + key + "'");
    if (!j.at(key).is_number()) throw std::invalid_argument(std::string("'") + key + "' must be a number");
    return j.at(key).get<double>();
}

double number_or(const json& j, const char* key, double fallback)
{
    return j.contains(key) ? number(j, key) : fallback;
}

Point point(const json& j, int dim)
{
    if (j.is_number()) {
        if (dim != 1) throw std::invalid_argument("expected a point with " + std::to_string(dim) + " coordinates");
        return Point{j.get<double>(), 0.0};
    }
    return make_point(j.get<std::vector<double>>(), dim);
}

TestFunction parse_bump(const json& j, int dim)
{
    std::string kind = j.at("kind").get<std::string>();
    Point c = j.contains("center") ? point(j.at("center"), dim) : Point{};
    double amp = number_or(j, "amplitude", 1.0);
    if (kind == "gaussian_bump") return TestFunction::gaussian_bump(dim, c, number(j, "width"), amp);
    if (kind == "plateau_ramp")
        return TestFunction::plateau_ramp(dim, c, number(j, "radius"), number_or(j, "ramp", 0.0), amp);
    throw std::invalid_argument("unknown test function kind '" + kind + "'");
}

}  // namespace

TestFunction parse_test_function(const json& j, int dim)
{
    TestFunction h(dim);
    if (j.contains("terms")) {
        for (const auto& t : j.at("terms")) h = h + parse_bump(t, dim);
    } else {
        h = parse_bump(j, dim);
    }
    if (j.contains("scale")) h = h.scaled(number(j, "scale"));
    if (j.contains("shift")) h = h.shifted(point(j.at("shift"), dim));
    return h;
}

Observable parse_observable(const json& j, int dim)
{
    std::string name = j.at("name").get<std::string>();
    std::vector<ObservableArgument> args;
    for (const auto& t : j.at("test_functions")) {
        ObservableArgument a;
        a.h = parse_test_function(t, dim);
        a.mode = pairing_mode_from_string(t.value("mode", std::string("signed")));
        args.push_back(std::move(a));
    }
    int n = static_cast<int>(args.size());
    OuterKind kind = outer_kind_from_string(j.value("outer", std::string("linear")));
    auto vec = [&](const char* key, double fallback) {
        if (j.contains(key)) return j.at(key).get<std::vector<double>>();
        return std::vector<double>(static_cast<std::size_t>(n), fallback);
    };
    OuterFunction outer = OuterFunction::linear({1.0});
    switch (kind) {
        case OuterKind::linear: outer = OuterFunction::linear(vec("coeffs", 1.0), number_or(j, "constant", 0.0)); break;
        case OuterKind::exp_product:
            // "kappa" is a common rate for every argument, "rates" one per argument
            outer = OuterFunction::exp_product(j.contains("rates") ? vec("rates", 0.0) : vec("", number(j, "kappa")),
                                               number_or(j, "factor", 1.0));
            break;
        case OuterKind::smooth_max: outer = OuterFunction::smooth_max(n, number_or(j, "sharpness", 1.0)); break;
        case OuterKind::smooth_min: outer = OuterFunction::smooth_min(n, number_or(j, "sharpness", 1.0)); break;
        case OuterKind::positive_power: outer = OuterFunction::positive_power(number(j, "power")); break;
        case OuterKind::product: outer = OuterFunction::product(n); break;
        case OuterKind::cosine: outer = OuterFunction::cosine(vec("freqs", 1.0)); break;
        case OuterKind::sine: outer = OuterFunction::sine(vec("freqs", 1.0)); break;
        case OuterKind::decomposed_part: throw std::invalid_argument("decomposed parts cannot be configured directly");
    }
    return Observable(name, std::move(args), std::move(outer));
}

namespace {

// Runs fn on the value at `key`, turning library errors into located config errors.
template <class F>
auto guarded(const JsonSource& src, const json& node, const std::vector<std::string>& path, const std::string& key,
             F&& fn)
{
    auto sub = path;
    sub.push_back(key);
    try {
        return fn(node.at(key));
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        src.fail(sub, e.what());
    }
}

bool support_inside(const TestFunction& h, const Box& box)
{
    if (h.is_zero()) return true;
    return box.contains(h.support());
}

void require_monotone(const ExperimentConfig& c)
{
    for (const auto& o : c.observables)
        if (!o.monotone())
            c.source.fail({"observables"}, "observable '" + o.name() + "' is not monotone (" + c.kind +
                                               " needs increasing observables)");
}

}  // namespace

ExperimentConfig parse_experiment(const JsonSource& src, const std::string& kind)
{
    const json& root = src.root();
    if (!root.is_object()) src.fail({}, "config must be a JSON object");
    ExperimentConfig c;
    c.source = src;
    c.kind = kind;
    if (root.contains("experiment")) {
        std::string k = root.at("experiment").is_string() ? root.at("experiment").get<std::string>() : "";
        if (!kind.empty() && k != kind) src.fail({"experiment"}, "config is for '" + k + "', not '" + kind + "'");
        c.kind = k;
    }
    if (std::find(kExperimentKinds.begin(), kExperimentKinds.end(), c.kind) == kExperimentKinds.end())
        src.fail({"experiment"}, "unknown experiment '" + c.kind + "'");

    // model and variants
    json base_model;
    ModelSpec base;
    if (root.contains("model")) {
        base = parse_model(src, {"model"});
        base_model = root.at("model");
    } else if (root.contains("model_file")) {
        std::filesystem::path file = root.at("model_file").get<std::string>();
        if (file.is_relative()) file = std::filesystem::path(src.origin()).parent_path() / file;
        JsonSource msrc = JsonSource::from_file(file.string());
        base = parse_model(msrc);
        base_model = msrc.root();
    } else {
        src.fail({}, "missing 'model' or 'model_file'");
    }
    bool top_control = root.value("negative_control", false);
    if (root.contains("variants")) {
        std::set<std::string> names;
        for (const auto& v : root.at("variants")) {
            std::string name = v.value("name", "variant" + std::to_string(c.variants.size()));
            if (!names.insert(name).second) src.fail({"variants"}, "duplicate variant name '" + name + "'");
            json merged = base_model;
            if (v.contains("model")) merged.merge_patch(v.at("model"));
            ModelSpec m;
            try {
                m = parse_model(JsonSource::from_json(merged));
            } catch (const ConfigError& e) {
                throw ConfigError("variant '" + name + "': " + e.what(), src.line_of({"variants"}));
            }
            c.variants.push_back({name, m, v.value("negative_control", top_control)});
        }
        if (c.variants.empty()) src.fail({"variants"}, "empty variant list");
    } else {
        c.variants.push_back({"base", base, top_control});
    }
    int dim = base.dim;
    for (const auto& v : c.variants)
        if (v.model.dim != dim) src.fail({"variants"}, "variants must keep the dimension of the base model");

    // sampler
    if (root.contains("sampler")) {
        const json& s = root.at("sampler");
        std::vector<std::string> p{"sampler"};
        auto& sp = c.sampler;
        if (s.contains("sweeps")) sp.sweeps = guarded(src, s, p, "sweeps", [](const json& x) {
            if (!x.is_number_integer() || x.get<std::int64_t>() < 1) throw std::invalid_argument("must be a positive integer");
            return x.get<std::uint64_t>();
        });
        if (s.contains("burn_in")) sp.burn_in = guarded(src, s, p, "burn_in", [](const json& x) { return x.get<std::int64_t>(); });
        if (s.contains("thinning")) sp.thinning = guarded(src, s, p, "thinning", [](const json& x) { return x.get<std::uint64_t>(); });
        if (s.contains("alpha")) sp.alpha = guarded(src, s, p, "alpha", [](const json& x) { return x.get<double>(); });
        if (s.contains("move_scale")) sp.move_scale = guarded(src, s, p, "move_scale", [](const json& x) { return x.get<double>(); });
        if (s.contains("verify_every"))
            sp.verify_every = guarded(src, s, p, "verify_every", [](const json& x) { return x.get<std::uint64_t>(); });
        sp.track_stability = s.value("track_stability", false);
        if (s.contains("proposal_mix")) {
            sp.mix = guarded(src, s, p, "proposal_mix", [](const json& x) {
                ProposalMix m;
                m.birth = number_or(x, "birth", m.birth);
                m.death = number_or(x, "death", m.death);
                m.move = number_or(x, "move", m.move);
                m.recharge = number_or(x, "recharge", m.recharge);
                m.validate();
                return m;
            });
        }
        if (s.contains("replicas")) c.replicas = guarded(src, s, p, "replicas", [](const json& x) {
            int r = x.get<int>();
            if (r < 1) throw std::invalid_argument("need at least one replica");
            return r;
        });
        if (s.contains("quadrature_spacing"))
            c.quadrature_spacing = guarded(src, s, p, "quadrature_spacing", [](const json& x) {
                double h = x.get<double>();
                if (h < 0.0) throw std::invalid_argument("spacing must be nonnegative");
                return h;
            });
        try {
            sp.validate();
        } catch (const std::exception& e) {
            src.fail({"sampler"}, e.what());
        }
    }

    // seeds
    if (root.contains("seeds")) {
        c.seeds = guarded(src, root, {}, "seeds", [](const json& x) { return x.get<std::vector<std::uint64_t>>(); });
        if (c.seeds.empty()) src.fail({"seeds"}, "empty seed list");
    } else {
        c.seeds = {root.contains("seed") ? guarded(src, root, {}, "seed", [](const json& x) { return x.get<std::uint64_t>(); })
                                         : 1};
    }

    // observables and pairs
    if (root.contains("observables")) {
        std::set<std::string> names;
        for (const auto& o : root.at("observables")) {
            Observable obs = guarded(src, json{{"observables", o}}, {}, "observables",
                                     [&](const json& x) { return parse_observable(x, dim); });
            if (!names.insert(obs.name()).second) src.fail({"observables"}, "duplicate observable '" + obs.name() + "'");
            c.observables.push_back(std::move(obs));
        }
    }
    auto index_of = [&](const json& x) -> std::size_t {
        if (x.is_number_integer()) {
            auto i = x.get<std::size_t>();
            if (i >= c.observables.size()) throw std::invalid_argument("observable index out of range");
            return i;
        }
        std::string name = x.get<std::string>();
        for (std::size_t i = 0; i < c.observables.size(); ++i)
            if (c.observables[i].name() == name) return i;
        throw std::invalid_argument("unknown observable '" + name + "'");
    };
    if (root.contains("pairs")) {
        c.pairs = guarded(src, root, {}, "pairs", [&](const json& x) {
            std::vector<std::pair<std::size_t, std::size_t>> out;
            for (const auto& p : x) {
                if (!p.is_array() || p.size() != 2) throw std::invalid_argument("each pair must have two entries");
                out.emplace_back(index_of(p[0]), index_of(p[1]));
            }
            return out;
        });
    } else {
        for (std::size_t i = 0; i < c.observables.size(); ++i)
            for (std::size_t k = i + 1; k < c.observables.size(); ++k) c.pairs.emplace_back(i, k);
    }

    // cutoff family
    if (root.contains("cutoff_family")) {
        const json& f = root.at("cutoff_family");
        c.plateau_radii = guarded(src, f, {"cutoff_family"}, "plateau_radii", [](const json& x) {
            auto r = x.get<std::vector<double>>();
            for (std::size_t i = 0; i < r.size(); ++i) {
                if (!(r[i] > 0.0)) throw std::invalid_argument("plateau radii must be positive");
                if (i > 0 && !(r[i] > r[i - 1])) throw std::invalid_argument("plateau radii must increase strictly");
            }
            return r;
        });
        c.randomized_family = f.value("randomized", false);
    }
    if (root.contains("char_functions")) {
        for (const auto& t : root.at("char_functions"))
            c.char_functions.push_back(guarded(src, json{{"char_functions", t}}, {}, "char_functions",
                                               [&](const json& x) { return parse_test_function(x, dim); }));
    }

    // experiment-specific preconditions
    const std::string& k = c.kind;
    if (k == "fkg-mc") {
        if (c.observables.size() < 2) src.fail({"observables"}, "fkg-mc needs at least two observables");
        require_monotone(c);
    }
    if (k == "fkg-exact") {
        if (c.observables.empty()) src.fail({"observables"}, "fkg-exact needs observables");
        if (!root.contains("lattice")) src.fail({}, "fkg-exact needs a 'lattice' block");
        require_monotone(c);
    }
    if (k == "criterion-scan" && !root.contains("lattice")) src.fail({}, "criterion-scan needs a 'lattice' block");
    if (k == "monotone-g") {
        if (c.plateau_radii.size() < 3) src.fail({"cutoff_family"}, "monotone-g needs at least three cutoffs");
        if (c.observables.empty()) src.fail({"observables"}, "monotone-g needs observables");
        require_monotone(c);
    }
    if (k == "domination" && c.observables.empty()) src.fail({"observables"}, "domination needs observables");
    if (k == "tdlimit-scan") {
        if (c.plateau_radii.size() < 2) src.fail({"cutoff_family"}, "tdlimit-scan needs at least two cutoffs");
        if (c.char_functions.empty()) src.fail({"char_functions"}, "tdlimit-scan needs test functions");
        for (const auto& v : c.variants) {
            auto plateau = Box::cube(dim, v.model.cutoff.center(), c.plateau_radii.back());
            for (const auto& f : c.char_functions)
                if (!support_inside(f, plateau))
                    src.fail({"char_functions"}, "test function support exceeds the largest plateau");
        }
    }
    if (k == "translate-check") {
        if (c.observables.empty()) src.fail({"observables"}, "translate-check needs observables");
        if (!root.contains("shifts")) src.fail({}, "translate-check needs 'shifts'");
    }
    if (k == "free-oracle-check" && !root.contains("laplace_pairs") && c.char_functions.empty())
        src.fail({}, "free-oracle-check needs 'laplace_pairs' or 'char_functions'");
    return c;
}

//---------------------------------------------------------------------------//
// Runners
//---------------------------------------------------------------------------//

namespace {

using Streams = std::vector<std::span<const double>>;

Streams streams(const std::vector<ChainOutput>& reps, std::size_t q)
{
    Streams out;
    for (const auto& r : reps) out.emplace_back(r.series[q]);
    return out;
}

struct Context {
    const ExperimentConfig& cfg;
    const RunOptions& opt;
    ExperimentResult& result;
    const ModelVariant* variant = nullptr;
    std::uint64_t seed = 1;
    bool seed_tag = false;

    const JsonSource& src() const { return cfg.source; }
    const json& root() const { return cfg.root(); }

    std::string prefix() const
    {
        std::string p;
        if (cfg.variants.size() > 1) p += variant->name + "/";
        if (seed_tag) p += "seed=" + std::to_string(seed) + "/";
        return p;
    }
    std::string tag(const std::string& what) const { return cfg.kind + "/" + variant->name + "/" + what; }
    std::uint64_t sub_seed(const std::string& what) const { return derive_seed(seed, tag(what)); }

    void claim(Check c)
    {
        c.group = variant->name;
        c.control = variant->negative_control;
        c.claim = prefix() + c.claim;
        result.checks.push_back(std::move(c));
    }
    //! supporting check that must pass even for negative controls
    void aux(Check c)
    {
        c.group = variant->name;
        c.claim = prefix() + c.claim;
        result.checks.push_back(std::move(c));
    }
    void estimate(const std::string& name, double mean, double se, double n_eff)
    {
        result.estimates.push_back({prefix() + name, mean, se, n_eff});
    }
    void estimate(const std::string& name, const MCEstimate& e) { estimate(name, e.mean, e.se, e.n_eff); }

    QuadratureGrid grid(const ModelSpec& m) const { return QuadratureGrid::for_model(m, cfg.quadrature_spacing); }

    /// Replicated chains plus diagnostics; `label` names the run in the outputs.
    std::vector<ChainOutput> chains(const std::string& label, const ModelSpec& model, const std::vector<Quantity>& qs,
                                    const std::vector<std::string>& names, SamplerParams params)
    {
        params.seed = sub_seed(label);
        auto grid_ = grid(model);
        auto reps = run_replicas(model, grid_, params, qs, cfg.replicas, opt.workers);
        json d;
        std::array<std::uint64_t, 4> prop{}, acc{};
        double drift = 0.0, n_mean = 0.0;
        std::size_t n_count = 0;
        for (const auto& r : reps) {
            for (int k = 0; k < 4; ++k) {
                prop[k] += r.counts.proposed[k];
                acc[k] += r.counts.accepted[k];
            }
            drift = std::max(drift, r.max_energy_drift);
            for (double n : r.n_particles) n_mean += n;
            n_count += r.n_particles.size();
        }
        const char* moves[] = {"birth", "death", "move", "recharge"};
        for (int k = 0; k < 4; ++k)
            d["acceptance"][moves[k]] = prop[k] ? static_cast<double>(acc[k]) / static_cast<double>(prop[k]) : 0.0;
        d["max_energy_drift"] = drift;
        d["mean_particles"] = n_count ? n_mean / static_cast<double>(n_count) : 0.0;
        d["samples_per_replica"] = reps.front().n_particles.size();
        d["seed"] = params.seed;
        for (std::size_t q = 0; q < qs.size(); ++q) {
            auto split = split_stream_check(streams(reps, q));
            d["split_stream"][names[q]] = {{"first", split.first}, {"second", split.second}, {"se", split.se},
                                           {"agree", split.agree}};
        }
        result.diagnostics[prefix() + label] = d;
        if (opt.samples) {
            const auto& r0 = reps.front();
            std::uint64_t burn = params.burn(), thin = params.thin();
            for (std::size_t i = 0; i < r0.n_particles.size(); ++i) {
                json rec{{"run", prefix() + label},
                         {"step", burn + (i + 1) * thin},
                         {"n_particles", r0.n_particles[i]},
                         {"energy", r0.energy[i]}};
                for (std::size_t q = 0; q < qs.size(); ++q) rec["values"][names[q]] = r0.series[q][i];
                result.samples.push_back(std::move(rec));
            }
        }
        return reps;
    }

    void require_inside(const Observable& o, const Box& window, const std::string& what) const
    {
        for (const auto& a : o.arguments())
            if (!support_inside(a.h, window))
                src().fail({"observables"}, "observable '" + o.name() + "'" + (what.empty() ? "" : " " + what) +
                                                " reaches outside the sampling window supp g + supp G");
    }
};

std::vector<Quantity> quantities(const std::vector<Observable>& obs)
{
    std::vector<Quantity> qs;
    for (const auto& o : obs) qs.push_back([o](const Configuration& cfg) { return o.evaluate(cfg); });
    return qs;
}

std::vector<std::string> names_of(const std::vector<Observable>& obs)
{
    std::vector<std::string> n;
    for (const auto& o : obs) n.push_back(o.name());
    return n;
}

LatticeWindow lattice_window(const Context& ctx, const ModelSpec& model)
{
    const json& l = ctx.root().at("lattice");
    return guarded(ctx.src(), ctx.root(), {}, "lattice", [&](const json&) {
        double spacing = number(l, "spacing");
        if (!(spacing > 0.0)) throw std::invalid_argument("lattice spacing must be positive");
        if (l.value("covering", false)) return LatticeWindow::covering(model.dim, spacing, model.cutoff.support());
        LatticeWindow::Index first{0, 0}, count{1, 1};
        auto f = l.at("first").get<std::vector<int>>();
        auto n = l.at("count").get<std::vector<int>>();
        if (static_cast<int>(f.size()) != model.dim || static_cast<int>(n.size()) != model.dim)
            throw std::invalid_argument("'first' and 'count' need one entry per dimension");
        for (int k = 0; k < model.dim; ++k) {
            first[k] = f[k];
            count[k] = n[k];
        }
        return LatticeWindow(model.dim, spacing, first, count);
    });
}

//--- fkg-mc --------------------------------------------------------------//

void run_fkg_mc(Context& ctx)
{
    const auto& model = ctx.variant->model;
    const auto& obs = ctx.cfg.observables;
    for (const auto& o : obs) ctx.require_inside(o, model.window(), "");
    auto reps = ctx.chains("chain", model, quantities(obs), names_of(obs), ctx.cfg.sampler);
    for (std::size_t q = 0; q < obs.size(); ++q) ctx.estimate("E[" + obs[q].name() + "]", estimate_mean(streams(reps, q)));
    for (auto [i, k] : ctx.cfg.pairs) {
        auto cov = estimate_covariance(streams(reps, i), streams(reps, k));
        std::string name = "Cov(" + obs[i].name() + "," + obs[k].name() + ")";
        ctx.estimate(name, cov);
        ctx.claim(one_sided(name + " >= 0", cov.mean, cov.se));
    }
}

//--- fkg-exact -----------------------------------------------------------//

void run_fkg_exact(Context& ctx)
{
    const auto& model = ctx.variant->model;
    auto window = lattice_window(ctx, model);
    const json& l = ctx.root().at("lattice");
    EnumerationOptions eo;
    eo.n_max = l.value("n_max", 5);
    eo.budget = l.value("budget", 1e7);
    eo.workers = ctx.opt.workers;
    eo.pairs = ctx.cfg.pairs;
    std::vector<LatticeObservable> lobs;
    for (const auto& o : ctx.cfg.observables) {
        if (std::any_of(o.arguments().begin(), o.arguments().end(),
                        [](const ObservableArgument& a) { return a.mode != PairingMode::signed_charge; }))
            ctx.src().fail({"observables"}, "lattice observables use signed pairings only");
        lobs.push_back(LatticeObservable::from(o, window));
    }
    auto res = enumerate_lattice(model, window, ctx.grid(model), lobs, eo);
    for (std::size_t q = 0; q < lobs.size(); ++q) ctx.estimate("E[" + lobs[q].name() + "]", res.expectations[q], 0.0, 0.0);
    json table = json::array();
    for (const auto& pc : res.covariances) {
        std::string name = "Cov(" + lobs[pc.first].name() + "," + lobs[pc.second].name() + ")";
        ctx.estimate(name, pc.covariance, 0.0, 0.0);
        Check c = at_most("-" + name + " <= truncation error", -pc.covariance, pc.truncation_error,
                          "certified truncation error");
        ctx.claim(c);
        table.push_back({{"pair", {lobs[pc.first].name(), lobs[pc.second].name()}},
                         {"covariance", pc.covariance},
                         {"truncation_error", pc.truncation_error}});
    }
    ctx.result.tables[ctx.prefix() + "enumeration"] = {{"sites", window.size()},
                                                       {"n_max", eo.n_max},
                                                       {"states", res.states},
                                                       {"log_partition", res.log_partition},
                                                       {"omitted_mass", res.omitted_mass},
                                                       {"covariances", table}};
}

//--- criterion-scan ------------------------------------------------------//

void run_criterion_scan(Context& ctx)
{
    const auto& model = ctx.variant->model;
    auto window = lattice_window(ctx, model);
    const json& l = ctx.root().at("lattice");
    int n_max = l.value("n_max", 5);
    int states = l.value("states", 100);
    if (n_max < 0 || states < 1) ctx.src().fail({"lattice"}, "n_max must be >= 0 and states >= 1");
    LatticeEnergy U(model, window, ctx.grid(model));
    Rng rng = make_rng(ctx.sub_seed("states"));
    std::vector<double> eta(window.size());
    double worst = -std::numeric_limits<double>::infinity();
    std::string witness;
    double worst_fd = 0.0;
    std::size_t pairs = 0;
    std::ostringstream csv;
    csv << std::setprecision(17);
    for (int s = 0; s < states; ++s) {
        for (auto& e : eta) {
            e = 0.0;
            int n = static_cast<int>(uniform01(rng) * (n_max + 1));
            for (int i = 0; i < n; ++i) e += model.charge_law.sample(rng);
        }
        for (std::size_t j = 0; j < eta.size(); ++j) {
            for (std::size_t k = j + 1; k < eta.size(); ++k) {
                auto mp = U.mixed_partial(eta, j, k);
                ++pairs;
                csv << j << ',' << k << ',' << s << ',' << mp.value << ',' << mp.fd << '\n';
                if (mp.value > worst) {
                    worst = mp.value;
                    witness = "state " + std::to_string(s) + ", sites (" + std::to_string(j) + "," + std::to_string(k) +
                              "), value " + fmt(mp.value);
                }
                worst_fd = std::max(worst_fd, std::abs(mp.value - mp.fd) / mp.tolerance);
            }
        }
    }
    if (pairs == 0) ctx.src().fail({"lattice"}, "criterion-scan needs at least two sites");
    Check c = at_most("max mixed partial of U <= 1e-12", worst, 1e-12, "absolute 1e-12");
    c.note = "largest at " + witness + "; " + std::to_string(pairs) + " site pairs scanned";
    ctx.claim(c);
    ctx.aux(at_most("finite-difference agreement (worst |q - fd| / tol)", worst_fd, 1.0, "max(1e-6, 1e-4 relative)"));
    std::string name = ctx.cfg.variants.size() > 1 ? "criterion_scan_" + ctx.variant->name + ".csv" : "criterion_scan.csv";
    ctx.result.tables[ctx.prefix() + "criterion_scan"] = {
        {"max_mixed_partial", worst}, {"witness", witness}, {"pairs", pairs}, {"file", name}};
    ctx.result.files[name] = "site_j,site_l,state_id,mixed_partial,fd_check\n" + csv.str();
}

//--- monotone-g ----------------------------------------------------------//

void run_monotone_g(Context& ctx)
{
    const auto& model = ctx.variant->model;
    const auto& obs = ctx.cfg.observables;
    const auto& radii = ctx.cfg.plateau_radii;
    ModelSpec smallest = model;
    smallest.cutoff = model.cutoff.with_plateau(radii.front());
    for (const auto& o : obs) ctx.require_inside(o, smallest.window(), "");
    std::vector<std::vector<MCEstimate>> est(radii.size());
    json table = json::array();
    for (std::size_t n = 0; n < radii.size(); ++n) {
        ModelSpec m = model;
        m.cutoff = model.cutoff.with_plateau(radii[n]);
        auto reps = ctx.chains("plateau=" + fmt(radii[n]), m, quantities(obs), names_of(obs), ctx.cfg.sampler);
        for (std::size_t q = 0; q < obs.size(); ++q) {
            est[n].push_back(estimate_mean(streams(reps, q)));
            ctx.estimate("E_g[" + obs[q].name() + "] plateau=" + fmt(radii[n]), est[n].back());
            table.push_back({{"plateau", radii[n]}, {"observable", obs[q].name()}, {"mean", est[n].back().mean},
                             {"se", est[n].back().se}});
        }
    }
    for (std::size_t q = 0; q < obs.size(); ++q)
        for (std::size_t n = 0; n + 1 < radii.size(); ++n) {
            const auto& a = est[n][q];
            const auto& b = est[n + 1][q];
            ctx.claim(one_sided("E[" + obs[q].name() + "] plateau " + fmt(radii[n + 1]) + " - plateau " + fmt(radii[n]) +
                                    " >= 0",
                                b.mean - a.mean, std::hypot(a.se, b.se)));
        }
    ctx.result.tables[ctx.prefix() + "monotone_g"] = table;
}

//--- domination ----------------------------------------------------------//

void run_domination(Context& ctx)
{
    const auto& model = ctx.variant->model;
    const auto& obs = ctx.cfg.observables;
    for (const auto& o : obs) ctx.require_inside(o, model.window(), "");
    double b = model.slope_bound();
    auto grid = ctx.grid(model);
    auto reps = ctx.chains("gibbs", model, quantities(obs), names_of(obs), ctx.cfg.sampler);

    std::size_t draws = ctx.root().value("tilted_samples", std::size_t{100000});
    TiltedFreeSampler tilted(model, grid, model.window(), b);
    Rng rng = make_rng(ctx.sub_seed("tilted"));
    std::vector<std::vector<double>> values(obs.size(), std::vector<double>(draws));
    for (std::size_t i = 0; i < draws; ++i) {
        Configuration cfg = tilted.sample(rng);
        for (std::size_t q = 0; q < obs.size(); ++q) values[q][i] = obs[q].evaluate(cfg);
    }
    bool equality = model.energy.kind() == EnergyKind::linear && model.energy.max_slope() == -b;
    for (std::size_t q = 0; q < obs.size(); ++q) {
        const auto& o = obs[q];
        auto eg = estimate_mean(streams(reps, q));
        auto e0 = estimate_iid(values[q]);
        auto bound = o.bound();
        double M = tilted_bound_oracle(model, grid, b, o.bound_test_function(), bound.K);
        ctx.estimate("E_g[" + o.name() + "]", eg);
        ctx.estimate("E_0g[" + o.name() + "]", e0);
        ctx.estimate("M[" + o.name() + "]", M, 0.0, 0.0);
        if (o.monotone())
            ctx.claim(one_sided("E_0g[" + o.name() + "] - E_g[" + o.name() + "] >= 0", e0.mean - eg.mean,
                                std::hypot(e0.se, eg.se)));
        ctx.claim(one_sided("M - E_g[" + o.name() + "] >= 0", M - eg.mean, eg.se));
        ctx.claim(one_sided("M - E_0g[" + o.name() + "] >= 0", M - e0.mean, e0.se));
        bool laplace = o.outer().kind() == OuterKind::exp_product &&
                       std::all_of(o.arguments().begin(), o.arguments().end(),
                                   [](const ObservableArgument& a) { return a.mode == PairingMode::signed_charge; });
        if (laplace) {
            TestFunction f(model.dim);
            for (int i = 0; i < o.arity(); ++i) f = f + o.arguments()[i].h.scaled(o.outer().params()[i]);
            double exact = o.outer().constant() * tilted_laplace_oracle(model, grid, b, TestFunction(model.dim), f);
            ctx.estimate("oracle E_0g[" + o.name() + "]", exact, 0.0, 0.0);
            ctx.claim(two_sided("E_0g[" + o.name() + "] - closed form", e0.mean - exact, e0.se));
        }
        if (equality)
            ctx.claim(two_sided("E_g[" + o.name() + "] - E_0g[" + o.name() + "] (coincident measures)",
                                eg.mean - e0.mean, std::hypot(e0.se, eg.se)));
    }
}

//--- tdlimit-scan --------------------------------------------------------//

struct CharRun {
    std::vector<ComplexEstimate> values;  // one per test function
};

CharRun char_run(Context& ctx, const std::string& label, const ModelSpec& m)
{
    const auto& fs = ctx.cfg.char_functions;
    std::vector<Quantity> qs;
    std::vector<std::string> names;
    for (std::size_t k = 0; k < fs.size(); ++k) {
        const TestFunction& f = fs[k];
        qs.push_back([f](const Configuration& cfg) { return std::cos(pairing(cfg, f)); });
        qs.push_back([f](const Configuration& cfg) { return std::sin(pairing(cfg, f)); });
        names.push_back("cos f" + std::to_string(k));
        names.push_back("sin f" + std::to_string(k));
    }
    auto reps = ctx.chains(label, m, qs, names, ctx.cfg.sampler);
    CharRun out;
    for (std::size_t k = 0; k < fs.size(); ++k) {
        auto c = estimate_complex(streams(reps, 2 * k), streams(reps, 2 * k + 1));
        out.values.push_back(c);
        ctx.estimate("Re C(f" + std::to_string(k) + ") " + label, c.re);
        ctx.estimate("Im C(f" + std::to_string(k) + ") " + label, c.im);
    }
    return out;
}

void run_tdlimit_scan(Context& ctx)
{
    const auto& model = ctx.variant->model;
    const auto& fs = ctx.cfg.char_functions;
    const auto& radii = ctx.cfg.plateau_radii;
    std::vector<CharRun> runs;
    for (double r : radii) {
        ModelSpec m = model;
        m.cutoff = model.cutoff.with_plateau(r);
        runs.push_back(char_run(ctx, "plateau=" + fmt(r), m));
    }
    json table = json::array();
    for (std::size_t k = 0; k < fs.size(); ++k) {
        std::string fk = "f" + std::to_string(k);
        std::size_t first = radii.size();
        for (std::size_t n = 0; n < radii.size(); ++n)
            if (Box::cube(model.dim, model.cutoff.center(), radii[n]).contains(fs[k].support())) {
                first = n;
                break;
            }
        std::vector<double> gap, gap_se;
        for (std::size_t n = 0; n + 1 < radii.size(); ++n) {
            const auto& a = runs[n].values[k];
            const auto& b = runs[n + 1].values[k];
            gap.push_back(std::abs(b.mean - a.mean));
            gap_se.push_back(std::hypot(a.se, b.se));
        }
        for (std::size_t n = 0; n < radii.size(); ++n) {
            const auto& c = runs[n].values[k];
            json row{{"test_function", fk}, {"plateau", radii[n]}, {"re", c.mean.real()}, {"im", c.mean.imag()},
                     {"se", c.se}};
            if (n + 1 < radii.size()) row["gap_to_next"] = gap[n];
            table.push_back(row);
        }
        for (std::size_t n = first; n + 1 < gap.size(); ++n)
            ctx.claim(one_sided("|C gap| nonincreasing for " + fk + " at plateau " + fmt(radii[n + 1]),
                                gap[n] - gap[n + 1], std::hypot(gap_se[n], gap_se[n + 1])));
        std::size_t last = radii.size() - 1;
        ctx.claim(two_sided("C_" + fk + " last two cutoffs agree", gap[last - 1], gap_se[last - 1], {4.0, 6.0}));
        if (model.energy.kind() == EnergyKind::zero) {
            auto exact = free_char_oracle(model, fs[k]);
            for (std::size_t n = 0; n < radii.size(); ++n) {
                const auto& c = runs[n].values[k];
                ctx.claim(two_sided("C_" + fk + " plateau " + fmt(radii[n]) + " - free oracle", std::abs(c.mean - exact),
                                    c.se));
            }
        }
    }
    if (ctx.cfg.randomized_family) {
        // a second family g_n -> beta with random ramps; only its endpoint enters the comparison
        Rng rng = make_rng(ctx.sub_seed("randomized-family"));
        double ramp = model.cutoff.ramp_width() * (0.5 + uniform01(rng));
        ModelSpec m = model;
        m.cutoff = CutoffFunction(model.dim, radii.back(), ramp, model.cutoff.height(), model.beta(),
                                  model.cutoff.center());
        auto alt = char_run(ctx, "randomized endpoint ramp=" + fmt(ramp), m);
        for (std::size_t k = 0; k < fs.size(); ++k) {
            const auto& a = alt.values[k];
            const auto& b = runs.back().values[k];
            ctx.claim(two_sided("C_f" + std::to_string(k) + " randomized family endpoint - canonical endpoint",
                                std::abs(a.mean - b.mean), std::hypot(a.se, b.se), {4.0, 6.0}));
        }
    }
    ctx.result.tables[ctx.prefix() + "tdlimit"] = table;
}

//--- translate-check -----------------------------------------------------//

void run_translate_check(Context& ctx)
{
    const auto& model = ctx.variant->model;
    const auto& obs = ctx.cfg.observables;
    std::vector<Point> shifts = guarded(ctx.src(), ctx.root(), {}, "shifts", [&](const json& x) {
        std::vector<Point> out;
        for (const auto& s : x) out.push_back(point(s, model.dim));
        return out;
    });
    for (const Point& x : shifts) {
        std::string sx = fmt(x[0]) + (model.dim == 2 ? "," + fmt(x[1]) : "");
        // F o T_x pairs eta with h(. + x)
        std::vector<Observable> moved;
        for (const auto& o : obs) {
            std::vector<ObservableArgument> args(o.arguments().begin(), o.arguments().end());
            for (auto& a : args) a.h = a.h.shifted(-1.0 * x);
            moved.emplace_back(o.name(), args, o.outer());
            ctx.require_inside(moved.back(), model.window(), "shifted by -x");
        }
        ModelSpec shifted = model;
        shifted.cutoff = model.cutoff.shifted(x);
        for (const auto& o : obs) ctx.require_inside(o, shifted.window(), "");
        auto a = ctx.chains("F o T_x, x=" + sx, model, quantities(moved), names_of(obs), ctx.cfg.sampler);
        auto b = ctx.chains("shifted cutoff, x=" + sx, shifted, quantities(obs), names_of(obs), ctx.cfg.sampler);
        for (std::size_t q = 0; q < obs.size(); ++q) {
            auto ea = estimate_mean(streams(a, q));
            auto eb = estimate_mean(streams(b, q));
            ctx.estimate("E_g[" + obs[q].name() + " o T_x] x=" + sx, ea);
            ctx.estimate("E_g(.-x)[" + obs[q].name() + "] x=" + sx, eb);
            ctx.claim(two_sided("E_g[" + obs[q].name() + " o T_x] - E_g(.-x)[" + obs[q].name() + "], x=" + sx,
                                ea.mean - eb.mean, std::hypot(ea.se, eb.se), {4.0, 6.0}));
        }
    }
}

//--- lattice-converge ----------------------------------------------------//

std::vector<double> doubles_or(const json& j, const char* key, std::vector<double> fallback)
{
    return j.contains(key) ? j.at(key).get<std::vector<double>>() : fallback;
}

double max_increase(const std::vector<double>& errs)
{
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < errs.size(); ++i) worst = std::max(worst, errs[i + 1] - errs[i]);
    return worst;
}

void run_lattice_converge(Context& ctx)
{
    const auto& model = ctx.variant->model;
    json c = ctx.root().value("corpus", json::object());
    int count = 10, lo = 1, hi = 8;
    double extend = 1.0;
    ChargeLaw law = model.charge_law;
    std::vector<double> spacings, margins, radii;
    guarded(ctx.src(), json{{"corpus", c}}, {}, "corpus", [&](const json& j) {
        count = j.value("count", count);
        if (j.contains("particles")) {
            auto p = j.at("particles").get<std::vector<int>>();
            if (p.size() != 2 || p[0] < 0 || p[1] < p[0]) throw std::invalid_argument("'particles' must be [min, max]");
            lo = p[0];
            hi = p[1];
        }
        extend = number_or(j, "extend", extend);
        if (j.contains("charge_law")) law = parse_charge_law(j.at("charge_law"));
        spacings = doubles_or(j, "spacings", {1.0, 0.5, 0.25});
        double R = model.kernel.range();
        margins = doubles_or(j, "window_margins", {0.0, 0.5 * R, R});
        radii = doubles_or(j, "truncation_radii", {0.6 * R, 0.8 * R, R});
        if (count < 1 || spacings.empty() || margins.empty() || radii.empty())
            throw std::invalid_argument("corpus needs configurations, spacings, margins and radii");
        return 0;
    });

    auto grid = ctx.grid(model);
    Box box = model.window().dilated(extend);
    Rng rng = make_rng(ctx.sub_seed("corpus"));
    std::vector<Configuration> corpus;
    for (int i = 0; i < count; ++i) {
        Configuration cfg(box);
        int n = lo + static_cast<int>(uniform01(rng) * (hi - lo + 1));
        for (int k = 0; k < n; ++k) {
            Point y = box.sample(rng);
            cfg.insert(y, law.sample(rng));
        }
        corpus.push_back(std::move(cfg));
    }

    double fine = spacings.back();
    auto lattice_U = [&](const Configuration& cfg, const LatticeWindow& w) {
        return lattice_energy(discretize(cfg, w), model, grid);
    };
    std::vector<ModelSpec> truncated;
    for (double R : radii) {
        ModelSpec m = model;
        m.kernel = truncate_kernel(model.kernel, R).kernel;
        truncated.push_back(m);
    }

    double worst_lambda = -std::numeric_limits<double>::infinity(), worst_window = worst_lambda,
           worst_range = worst_lambda, saturated = 0.0;
    std::vector<std::vector<double>> lambda_errs;
    std::ostringstream csv;
    csv << std::setprecision(17) << "configuration,column,parameter,error\n";
    json table = json::array();
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const auto& cfg = corpus[i];
        double U = energy(cfg, model, grid);
        std::vector<double> el, ew, er;
        for (double lam : spacings) el.push_back(std::abs(lattice_U(cfg, LatticeWindow::covering(model.dim, lam, box)) - U));
        double U_fine = lattice_U(cfg, LatticeWindow::covering(model.dim, fine, box));
        for (double m : margins) {
            auto w = LatticeWindow::covering(model.dim, fine, model.cutoff.support().dilated(m));
            ew.push_back(std::abs(lattice_U(cfg, w) - U_fine));
            if (m >= model.kernel.range()) saturated = std::max(saturated, ew.back());
        }
        for (const auto& m : truncated) er.push_back(std::abs(energy(cfg, m, grid) - U));
        worst_lambda = std::max(worst_lambda, max_increase(el));
        worst_window = std::max(worst_window, max_increase(ew));
        worst_range = std::max(worst_range, max_increase(er));
        lambda_errs.push_back(el);
        for (std::size_t k = 0; k < el.size(); ++k) csv << i << ",lambda," << spacings[k] << ',' << el[k] << '\n';
        for (std::size_t k = 0; k < ew.size(); ++k) csv << i << ",window," << margins[k] << ',' << ew[k] << '\n';
        for (std::size_t k = 0; k < er.size(); ++k) csv << i << ",range," << radii[k] << ',' << er[k] << '\n';
        table.push_back({{"configuration", i}, {"particles", cfg.size()}, {"energy", U},
                         {"lambda_errors", el}, {"window_errors", ew}, {"range_errors", er}});
    }
    // Signed discretization errors cancel by accident for single
    // configurations, so the lambda column is judged on the corpus RMS.
    std::vector<double> rms(spacings.size(), 0.0);
    int nonmonotone = 0;
    for (const auto& el : lambda_errs) {
        for (std::size_t k = 0; k < el.size(); ++k) rms[k] += el[k] * el[k] / static_cast<double>(lambda_errs.size());
        nonmonotone += max_increase(el) > 1e-12;
    }
    for (auto& r : rms) r = std::sqrt(r);
    const std::string slack = "absolute 1e-12";
    Check lc = at_most("corpus RMS lambda-halving error nonincreasing (max increase)", max_increase(rms), 1e-12, slack);
    lc.note = std::to_string(nonmonotone) + " of " + std::to_string(lambda_errs.size()) +
              " configurations are not monotone individually (largest increase " + fmt(worst_lambda) + ")";
    ctx.claim(lc);
    ctx.claim(at_most("window-growth errors nonincreasing (max increase)", worst_window, 1e-12, slack));
    ctx.claim(at_most("range-growth errors nonincreasing (max increase)", worst_range, 1e-12, slack));
    ctx.claim(at_most("window error once the window holds supp g + supp G", saturated, 0.0, "exact"));

    // empirical order: median error ratio per halving over the corpus, and a single centred particle
    json order = json::array();
    for (std::size_t k = 0; k + 1 < spacings.size(); ++k) {
        std::vector<double> ratios;
        for (const auto& el : lambda_errs)
            if (el[k + 1] > 0.0) ratios.push_back(el[k] / el[k + 1]);
        std::sort(ratios.begin(), ratios.end());
        double median = ratios.empty() ? std::numeric_limits<double>::infinity() : ratios[ratios.size() / 2];
        order.push_back({{"from", spacings[k]}, {"to", spacings[k + 1]}, {"median_ratio", median}});
    }
    double min_ratio = std::numeric_limits<double>::infinity();
    for (const auto& o : order) min_ratio = std::min(min_ratio, o.at("median_ratio").get<double>());
    ctx.claim(at_most("median lambda-halving error ratio >= 1.5 (stat: -ratio)", -min_ratio, -1.5, "exact"));
    Configuration single(box);
    single.insert(model.cutoff.center(), 1.0);
    double U1 = energy(single, model, grid);
    std::vector<double> e1;
    for (double lam : spacings) e1.push_back(std::abs(lattice_U(single, LatticeWindow::covering(model.dim, lam, box)) - U1));
    ctx.result.tables[ctx.prefix() + "lattice_converge"] = {
        {"configurations", table}, {"halving_order", order}, {"lambda_rms", rms},
        {"lambda_nonmonotone_configurations", nonmonotone}, {"single_particle_lambda_errors", e1},
        {"spacings", spacings}, {"window_margins", margins}, {"truncation_radii", radii}};
    std::string name = ctx.cfg.variants.size() > 1 ? "lattice_converge_" + ctx.variant->name + ".csv"
                                                   : "lattice_converge.csv";
    ctx.result.files[name] = csv.str();
}

//--- free-oracle-check ---------------------------------------------------//

void run_free_oracle_check(Context& ctx)
{
    const auto& model = ctx.variant->model;
    int dim = model.dim;
    std::vector<std::pair<TestFunction, TestFunction>> pairs;
    if (ctx.root().contains("laplace_pairs")) {
        pairs = guarded(ctx.src(), ctx.root(), {}, "laplace_pairs", [&](const json& x) {
            std::vector<std::pair<TestFunction, TestFunction>> out;
            for (const auto& p : x) {
                TestFunction h = p.contains("h") ? parse_test_function(p.at("h"), dim) : TestFunction(dim);
                TestFunction f = p.contains("f") ? parse_test_function(p.at("f"), dim) : TestFunction(dim);
                if (!h.sign_certificate()) throw std::invalid_argument("h must be nonnegative");
                out.emplace_back(h, f);
            }
            return out;
        });
    }
    std::vector<std::pair<std::string, ChargeLaw>> laws;
    if (ctx.root().contains("charge_laws")) {
        laws = guarded(ctx.src(), ctx.root(), {}, "charge_laws", [&](const json& x) {
            std::vector<std::pair<std::string, ChargeLaw>> out;
            for (const auto& l : x) out.emplace_back(l.is_string() ? l.get<std::string>() : l.dump(), parse_charge_law(l));
            return out;
        });
    } else {
        laws.emplace_back("model", model.charge_law);
    }
    std::size_t draws = ctx.root().value("samples", std::size_t{100000});

    Box window{dim, {}, {}};
    bool first = true;
    auto grow = [&](const TestFunction& h) {
        if (h.is_zero()) return;
        window = first ? h.support() : window.united(h.support());
        first = false;
    };
    for (const auto& [h, f] : pairs) {
        grow(h);
        grow(f);
    }
    for (const auto& f : ctx.cfg.char_functions) grow(f);
    if (first) window = Box::cube(dim, Point{}, 1.0);

    for (std::size_t l = 0; l < laws.size(); ++l) {
        ModelSpec m = model;
        m.charge_law = laws[l].second;
        Rng rng = make_rng(ctx.sub_seed("law" + std::to_string(l)));
        std::vector<std::vector<double>> lap(pairs.size(), std::vector<double>(draws));
        std::vector<std::vector<double>> re(ctx.cfg.char_functions.size(), std::vector<double>(draws)), im = re;
        for (std::size_t i = 0; i < draws; ++i) {
            Configuration cfg = sample_free(m, window, rng);
            for (std::size_t p = 0; p < pairs.size(); ++p)
                lap[p][i] = std::exp(abs_pairing(cfg, pairs[p].first) + pairing(cfg, pairs[p].second));
            for (std::size_t k = 0; k < ctx.cfg.char_functions.size(); ++k) {
                double t = pairing(cfg, ctx.cfg.char_functions[k]);
                re[k][i] = std::cos(t);
                im[k][i] = std::sin(t);
            }
        }
        std::string ln = "law " + laws[l].first;
        for (std::size_t p = 0; p < pairs.size(); ++p) {
            auto e = estimate_iid(lap[p]);
            double exact = free_laplace_oracle(m, pairs[p].first, pairs[p].second);
            std::string q = "E_0[exp(<|eta|,h" + std::to_string(p) + "> + <eta,f" + std::to_string(p) + ">)] " + ln;
            ctx.estimate(q, e);
            ctx.estimate("oracle " + q, exact, 0.0, 0.0);
            ctx.claim(two_sided(q + " - closed form", e.mean - exact, e.se));
        }
        for (std::size_t k = 0; k < ctx.cfg.char_functions.size(); ++k) {
            auto er = estimate_iid(re[k]);
            auto ei = estimate_iid(im[k]);
            auto exact = free_char_oracle(m, ctx.cfg.char_functions[k]);
            std::string q = "C_0(f" + std::to_string(k) + ") " + ln;
            ctx.estimate("Re " + q, er);
            ctx.estimate("Im " + q, ei);
            ctx.claim(two_sided("Re " + q + " - closed form", er.mean - exact.real(), er.se));
            ctx.claim(two_sided("Im " + q + " - closed form", ei.mean - exact.imag(), ei.se));
        }
    }
}

bool statistical(const std::string& kind)
{
    return kind != "fkg-exact" && kind != "criterion-scan" && kind != "lattice-converge";
}

}  // namespace

ExperimentResult run_experiment(ExperimentConfig config, const RunOptions& opt)
{
    if (opt.seed) config.seeds = {*opt.seed};
    ExperimentResult result;
    result.experiment = config.kind;
    Context ctx{config, opt, result};
    std::vector<std::uint64_t> seeds = statistical(config.kind) ? config.seeds
                                                                : std::vector<std::uint64_t>{config.seeds.front()};
    ctx.seed_tag = seeds.size() > 1;
    for (const auto& v : config.variants) {
        ctx.variant = &v;
        for (auto s : seeds) {
            ctx.seed = s;
            try {
                const auto& k = config.kind;
                if (k == "fkg-mc") run_fkg_mc(ctx);
                else if (k == "fkg-exact") run_fkg_exact(ctx);
                else if (k == "criterion-scan") run_criterion_scan(ctx);
                else if (k == "monotone-g") run_monotone_g(ctx);
                else if (k == "domination") run_domination(ctx);
                else if (k == "tdlimit-scan") run_tdlimit_scan(ctx);
                else if (k == "translate-check") run_translate_check(ctx);
                else if (k == "lattice-converge") run_lattice_converge(ctx);
                else if (k == "free-oracle-check") run_free_oracle_check(ctx);
            } catch (const std::length_error& e) {
                throw ConfigError(std::string("enumeration budget exceeded: ") + e.what(),
                                  config.source.line_of({"lattice"}));
            }
        }
    }
    return result;
}

//---------------------------------------------------------------------------//
// Outputs
//---------------------------------------------------------------------------//

json summary_json(const ExperimentResult& r, const ExperimentConfig& config)
{
    json checks = json::array();
    for (const auto& c : r.checks) {
        json j{{"claim", c.claim},   {"group", c.group},         {"statistic", c.statistic},
               {"threshold", c.threshold}, {"se", c.se},         {"tolerance", c.tolerance},
               {"verdict", to_string(c.verdict)}};
        if (c.control) j["negative_control"] = true;
        if (!c.note.empty()) j["note"] = c.note;
        checks.push_back(j);
    }
    json estimates = json::array();
    for (const auto& e : r.estimates)
        estimates.push_back({{"quantity", e.quantity}, {"mean", e.mean}, {"se", e.se}, {"n_eff", e.n_eff}});
    return {{"experiment", r.experiment},
            {"version", kVersion},
            {"config_hash", config_hash(config.root())},
            {"seeds", config.seeds},
            {"verdict", to_string(r.overall())},
            {"exit_code", r.exit_code()},
            {"thresholds", {{"pass_se", 4.0}, {"fail_se", 6.0}, {"oracle_agreement_se", 3.0}}},
            {"checks", checks},
            {"estimates", estimates},
            {"tables", r.tables},
            {"diagnostics", r.diagnostics}};
}

void write_outputs(const ExperimentResult& r, const ExperimentConfig& config, const RunOptions& opt,
                   double wall_seconds)
{
    namespace fs = std::filesystem;
    fs::path dir = opt.out_dir;
    fs::create_directories(dir);
    auto write = [&](const std::string& name, const std::string& text) {
        std::ofstream out(dir / name, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
        out << text;
    };
    write("summary.json", summary_json(r, config).dump(2) + "\n");
    write("config.json", config.root().dump(2) + "\n");

    json verdicts = json::object();
    for (const auto& c : r.checks) verdicts[c.claim] = to_string(c.verdict);
    json record{{"config_hash", config_hash(config.root())},
                {"version", kVersion},
                {"seeds", config.seeds},
                {"workers", opt.workers},
                {"verdict", to_string(r.overall())},
                {"verdicts", verdicts},
                {"wall_seconds", wall_seconds}};
    write("run_record.json", record.dump(2) + "\n");

    std::ostringstream csv;
    csv << std::setprecision(17) << "experiment,quantity,mean,se,n_eff\n";
    for (const auto& e : r.estimates) {
        std::string q = e.quantity;
        if (q.find_first_of(",\"") != std::string::npos) {
            std::string quoted = "\"";
            for (char ch : q) quoted += ch == '"' ? std::string("\"\"") : std::string(1, ch);
            q = quoted + "\"";
        }
        csv << r.experiment << ',' << q << ',' << e.mean << ',' << e.se << ',' << e.n_eff << '\n';
    }
    write("estimates.csv", csv.str());
    for (const auto& [name, text] : r.files) write(name, text);
    if (opt.samples) {
        std::ostringstream s;
        for (const auto& rec : r.samples) s << rec.dump() << '\n';
        write("samples.jsonl", s.str());
    }
}

}  // namespace weakgas
