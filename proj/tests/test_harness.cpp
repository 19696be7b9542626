#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <cmath>

#include "weakgas/harness.hpp"

using namespace weakgas;

namespace {

const json kModel = json::parse(R"({
  "dimension": 1,
  "kernel": {"kind": "tent", "params": {"radius": 1.0}},
  "charge_law": "rademacher",
  "energy": {"kind": "logcosh_gauged"},
  "activity": 1.0,
  "beta": 1.0,
  "cutoff": {"plateau_radius": 2.0, "ramp_width": 0.5}
})");

json plateau(double center, double radius, double ramp = 0.25)
{
    return {{"kind", "plateau_ramp"}, {"center", center}, {"radius", radius}, {"ramp", ramp}};
}

json linear_obs(const std::string& name, json h, const std::string& mode = "signed")
{
    h["mode"] = mode;
    return {{"name", name}, {"outer", "linear"}, {"test_functions", json::array({h})}};
}

ExperimentResult run(const json& config, int workers = 1)
{
    RunOptions opt;
    opt.workers = workers;
    return run_experiment(parse_experiment(JsonSource::from_json(config)), opt);
}

const EstimateRow& find(const ExperimentResult& r, const std::string& quantity)
{
    for (const auto& e : r.estimates)
        if (e.quantity == quantity) return e;
    FAIL("no estimate named " << quantity);
    return r.estimates.front();
}

int error_line(const std::string& text)
{
    try {
        parse_experiment(JsonSource(text, "test.json"));
    } catch (const ConfigError& e) {
        return e.line();
    }
    return -1;
}

}  // namespace

TEST_CASE("verdict bands")
{
    CHECK(one_sided("c", 0.0, 1.0).verdict == Verdict::pass);
    CHECK(one_sided("c", -4.0, 1.0).verdict == Verdict::pass);
    CHECK(one_sided("c", -4.01, 1.0).verdict == Verdict::inconclusive);
    CHECK(one_sided("c", -6.0, 1.0).verdict == Verdict::inconclusive);
    CHECK(one_sided("c", -6.01, 1.0).verdict == Verdict::fail);
    CHECK(one_sided("c", 100.0, 0.0).verdict == Verdict::pass);
    CHECK(one_sided("c", -1e-300, 0.0).verdict == Verdict::fail);

    CHECK(two_sided("c", 3.0, 1.0).verdict == Verdict::pass);
    CHECK(two_sided("c", -3.5, 1.0).verdict == Verdict::inconclusive);
    CHECK(two_sided("c", 6.5, 1.0).verdict == Verdict::fail);
    CHECK(two_sided("c", 3.9, 1.0, {4.0, 6.0}).verdict == Verdict::pass);
    CHECK(two_sided("c", -3.9, 1.0).statistic == -3.9);

    CHECK(at_most("c", 1.0, 1.0, "").verdict == Verdict::pass);
    CHECK(at_most("c", 1.0 + 1e-15, 1.0, "").verdict == Verdict::fail);

    Check c = one_sided("c", -1.0, 0.5);
    CHECK(c.threshold == 0.0);
    CHECK(c.se == 0.5);
    CHECK_FALSE(c.tolerance.empty());
}

TEST_CASE("exit codes")
{
    auto check = [](Verdict v, bool control = false, std::string group = "base") {
        Check c;
        c.verdict = v;
        c.control = control;
        c.group = std::move(group);
        return c;
    };
    ExperimentResult r;
    CHECK(r.exit_code() == 0);
    r.checks = {check(Verdict::pass), check(Verdict::pass)};
    CHECK(r.exit_code() == 0);
    r.checks.push_back(check(Verdict::inconclusive));
    CHECK(r.exit_code() == 2);
    CHECK(r.overall() == Verdict::inconclusive);
    r.checks.push_back(check(Verdict::fail));
    CHECK(r.exit_code() == 1);

    // a control group must contain at least one failing claim
    r.checks = {check(Verdict::pass), check(Verdict::pass, true, "convex"), check(Verdict::fail, true, "convex")};
    CHECK(r.exit_code() == 0);
    r.checks = {check(Verdict::pass), check(Verdict::pass, true, "convex")};
    CHECK(r.exit_code() == 1);
    // inconclusive control claims do not count as failures
    r.checks = {check(Verdict::pass), check(Verdict::inconclusive, true, "convex")};
    CHECK(r.exit_code() == 1);
    // two control groups, one of which passes everything
    r.checks = {check(Verdict::fail, true, "a"), check(Verdict::pass, true, "b")};
    CHECK(r.exit_code() == 1);
}

TEST_CASE("seeds and hashes")
{
    CHECK(derive_seed(1, "chain") == derive_seed(1, "chain"));
    CHECK(derive_seed(1, "chain") != derive_seed(2, "chain"));
    CHECK(derive_seed(1, "chain") != derive_seed(1, "chain2"));
    json a = json::parse(R"({"b": 1, "a": [1, 2]})"), b = json::parse(R"({"a": [1, 2], "b": 1})");
    CHECK(config_hash(a) == config_hash(b));
    CHECK(config_hash(a).size() == 16);
    CHECK(config_hash(a) != config_hash(json::parse(R"({"a": [2, 1], "b": 1})")));
}

TEST_CASE("config errors point at the offending line")
{
    std::string model = kModel.dump(2);
    // replace one model line and find where the error lands
    auto with_model = [&](const std::string& m, const std::string& rest) {
        return "{\n\"experiment\": \"fkg-mc\",\n\"model\": " + m + ",\n" + rest + "\n}";
    };
    std::string obs = R"("observables": [
 {"name": "a", "outer": "linear", "test_functions": [{"kind": "plateau_ramp", "center": 0.0, "radius": 0.5}]},
 {"name": "b", "outer": "linear", "test_functions": [{"kind": "plateau_ramp", "center": 1.0, "radius": 0.5}]}
])";

    SUBCASE("negative activity")
    {
        std::string m = model;
        m.replace(m.find("\"activity\": 1.0"), 15, "\"activity\": -1.0");
        std::string text = with_model(m, obs);
        int expected = 1;
        for (std::size_t i = 0; i < text.find("\"activity\""); ++i) expected += text[i] == '\n';
        CHECK(error_line(text) == expected);
    }
    SUBCASE("sampler key")
    {
        std::string text = with_model(model, obs + ",\n\"sampler\": {\n  \"sweeps\": 0\n}");
        int expected = 1;
        for (std::size_t i = 0; i < text.find("\"sweeps\""); ++i) expected += text[i] == '\n';
        CHECK(error_line(text) == expected);
    }
    SUBCASE("unknown experiment")
    {
        std::string text = "{\n\n  \"experiment\": \"nope\",\n  \"model\": " + model + "\n}";
        CHECK(error_line(text) == 3);
    }
    SUBCASE("malformed JSON")
    {
        CHECK(error_line("{\n  \"experiment\": \"fkg-mc\",\n  \"seed\": ,\n}") == 3);
    }
    SUBCASE("non-monotone observable in an FKG experiment")
    {
        std::string bad = R"("observables": [
 {"name": "a", "outer": "linear", "coeffs": [-1.0], "test_functions": [{"kind": "plateau_ramp", "center": 0.0, "radius": 0.5}]},
 {"name": "b", "outer": "linear", "test_functions": [{"kind": "plateau_ramp", "center": 1.0, "radius": 0.5}]}
])";
        std::string text = with_model(model, bad);
        int expected = 1;
        for (std::size_t i = 0; i < text.find("\"observables\""); ++i) expected += text[i] == '\n';
        CHECK(error_line(text) == expected);
    }
    SUBCASE("cutoff family must increase")
    {
        json c = {{"experiment", "monotone-g"}, {"model", kModel}, {"cutoff_family", {{"plateau_radii", {2, 4, 4}}}},
                  {"observables", {linear_obs("a", plateau(0.0, 0.5))}}};
        CHECK_THROWS_AS(parse_experiment(JsonSource::from_json(c)), ConfigError);
    }
    SUBCASE("variant errors report the variants key")
    {
        std::string text = "{\n\"experiment\": \"criterion-scan\",\n\"model\": " + model +
                           ",\n\"lattice\": {\"spacing\": 0.5},\n\"variants\": [\n {\"name\": \"x\", \"model\": "
                           "{\"activity\": 0}}\n]\n}";
        int expected = 1;
        for (std::size_t i = 0; i < text.find("\"variants\""); ++i) expected += text[i] == '\n';
        CHECK(error_line(text) == expected);
    }
    SUBCASE("the kind on the command line must match the file")
    {
        json c = {{"experiment", "fkg-mc"}, {"model", kModel}};
        CHECK_THROWS_AS(parse_experiment(JsonSource::from_json(c), "domination"), ConfigError);
    }
    SUBCASE("td-limit test functions must sit inside the largest plateau")
    {
        json c = {{"experiment", "tdlimit-scan"},
                  {"model", kModel},
                  {"cutoff_family", {{"plateau_radii", {1, 2}}}},
                  {"char_functions", {plateau(1.9, 0.5)}}};
        CHECK_THROWS_AS(parse_experiment(JsonSource::from_json(c)), ConfigError);
    }
}

TEST_CASE("fkg-mc examples on small runs")
{
    json free_model = kModel;
    free_model["energy"] = {{"kind", "zero"}};
    json c = {{"experiment", "fkg-mc"},
              {"seed", 3},
              {"model", free_model},
              {"sampler", {{"sweeps", 200000}, {"replicas", 2}}},
              {"observables",
               {linear_obs("pos_left", plateau(-1.0, 0.5), "positive"),
                linear_obs("pos_right", plateau(1.0, 0.5), "positive"),
                linear_obs("pos_left_again", plateau(-1.0, 0.5), "positive")}}};
    auto r = run(c);
    CHECK(r.exit_code() == 0);
    // free gas: disjoint regions are independent
    const auto& disjoint = find(r, "Cov(pos_left,pos_right)");
    CHECK(std::abs(disjoint.mean) <= 4.0 * disjoint.se);
    // identical observables: a variance
    const auto& same = find(r, "Cov(pos_left,pos_left_again)");
    CHECK(same.mean > 0.0);
    REQUIRE(r.diagnostics.contains("chain"));
    CHECK(r.diagnostics["chain"]["acceptance"]["birth"].get<double>() > 0.0);
}

TEST_CASE("fkg-exact and criterion-scan examples")
{
    SUBCASE("single site always passes")
    {
        json c = {{"experiment", "fkg-exact"},
                  {"model", kModel},
                  {"lattice", {{"spacing", 1.0}, {"first", {0}}, {"count", {1}}, {"n_max", 5}}},
                  {"observables",
                   {linear_obs("eta", plateau(0.5, 0.5, 0.0)),
                    {{"name", "exp"}, {"outer", "exp_product"}, {"kappa", 0.5}, {"test_functions", {plateau(0.5, 0.5, 0.0)}}}}}};
        auto r = run(c);
        CHECK(r.exit_code() == 0);
        CHECK(find(r, "Cov(eta,exp)").mean > 0.0);
    }
    SUBCASE("linear density has vanishing mixed partials")
    {
        json m = kModel;
        m["energy"] = {{"kind", "linear"}, {"params", {{"b", 0.7}}}};
        json c = {{"experiment", "criterion-scan"},
                  {"model", m},
                  {"lattice", {{"spacing", 0.5}, {"covering", true}, {"states", 10}}}};
        auto r = run(c);
        CHECK(r.exit_code() == 0);
        bool saw_max = false;
        for (const auto& ch : r.checks)
            if (ch.claim.find("max mixed partial") != std::string::npos) {
                saw_max = true;
                CHECK(std::abs(ch.statistic) <= 1e-14);
            }
        CHECK(saw_max);
        CHECK(r.files.size() == 1);
    }
}

TEST_CASE("monotone-g on the free gas: expectations do not depend on the cutoff")
{
    json free_model = kModel;
    free_model["energy"] = {{"kind", "zero"}};
    json c = {{"experiment", "monotone-g"},
              {"seed", 5},
              {"model", free_model},
              {"sampler", {{"sweeps", 100000}, {"replicas", 2}}},
              {"cutoff_family", {{"plateau_radii", {2, 3, 4}}}},
              {"observables", {linear_obs("pos", plateau(0.0, 0.5), "positive")}}};
    auto r = run(c);
    CHECK(r.exit_code() != 1);
    for (const auto& ch : r.checks) CHECK(std::abs(ch.statistic) <= 4.0 * ch.se);
}

TEST_CASE("translate-check with zero shift")
{
    json c = {{"experiment", "translate-check"},
              {"seed", 6},
              {"model", kModel},
              {"sampler", {{"sweeps", 100000}, {"replicas", 2}}},
              {"shifts", {0.0}},
              {"observables", {linear_obs("mid", plateau(0.0, 0.5))}}};
    auto r = run(c);
    REQUIRE(r.checks.size() == 1);
    CHECK(r.checks[0].verdict == Verdict::pass);
    CHECK(std::abs(r.checks[0].statistic) <= 4.0 * r.checks[0].se);
}

TEST_CASE("determinism: identical runs and worker counts give byte-identical summaries")
{
    json c = {{"experiment", "fkg-mc"},
              {"seeds", {1, 2}},
              {"model", kModel},
              {"sampler", {{"sweeps", 30000}, {"replicas", 3}}},
              {"observables", {linear_obs("a", plateau(-0.5, 0.5)), linear_obs("b", plateau(0.5, 0.5))}}};
    auto cfg = parse_experiment(JsonSource::from_json(c));
    RunOptions one, many;
    many.workers = 3;
    std::string s1 = summary_json(run_experiment(cfg, one), cfg).dump(2);
    std::string s2 = summary_json(run_experiment(cfg, one), cfg).dump(2);
    std::string s3 = summary_json(run_experiment(cfg, many), cfg).dump(2);
    CHECK(s1 == s2);
    CHECK(s1 == s3);

    // a different seed changes the estimates
    RunOptions other;
    other.seed = 9;
    CHECK(summary_json(run_experiment(cfg, other), cfg).dump() != json::parse(s1).dump());
}

TEST_CASE("outputs on disk")
{
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "weakgas_test_outputs";
    fs::remove_all(dir);
    json c = {{"experiment", "translate-check"},
              {"seed", 2},
              {"model", kModel},
              {"sampler", {{"sweeps", 20000}, {"replicas", 1}}},
              {"shifts", {0.5}},
              {"observables", {linear_obs("mid", plateau(0.0, 0.5))}}};
    auto cfg = parse_experiment(JsonSource::from_json(c));
    RunOptions opt;
    opt.out_dir = dir.string();
    opt.samples = true;
    auto r = run_experiment(cfg, opt);
    write_outputs(r, cfg, opt, 1.25);
    for (const char* f : {"summary.json", "config.json", "run_record.json", "estimates.csv", "samples.jsonl"})
        CHECK(fs::exists(dir / f));

    std::ifstream csv(dir / "estimates.csv");
    std::string header;
    std::getline(csv, header);
    CHECK(header == "experiment,quantity,mean,se,n_eff");

    std::ifstream sj(dir / "summary.json");
    json summary = json::parse(sj);
    CHECK(summary.at("experiment") == "translate-check");
    CHECK(summary.at("config_hash") == config_hash(c));
    CHECK(summary.at("version") == kVersion);
    CHECK_FALSE(summary.contains("wall_seconds"));
    for (const auto& ch : summary.at("checks")) {
        CHECK(ch.contains("statistic"));
        CHECK(ch.contains("threshold"));
        CHECK(ch.contains("tolerance"));
    }
    std::ifstream rr(dir / "run_record.json");
    CHECK(json::parse(rr).at("wall_seconds") == 1.25);

    std::ifstream samples(dir / "samples.jsonl");
    std::string line;
    REQUIRE(std::getline(samples, line));
    json rec = json::parse(line);
    for (const char* k : {"step", "n_particles", "energy"}) CHECK(rec.contains(k));
    fs::remove_all(dir);
}
