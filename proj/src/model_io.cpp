#include "weakgas/model_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace weakgas {

ConfigError::ConfigError(const std::string& message, int line)
    : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + message : message), line_(line)
{
}

JsonSource::JsonSource(std::string text, std::string origin) : text_(std::move(text)), origin_(std::move(origin))
{
    try {
        root_ = json::parse(text_);
    } catch (const json::parse_error& e) {
        // byte offset -> line
        std::size_t upto = std::min<std::size_t>(e.byte, text_.size());
        int line = 1 + static_cast<int>(std::count(text_.begin(), text_.begin() + upto, '\n'));
        throw ConfigError(origin_ + ": malformed JSON: " + e.what(), line);
    }
}

JsonSource JsonSource::from_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path + "'", 0);
    std::ostringstream ss;
    ss << in.rdbuf();
    return JsonSource(ss.str(), path);
}

JsonSource JsonSource::from_json(const json& value)
{
    return JsonSource(value.dump(2), "<inline>");
}

int JsonSource::line_of(const std::vector<std::string>& path) const
{
    std::size_t pos = 0;
    bool found = false;
    for (const auto& key : path) {
        if (!key.empty() && std::all_of(key.begin(), key.end(), ::isdigit)) continue;
        std::string token = "\"" + key + "\"";
        std::size_t at = pos;
        while (true) {
            at = text_.find(token, at);
            if (at == std::string::npos) break;
            std::size_t after = text_.find_first_not_of(" \t\r\n", at + token.size());
            if (after != std::string::npos && text_[after] == ':') break;
            at += token.size();
        }
        if (at == std::string::npos) break;
        pos = at;
        found = true;
    }
    if (!found) return 0;
    return 1 + static_cast<int>(std::count(text_.begin(), text_.begin() + pos, '\n'));
}

void JsonSource::fail(const std::vector<std::string>& path, const std::string& message) const
{
    std::string where;
    for (const auto& k : path) where += (where.empty() ? "" : ".") + k;
    throw ConfigError(origin_ + ": " + (where.empty() ? "" : where + ": ") + message, line_of(path));
}

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

}  // namespace

Kernel parse_kernel(const json& j, int dim)
{
    KernelKind kind = kernel_kind_from_string(j.at("kind").get<std::string>());
    json params = j.value("params", json::object());
    double range = number_or(j, "range", 0.0);
    Kernel k;
    switch (kind) {
        case KernelKind::gaussian: k = Kernel::gaussian(dim, number(params, "sigma"), range); break;
        case KernelKind::tent: k = Kernel::tent(dim, number(params, "radius"), number_or(params, "height", 1.0)); break;
        case KernelKind::smoothed_ball:
            k = Kernel::smoothed_ball(dim, number(params, "radius"), number(params, "ramp"),
                                      number_or(params, "height", 1.0));
            break;
    }
    if (kind != KernelKind::gaussian && range > 0.0) k = truncate_kernel(k, range).kernel;
    return k;
}

EnergyDensity parse_energy(const json& j)
{
    std::string kind = j.at("kind").get<std::string>();
    json params = j.value("params", json::object());
    double strength = number_or(params, "strength", 1.0);
    if (kind == "zero") return EnergyDensity::zero();
    if (kind == "linear") return EnergyDensity::linear(number(params, "b"));
    if (kind == "logcosh") return EnergyDensity::logcosh(strength);
    if (kind == "logcosh_gauged") return EnergyDensity::logcosh_gauged(strength);
    if (kind == "sqrt_saturating") return EnergyDensity::sqrt_saturating(strength);
    if (kind == "sqrt_saturating_gauged") return EnergyDensity::sqrt_saturating_gauged(strength);
    if (kind == "tabulated" || kind == "custom-tabulated-concave") {
        return EnergyDensity::tabulated(number(params, "phi_min"), number(params, "step"),
                                        params.at("values").get<std::vector<double>>(),
                                        params.value("require_concave", true));
    }
    throw std::invalid_argument("unknown energy kind '" + kind + "'");
}

ChargeLaw parse_charge_law(const json& j)
{
    if (j.is_string()) {
        std::string name = j.get<std::string>();
        if (name == "unit") return ChargeLaw::unit();
        if (name == "rademacher") return ChargeLaw::rademacher();
        throw std::invalid_argument("unknown charge law '" + name + "'");
    }
    std::vector<ChargeAtom> atoms;
    for (const auto& a : j.at("atoms")) {
        if (!a.is_array() || a.size() != 2) throw std::invalid_argument("each atom must be [charge, weight]");
        atoms.push_back({a[0].get<double>(), a[1].get<double>()});
    }
    return ChargeLaw(std::move(atoms), number_or(j, "bound", 0.0));
}

ModelSpec parse_model(const JsonSource& src, const std::vector<std::string>& path)
{
    const json* node = &src.root();
    for (const auto& key : path) {
        if (!node->contains(key)) src.fail(path, "missing model block");
        node = &node->at(key);
    }
    const json& m = *node;
    auto sub = [&](const std::string& key) {
        auto p = path;
        p.push_back(key);
        return p;
    };
    auto guarded = [&](const std::string& key, auto&& fn) {
        if (!m.contains(key)) src.fail(path.empty() ? std::vector<std::string>{} : path, "missing '" + key + "'");
        try {
            return fn(m.at(key));
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            src.fail(sub(key), e.what());
        }
    };

    ModelSpec spec;
    spec.dim = guarded("dimension", [](const json& v) {
        int d = v.get<int>();
        check_dimension(d);
        return d;
    });
    spec.kernel = guarded("kernel", [&](const json& v) { return parse_kernel(v, spec.dim); });
    spec.charge_law = guarded("charge_law", [](const json& v) { return parse_charge_law(v); });
    spec.energy = guarded("energy", [](const json& v) { return parse_energy(v); });
    spec.activity = guarded("activity", [](const json& v) {
        double z = v.get<double>();
        if (!(z > 0.0) || !std::isfinite(z)) throw std::invalid_argument("activity must be positive");
        return z;
    });
    double beta = guarded("beta", [](const json& v) {
        double b = v.get<double>();
        if (!(b > 0.0)) throw std::invalid_argument("beta must be positive");
        return b;
    });
    spec.cutoff = guarded("cutoff", [&](const json& c) {
        Point center{};
        if (c.contains("center")) center = make_point(c.at("center").get<std::vector<double>>(), spec.dim);
        return CutoffFunction(spec.dim, number(c, "plateau_radius"), number(c, "ramp_width"),
                              number_or(c, "height", beta), beta, center);
    });
    if (m.contains("gauge_shift")) {
        spec = guarded("gauge_shift", [&](const json& v) { return gauge_transform(spec, v.get<double>()); });
    }
    try {
        spec.validate();
    } catch (const std::exception& e) {
        src.fail(path, e.what());
    }
    return spec;
}

ModelSpec load_model(const std::string& file)
{
    return parse_model(JsonSource::from_file(file));
}

}  // namespace weakgas
