#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "weakgas/model.hpp"

namespace weakgas {

using json = nlohmann::json;

/// Configuration problem with the 1-based line of the offending key (0 if unknown).
class ConfigError : public std::runtime_error
{
  public:
    ConfigError(const std::string& message, int line);

    int line() const { return line_; }

  private:
    int line_;
};

/// A parsed JSON document that remembers its source text so that errors can
/// be reported against the line where a key appears.
class JsonSource
{
  public:
    JsonSource() = default;
    JsonSource(std::string text, std::string origin);

    static JsonSource from_file(const std::string& path);
    static JsonSource from_json(const json& value);

    const json& root() const { return root_; }
    const std::string& origin() const { return origin_; }

    //! line of the key at the end of `path`; 0 when it cannot be located
    int line_of(const std::vector<std::string>& path) const;
    [[noreturn]] void fail(const std::vector<std::string>& path, const std::string& message) const;

  private:
    std::string text_;
    std::string origin_;
    json root_;
};

/// Reads a model block (the object at `path` inside `src`).
ModelSpec parse_model(const JsonSource& src, const std::vector<std::string>& path = {});
ModelSpec load_model(const std::string& file);

Kernel parse_kernel(const json& j, int dim);
EnergyDensity parse_energy(const json& j);
ChargeLaw parse_charge_law(const json& j);

}  // namespace weakgas
