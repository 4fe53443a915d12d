#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "agediff/grid.hpp"
#include "agediff/io.hpp"
#include "agediff/model.hpp"

namespace agediff {

using json = nlohmann::json;

class ConfigError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace config_detail {

inline void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                                const std::string& section) {
    if (!obj.is_object()) throw ConfigError("config: '" + section + "' must be an object");
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError("config: unknown key '" + it.key() + "' in section '" +
                              section + "'");
}

template <typename T>
T require(const json& obj, const std::string& key, const std::string& section) {
    if (!obj.contains(key))
        throw ConfigError("config: missing key '" + key + "' in section '" + section + "'");
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("config: bad value for '" + section + "." + key + "': " +
                          e.what());
    }
}

template <typename T>
T optional(const json& obj, const std::string& key, const std::string& section, T def) {
    if (!obj.contains(key)) return def;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("config: bad value for '" + section + "." + key + "': " +
                          e.what());
    }
}

}  // namespace config_detail

// One declarative file per run. Sections: model (rate expressions and the
// age/z ranges), grid, run (subcommand-specific), output.
struct RunConfig {
    // model
    std::string diffusion, death, birth, weight;
    double a_max = 1.0;
    double z_lo = 0.0, z_hi = 10.0;
    NormQ norm_q = NormQ::two;
    bool fold_death_into_A = true;
    bool fold_given = false;

    // grid
    int n_age = 100, n_space = 16;
    double x_min = 0.0, x_max = 1.0;

    // run: kept verbatim, validated per subcommand
    json run = json::object();

    // output
    std::string directory = "out";
    int snapshot_stride = 0;

    json resolved;  // full effective configuration, written to meta.json

    Grid make_grid() const { return Grid(a_max, n_age, n_space, x_min, x_max); }

    ModelSpec make_spec() const {
        ModelSpec s;
        try {
            s = ModelSpec::from_strings(diffusion, death, birth, weight, norm_q);
        } catch (const ExprError& e) {
            throw ConfigError(std::string("config: rate expression error: ") + e.what());
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("config: ") + e.what());
        }
        s.fold_death_into_A = fold_given ? fold_death_into_A
                                         : s.death_is_z_independent() || fold_death_into_A;
        return s;
    }
};

inline RunConfig parse_config(const json& root) {
    using namespace config_detail;
    reject_unknown_keys(root, {"model", "grid", "run", "output"}, "<top>");
    if (!root.contains("model") || !root.contains("grid"))
        throw ConfigError("config: sections 'model' and 'grid' are required");

    RunConfig c;
    const json& m = root.at("model");
    reject_unknown_keys(m,
                        {"diffusion", "death", "birth", "weight", "a_max", "z_range",
                         "norm_q", "fold_death_into_A"},
                        "model");
    c.diffusion = require<std::string>(m, "diffusion", "model");
    c.death = require<std::string>(m, "death", "model");
    c.birth = require<std::string>(m, "birth", "model");
    c.weight = optional<std::string>(m, "weight", "model", "1");
    c.a_max = require<double>(m, "a_max", "model");
    if (m.contains("z_range")) {
        auto zr = require<std::vector<double>>(m, "z_range", "model");
        if (zr.size() != 2) throw ConfigError("config: model.z_range must be [lo, hi]");
        c.z_lo = zr[0];
        c.z_hi = zr[1];
    }
    if (m.contains("norm_q")) {
        const json& nq = m.at("norm_q");
        std::string s = nq.is_string() ? nq.get<std::string>()
                                       : std::to_string(nq.get<int>());
        try {
            c.norm_q = norm_q_from_string(s);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("config: ") + e.what());
        }
    }
    if (m.contains("fold_death_into_A")) {
        c.fold_death_into_A = require<bool>(m, "fold_death_into_A", "model");
        c.fold_given = true;
    }

    const json& g = root.at("grid");
    reject_unknown_keys(g, {"n_age", "n_space", "x_min", "x_max"}, "grid");
    c.n_age = require<int>(g, "n_age", "grid");
    c.n_space = require<int>(g, "n_space", "grid");
    c.x_min = optional<double>(g, "x_min", "grid", 0.0);
    c.x_max = optional<double>(g, "x_max", "grid", 1.0);

    if (root.contains("run")) {
        c.run = root.at("run");
        if (!c.run.is_object()) throw ConfigError("config: 'run' must be an object");
    }

    if (root.contains("output")) {
        const json& o = root.at("output");
        reject_unknown_keys(o, {"directory", "snapshot_stride"}, "output");
        c.directory = optional<std::string>(o, "directory", "output", std::string("out"));
        c.snapshot_stride = optional<int>(o, "snapshot_stride", "output", 0);
    }

    try {
        c.make_grid();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }

    c.resolved = json{
        {"model",
         {{"diffusion", c.diffusion},
          {"death", c.death},
          {"birth", c.birth},
          {"weight", c.weight},
          {"a_max", c.a_max},
          {"z_range", {c.z_lo, c.z_hi}},
          {"norm_q", c.norm_q == NormQ::one ? "1" : (c.norm_q == NormQ::two ? "2" : "inf")},
          {"fold_death_into_A", c.make_spec().fold_death_into_A}}},
        {"grid",
         {{"n_age", c.n_age},
          {"n_space", c.n_space},
          {"x_min", c.x_min},
          {"x_max", c.x_max}}},
        {"run", c.run},
        {"output", {{"directory", c.directory}, {"snapshot_stride", c.snapshot_stride}}}};
    return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    json root;
    try {
        root = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw ConfigError("config: parse failure in " + path.string() + ": " + e.what());
    }
    return parse_config(root);
}

// Validation of the subcommand-specific run section.
inline void check_run_keys(const json& run, const std::set<std::string>& allowed) {
    config_detail::reject_unknown_keys(run, allowed, "run");
}

template <typename T>
T run_value(const json& run, const std::string& key, T def) {
    return config_detail::optional<T>(run, key, "run", def);
}

template <typename T>
T run_require(const json& run, const std::string& key) {
    return config_detail::require<T>(run, key, "run");
}

}  // namespace agediff
