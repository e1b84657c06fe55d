#pragma once

#include "ksfv/simulation.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ksfv {

inline constexpr int config_schema_version = 1;

/// Schema violation; the message names the offending key.
class ConfigError : public std::invalid_argument {
public:
    ConfigError(std::string key, const std::string& message)
        : std::invalid_argument("config: " + (key.empty() ? std::string() : "'" + key + "': ") + message),
          key_(std::move(key))
    {
    }

    const std::string& key() const { return key_; }

private:
    std::string key_;
};

namespace detail {

using json = nlohmann::json;

inline std::string join_key(const std::string& prefix, const std::string& key)
{
    return prefix.empty() ? key : prefix + "." + key;
}

inline const char* json_type(const json& j) { return j.type_name(); }

/**
 * Reader over one JSON object: every lookup records the key, finish() rejects
 * whatever was not looked up.
 */
class ObjectReader {
public:
    ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path))
    {
        if (!j_.is_object())
            throw ConfigError(path_, std::string("expected object, got ") + json_type(j_));
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    const json& required(const std::string& key, const char* expected)
    {
        seen_.insert(key);
        if (!j_.contains(key))
            throw ConfigError(join_key(path_, key), std::string("missing required key (expected ") + expected + ")");
        return j_.at(key);
    }

    double number(const std::string& key)
    {
        const json& v = required(key, "number");
        return as_number(v, key);
    }

    double number(const std::string& key, double fallback)
    {
        seen_.insert(key);
        return j_.contains(key) ? as_number(j_.at(key), key) : fallback;
    }

    std::int64_t integer(const std::string& key)
    {
        const json& v = required(key, "integer");
        return as_integer(v, key);
    }

    std::int64_t integer(const std::string& key, std::int64_t fallback)
    {
        seen_.insert(key);
        return j_.contains(key) ? as_integer(j_.at(key), key) : fallback;
    }

    std::uint64_t unsigned_integer(const std::string& key, std::uint64_t fallback)
    {
        seen_.insert(key);
        if (!j_.contains(key))
            return fallback;
        const json& v = j_.at(key);
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
            throw ConfigError(join_key(path_, key), std::string("expected unsigned integer, got ") + json_type(v));
        return v.get<std::uint64_t>();
    }

    std::string string(const std::string& key)
    {
        const json& v = required(key, "string");
        if (!v.is_string())
            throw ConfigError(join_key(path_, key), std::string("expected string, got ") + json_type(v));
        return v.get<std::string>();
    }

    std::string string(const std::string& key, const std::string& fallback)
    {
        seen_.insert(key);
        return j_.contains(key) ? string(key) : fallback;
    }

    std::vector<double> numbers(const std::string& key)
    {
        seen_.insert(key);
        if (!j_.contains(key))
            return {};
        const json& v = j_.at(key);
        if (!v.is_array())
            throw ConfigError(join_key(path_, key), std::string("expected array of numbers, got ") + json_type(v));
        std::vector<double> out;
        for (std::size_t k = 0; k < v.size(); ++k)
            out.push_back(as_number(v[k], key + "[" + std::to_string(k) + "]"));
        return out;
    }

    ObjectReader object(const std::string& key)
    {
        const json& v = required(key, "object");
        return ObjectReader(v, join_key(path_, key));
    }

    void finish() const
    {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key()))
                throw ConfigError(join_key(path_, it.key()), "unknown key");
        }
    }

    const std::string& path() const { return path_; }

private:
    double as_number(const json& v, const std::string& key) const
    {
        if (!v.is_number())
            throw ConfigError(join_key(path_, key), std::string("expected number, got ") + json_type(v));
        const double x = v.get<double>();
        if (!std::isfinite(x))
            throw ConfigError(join_key(path_, key), "expected finite number");
        return x;
    }

    std::int64_t as_integer(const json& v, const std::string& key) const
    {
        if (!v.is_number_integer())
            throw ConfigError(join_key(path_, key), std::string("expected integer, got ") + json_type(v));
        return v.get<std::int64_t>();
    }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

inline SensitivityKind parse_sensitivity_kind(const std::string& s, const std::string& key)
{
    if (s == "linear")
        return SensitivityKind::Linear;
    if (s == "logistic")
        return SensitivityKind::Logistic;
    if (s == "exponential")
        return SensitivityKind::Exponential;
    throw ConfigError(key, "expected one of linear, logistic, exponential; got '" + s + "'");
}

inline CouplingMode parse_coupling_mode(const std::string& s, const std::string& key)
{
    if (s == "prescribed")
        return CouplingMode::Prescribed;
    if (s == "kernel")
        return CouplingMode::KernelConvolution;
    if (s == "elliptic")
        return CouplingMode::EllipticSolve;
    throw ConfigError(key, "expected one of prescribed, kernel, elliptic; got '" + s + "'");
}

inline const char* coupling_mode_name(CouplingMode m)
{
    switch (m) {
    case CouplingMode::Prescribed: return "prescribed";
    case CouplingMode::KernelConvolution: return "kernel";
    case CouplingMode::EllipticSolve: return "elliptic";
    }
    return "unknown";
}

inline KernelWeight parse_weight(const std::string& s, const std::string& key)
{
    if (s == "quadrature")
        return KernelWeight::Quadrature;
    if (s == "unit")
        return KernelWeight::Unit;
    throw ConfigError(key, "expected quadrature or unit; got '" + s + "'");
}

inline std::size_t positive_size(std::int64_t v, const std::string& key, std::int64_t min = 1)
{
    if (v < min)
        throw ConfigError(key, "must be at least " + std::to_string(min));
    return static_cast<std::size_t>(v);
}

} // namespace detail

/**
 * Parses a run configuration document.
 *
 * {
 *   "schema_version": 1,
 *   "cells": 100,
 *   "scheme": "sg" | "gf" | "upwind",
 *   "sensitivity": {"kind": "linear" | "logistic" | "exponential", "saturation": 1.0},
 *   "coupling": {"mode": "prescribed" | "kernel" | "elliptic",
 *                "weight": "quadrature" | "unit", "preset": "fp-weighted-well", "table": [...]},
 *   "coefficients": {"diffusion": 1.0, "chemosensitivity": 24.0},
 *   "dt": 0.01,
 *   "final_time": 100.0,
 *   "initial": {"type": "constant", "value": 1.0}
 *            | {"type": "noise", "value": 0.5, "amplitude": 0.01, "seed": 42}
 *            | {"type": "table", "values": [...]}
 *            | {"type": "steady-state", "mu": 0.0} or {"type": "steady-state", "mass": 0.5},
 *   "output": {"snapshot_every": 0, "snapshot_times": [...], "diagnostics_every": 1},
 *   "solver": {"residual_tol": 1e-10, "max_newton_iters": 50,
 *              "pseudo_time_step": 0, "max_pseudo_steps": 1000000}
 * }
 *
 * "output" and "solver" are optional, as are the keys inside them; unknown
 * keys anywhere are rejected.
 */
inline RunConfig parse_config(const nlohmann::json& doc)
{
    using detail::ObjectReader;
    if (!doc.is_object())
        throw ConfigError("", std::string("expected a JSON object at top level, got ") + doc.type_name());
    if (doc.empty())
        throw ConfigError("", "empty document; required keys: schema_version, cells, scheme, sensitivity, coupling, "
                              "coefficients, dt, final_time, initial");

    ObjectReader top(doc, "");
    RunConfig c;

    const std::int64_t version = top.integer("schema_version");
    if (version != config_schema_version)
        throw ConfigError("schema_version", "unsupported version " + std::to_string(version) + " (expected " +
                                                std::to_string(config_schema_version) + ")");

    c.cells = detail::positive_size(top.integer("cells"), "cells", 2);
    {
        const std::string s = top.string("scheme");
        try {
            c.scheme = parse_scheme(s);
        }
        catch (const std::invalid_argument&) {
            throw ConfigError("scheme", "expected one of sg, gf, upwind; got '" + s + "'");
        }
    }

    {
        ObjectReader r = top.object("sensitivity");
        c.sensitivity.kind = detail::parse_sensitivity_kind(r.string("kind"), "sensitivity.kind");
        c.sensitivity.saturation = r.number("saturation", 1.0);
        if (c.sensitivity.kind == SensitivityKind::Logistic && !(c.sensitivity.saturation > 0.0))
            throw ConfigError("sensitivity.saturation", "must be positive");
        r.finish();
    }

    {
        ObjectReader r = top.object("coupling");
        c.coupling.mode = detail::parse_coupling_mode(r.string("mode"), "coupling.mode");
        c.coupling.weight = detail::parse_weight(r.string("weight", "quadrature"), "coupling.weight");
        c.coupling.preset = r.string("preset", "");
        c.coupling.table = r.numbers("table");
        if (c.coupling.mode == CouplingMode::Prescribed) {
            if (c.coupling.preset.empty() == c.coupling.table.empty())
                throw ConfigError("coupling", "prescribed mode needs exactly one of 'preset' and 'table'");
            if (!c.coupling.preset.empty() && c.coupling.preset != "fp-weighted-well")
                throw ConfigError("coupling.preset", "unknown preset '" + c.coupling.preset +
                                                         "' (expected fp-weighted-well)");
            if (!c.coupling.table.empty() && c.coupling.table.size() != c.cells)
                throw ConfigError("coupling.table", "expected " + std::to_string(c.cells) + " values, got " +
                                                        std::to_string(c.coupling.table.size()));
        }
        else if (!c.coupling.preset.empty() || !c.coupling.table.empty()) {
            throw ConfigError("coupling", "'preset' and 'table' only apply to prescribed mode");
        }
        r.finish();
    }

    {
        ObjectReader r = top.object("coefficients");
        c.coefficients.diffusion = r.number("diffusion");
        c.coefficients.chemosensitivity = r.number("chemosensitivity");
        if (!(c.coefficients.diffusion > 0.0))
            throw ConfigError("coefficients.diffusion", "must be positive");
        if (!(c.coefficients.chemosensitivity > 0.0))
            throw ConfigError("coefficients.chemosensitivity", "must be positive");
        r.finish();
    }

    c.dt = top.number("dt");
    if (!(c.dt > 0.0))
        throw ConfigError("dt", "must be positive");
    c.final_time = top.number("final_time");
    if (!(c.final_time > 0.0))
        throw ConfigError("final_time", "must be positive");

    {
        ObjectReader r = top.object("initial");
        const std::string type = r.string("type");
        if (type == "constant") {
            c.initial = ConstantInit{r.number("value")};
        }
        else if (type == "noise") {
            NoiseInit n;
            n.value = r.number("value");
            n.amplitude = r.number("amplitude", n.amplitude);
            n.seed = r.unsigned_integer("seed", n.seed);
            if (n.amplitude < 0.0)
                throw ConfigError("initial.amplitude", "must be nonnegative");
            c.initial = n;
        }
        else if (type == "table") {
            if (!r.has("values"))
                throw ConfigError("initial.values", "missing required key (expected array of numbers)");
            TableInit t{r.numbers("values")};
            if (t.values.size() != c.cells)
                throw ConfigError("initial.values", "expected " + std::to_string(c.cells) + " values, got " +
                                                        std::to_string(t.values.size()));
            c.initial = t;
        }
        else if (type == "steady-state") {
            SteadyStateInit s;
            if (r.has("mu"))
                s.mu = r.number("mu");
            if (r.has("mass"))
                s.mass = r.number("mass");
            if (s.mu.has_value() == s.mass.has_value())
                throw ConfigError("initial", "steady-state needs exactly one of 'mu' and 'mass'");
            c.initial = s;
        }
        else {
            throw ConfigError("initial.type",
                              "expected one of constant, noise, table, steady-state; got '" + type + "'");
        }
        r.finish();
    }

    if (top.has("output")) {
        ObjectReader r = top.object("output");
        c.output.snapshot_every = detail::positive_size(r.integer("snapshot_every", 0), "output.snapshot_every", 0);
        c.output.snapshot_times = r.numbers("snapshot_times");
        c.output.diagnostics_every =
            detail::positive_size(r.integer("diagnostics_every", 1), "output.diagnostics_every", 1);
        r.finish();
    }

    if (top.has("solver")) {
        ObjectReader r = top.object("solver");
        c.solver.residual_tol = r.number("residual_tol", c.solver.residual_tol);
        if (!(c.solver.residual_tol > 0.0))
            throw ConfigError("solver.residual_tol", "must be positive");
        c.solver.max_newton_iters =
            static_cast<int>(detail::positive_size(r.integer("max_newton_iters", c.solver.max_newton_iters),
                                                   "solver.max_newton_iters"));
        c.solver.pseudo_time_step = r.number("pseudo_time_step", c.solver.pseudo_time_step);
        if (c.solver.pseudo_time_step < 0.0)
            throw ConfigError("solver.pseudo_time_step", "must be nonnegative (0 selects the automatic step)");
        c.solver.max_pseudo_steps = static_cast<std::int64_t>(detail::positive_size(
            r.integer("max_pseudo_steps", c.solver.max_pseudo_steps), "solver.max_pseudo_steps"));
        r.finish();
    }

    top.finish();
    try {
        c.validate();
    }
    catch (const std::invalid_argument& e) {
        throw ConfigError("", e.what());
    }
    return c;
}

inline RunConfig parse_config_text(std::string_view text)
{
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    }
    catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("", std::string("not valid JSON: ") + e.what());
    }
    return parse_config(doc);
}

/// Full config with every default filled in; parse_config(to_json(c)) == c.
inline nlohmann::json to_json(const RunConfig& c)
{
    using nlohmann::json;
    json j;
    j["schema_version"] = config_schema_version;
    j["cells"] = c.cells;
    j["scheme"] = std::string(scheme_name(c.scheme));

    json s;
    s["kind"] = c.sensitivity.make_model().name();
    if (c.sensitivity.kind == SensitivityKind::Logistic)
        s["saturation"] = c.sensitivity.saturation;
    j["sensitivity"] = s;

    json cp;
    cp["mode"] = detail::coupling_mode_name(c.coupling.mode);
    if (c.coupling.mode == CouplingMode::Prescribed) {
        if (!c.coupling.preset.empty())
            cp["preset"] = c.coupling.preset;
        else
            cp["table"] = c.coupling.table;
    }
    else {
        cp["weight"] = c.coupling.weight == KernelWeight::Unit ? "unit" : "quadrature";
    }
    j["coupling"] = cp;

    j["coefficients"] = {{"diffusion", c.coefficients.diffusion},
                         {"chemosensitivity", c.coefficients.chemosensitivity}};
    j["dt"] = c.dt;
    j["final_time"] = c.final_time;

    json init;
    if (const auto* k = std::get_if<ConstantInit>(&c.initial)) {
        init = {{"type", "constant"}, {"value", k->value}};
    }
    else if (const auto* n = std::get_if<NoiseInit>(&c.initial)) {
        init = {{"type", "noise"}, {"value", n->value}, {"amplitude", n->amplitude}, {"seed", n->seed}};
    }
    else if (const auto* t = std::get_if<TableInit>(&c.initial)) {
        init = {{"type", "table"}, {"values", t->values}};
    }
    else {
        const auto& ss = std::get<SteadyStateInit>(c.initial);
        init = {{"type", "steady-state"}};
        if (ss.mu)
            init["mu"] = *ss.mu;
        if (ss.mass)
            init["mass"] = *ss.mass;
    }
    j["initial"] = init;

    j["output"] = {{"snapshot_every", c.output.snapshot_every},
                   {"snapshot_times", c.output.snapshot_times},
                   {"diagnostics_every", c.output.diagnostics_every}};
    j["solver"] = {{"residual_tol", c.solver.residual_tol},
                   {"max_newton_iters", c.solver.max_newton_iters},
                   {"pseudo_time_step", c.solver.pseudo_time_step},
                   {"max_pseudo_steps", c.solver.max_pseudo_steps}};
    return j;
}

// ---------------------------------------------------------------------------
// Presets

inline const std::vector<std::string>& preset_names()
{
    static const std::vector<std::string> names{"fp-linear", "gks-logistic", "gks-exponential"};
    return names;
}

/**
 * Benchmark presets.
 *
 * fp-linear: linear Fokker-Planck, v = x(1-x)|x-0.3| prescribed, chi/D = 24,
 * I = 100, dt = 0.01, T = 100, u0 = 1 (unit mass).
 *
 * gks-logistic / gks-exponential: Keller-Segel with the elliptic drift in
 * unit weight (v_i = sum_j K_ij u_j, see KernelWeight), I = 100, dt = 1,
 * T = 1e4, noisy constant start (0.5 resp. 0.7, amplitude 0.01, seed 42),
 * snapshots at t = 50, 200, 9000.
 */
inline RunConfig preset_config(std::string_view name)
{
    RunConfig c;
    c.cells = 100;
    c.scheme = SchemeKind::ScharfetterGummel;
    if (name == "fp-linear") {
        c.sensitivity.kind = SensitivityKind::Linear;
        c.coupling.mode = CouplingMode::Prescribed;
        c.coupling.preset = "fp-weighted-well";
        c.coefficients = ProblemCoefficients(1.0, 24.0);
        c.dt = 0.01;
        c.final_time = 100.0;
        c.initial = ConstantInit{1.0};
        c.output.snapshot_times = {1.0, 10.0, 100.0};
        c.output.diagnostics_every = 10;
        return c;
    }
    if (name == "gks-logistic" || name == "gks-exponential") {
        const bool logistic = name == "gks-logistic";
        c.sensitivity.kind = logistic ? SensitivityKind::Logistic : SensitivityKind::Exponential;
        c.sensitivity.saturation = 1.0;
        c.coupling.mode = CouplingMode::EllipticSolve;
        c.coupling.weight = KernelWeight::Unit;
        c.coefficients = ProblemCoefficients(1.0, logistic ? 40.0 : 24.0);
        c.dt = 1.0;
        c.final_time = 1e4;
        c.initial = NoiseInit{logistic ? 0.5 : 0.7, 0.01, 42};
        c.output.snapshot_times = {50.0, 200.0, 9000.0};
        c.output.diagnostics_every = 1;
        return c;
    }
    throw ConfigError("", "unknown preset '" + std::string(name) + "' (expected fp-linear, gks-logistic or gks-exponential)");
}

/**
 * Applies "key=value" to a config document. The key is a dotted path
 * (e.g. "initial.seed"); the value is parsed as JSON when possible and taken
 * as a string otherwise. Intermediate objects must already exist.
 */
inline void apply_override(nlohmann::json& doc, std::string_view assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos || eq == 0)
        throw ConfigError("", "override '" + std::string(assignment) + "' is not of the form key=value");
    const std::string key(assignment.substr(0, eq));
    const std::string text(assignment.substr(eq + 1));

    nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
    if (value.is_discarded())
        value = text;

    nlohmann::json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const std::size_t dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty())
            throw ConfigError(key, "malformed key path");
        if (dot == std::string::npos) {
            (*node)[part] = value;
            return;
        }
        if (!node->contains(part) || !(*node)[part].is_object())
            throw ConfigError(key.substr(0, dot), "no such object to override into");
        node = &(*node)[part];
        start = dot + 1;
    }
}

} // namespace ksfv
