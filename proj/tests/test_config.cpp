#include "ksfv/config.hpp"
#include "ksfv/io.hpp"

#include <gtest/gtest.h>

#include <sstream>
#include <string>

using namespace ksfv;
using nlohmann::json;

namespace {

json minimal()
{
    return json::parse(R"({
        "schema_version": 1,
        "cells": 50,
        "scheme": "gf",
        "sensitivity": {"kind": "logistic", "saturation": 1.0},
        "coupling": {"mode": "elliptic", "weight": "unit"},
        "coefficients": {"diffusion": 1.0, "chemosensitivity": 40.0},
        "dt": 1.0,
        "final_time": 10.0,
        "initial": {"type": "noise", "value": 0.5, "amplitude": 0.01, "seed": 7}
    })");
}

std::string error_key(const json& doc)
{
    try {
        parse_config(doc);
    }
    catch (const ConfigError& e) {
        return e.key();
    }
    return "<no error>";
}

std::string error_text(const json& doc)
{
    try {
        parse_config(doc);
    }
    catch (const ConfigError& e) {
        return e.what();
    }
    return "<no error>";
}

} // namespace

TEST(Config, ParsesMinimalDocument)
{
    const RunConfig c = parse_config(minimal());
    EXPECT_EQ(c.cells, 50u);
    EXPECT_EQ(c.scheme, SchemeKind::GradientFlow);
    EXPECT_EQ(c.sensitivity.kind, SensitivityKind::Logistic);
    EXPECT_EQ(c.coupling.mode, CouplingMode::EllipticSolve);
    EXPECT_EQ(c.coupling.weight, KernelWeight::Unit);
    EXPECT_DOUBLE_EQ(c.coefficients.ratio(), 1.0 / 40.0);
    const auto& n = std::get<NoiseInit>(c.initial);
    EXPECT_EQ(n.seed, 7u);
    EXPECT_EQ(c.output.diagnostics_every, 1u);
    EXPECT_DOUBLE_EQ(c.solver.residual_tol, 1e-10);
}

TEST(Config, EmptyDocumentListsRequiredKeys)
{
    const std::string msg = error_text(json::object());
    for (const char* key : {"schema_version", "cells", "scheme", "sensitivity", "coupling", "coefficients", "dt",
                            "final_time", "initial"})
        EXPECT_NE(msg.find(key), std::string::npos) << key;
}

TEST(Config, UnknownKeysRejected)
{
    json d = minimal();
    d["colour"] = "blue";
    EXPECT_EQ(error_key(d), "colour");
    d = minimal();
    d["initial"]["sead"] = 3;
    EXPECT_EQ(error_key(d), "initial.sead");
    d = minimal();
    d["solver"] = {{"tolerance", 1e-9}};
    EXPECT_EQ(error_key(d), "solver.tolerance");
}

TEST(Config, TypeErrorsNameKeyAndType)
{
    json d = minimal();
    d["cells"] = "many";
    EXPECT_EQ(error_key(d), "cells");
    EXPECT_NE(error_text(d).find("integer"), std::string::npos);

    d = minimal();
    d["coefficients"]["diffusion"] = true;
    EXPECT_EQ(error_key(d), "coefficients.diffusion");
    EXPECT_NE(error_text(d).find("number"), std::string::npos);

    d = minimal();
    d["sensitivity"] = 3;
    EXPECT_EQ(error_key(d), "sensitivity");
    EXPECT_NE(error_text(d).find("object"), std::string::npos);

    d = minimal();
    d.erase("dt");
    EXPECT_EQ(error_key(d), "dt");
}

TEST(Config, ValueErrors)
{
    json d = minimal();
    d["schema_version"] = 2;
    EXPECT_EQ(error_key(d), "schema_version");
    d = minimal();
    d["scheme"] = "central";
    EXPECT_EQ(error_key(d), "scheme");
    d = minimal();
    d["dt"] = -1.0;
    EXPECT_EQ(error_key(d), "dt");
    d = minimal();
    d["cells"] = 1;
    EXPECT_EQ(error_key(d), "cells");
    d = minimal();
    d["initial"]["amplitude"] = -0.1;
    EXPECT_EQ(error_key(d), "initial.amplitude");
    d = minimal();
    d["coupling"] = {{"mode", "prescribed"}};
    EXPECT_EQ(error_key(d), "coupling");
    d = minimal();
    d["coupling"] = {{"mode", "prescribed"}, {"preset", "bowl"}};
    EXPECT_EQ(error_key(d), "coupling.preset");
    d = minimal();
    d["initial"] = {{"type", "steady-state"}};
    EXPECT_EQ(error_key(d), "initial");
    EXPECT_THROW(parse_config_text("{not json"), ConfigError);
}

TEST(Config, RoundTripThroughJson)
{
    for (const auto& name : preset_names()) {
        const RunConfig a = preset_config(name);
        const json echo = to_json(a);
        const RunConfig b = parse_config(echo);
        EXPECT_EQ(to_json(b), echo) << name;
    }
    const RunConfig c = parse_config(minimal());
    EXPECT_EQ(to_json(parse_config(to_json(c))), to_json(c));
}

TEST(Config, Presets)
{
    const RunConfig fp = preset_config("fp-linear");
    EXPECT_EQ(fp.cells, 100u);
    EXPECT_EQ(fp.sensitivity.kind, SensitivityKind::Linear);
    EXPECT_EQ(fp.coupling.mode, CouplingMode::Prescribed);
    EXPECT_DOUBLE_EQ(1.0 / fp.coefficients.ratio(), 24.0);
    EXPECT_DOUBLE_EQ(fp.dt, 0.01);
    EXPECT_DOUBLE_EQ(fp.final_time, 100.0);

    const RunConfig logi = preset_config("gks-logistic");
    EXPECT_EQ(logi.sensitivity.kind, SensitivityKind::Logistic);
    EXPECT_DOUBLE_EQ(1.0 / logi.coefficients.ratio(), 40.0);
    EXPECT_EQ(logi.cells, 100u);
    EXPECT_DOUBLE_EQ(logi.dt, 1.0);
    EXPECT_DOUBLE_EQ(std::get<NoiseInit>(logi.initial).value, 0.5);

    const RunConfig ex = preset_config("gks-exponential");
    EXPECT_EQ(ex.sensitivity.kind, SensitivityKind::Exponential);
    EXPECT_DOUBLE_EQ(1.0 / ex.coefficients.ratio(), 24.0);
    EXPECT_DOUBLE_EQ(std::get<NoiseInit>(ex.initial).value, 0.7);
    EXPECT_EQ(ex.output.snapshot_times, (std::vector<double>{50.0, 200.0, 9000.0}));

    EXPECT_THROW(preset_config("gks-linear"), ConfigError);
}

TEST(Config, Overrides)
{
    json d = to_json(preset_config("gks-logistic"));
    apply_override(d, "initial.seed=9");
    apply_override(d, "scheme=gf");
    apply_override(d, "final_time=2.5");
    apply_override(d, "output.snapshot_times=[1,2]");
    const RunConfig c = parse_config(d);
    EXPECT_EQ(std::get<NoiseInit>(c.initial).seed, 9u);
    EXPECT_EQ(c.scheme, SchemeKind::GradientFlow);
    EXPECT_DOUBLE_EQ(c.final_time, 2.5);
    EXPECT_EQ(c.output.snapshot_times, (std::vector<double>{1.0, 2.0}));

    EXPECT_THROW(apply_override(d, "no-equals"), ConfigError);
    EXPECT_THROW(apply_override(d, "missing.child=1"), ConfigError);
    EXPECT_THROW(apply_override(d, "initial..seed=1"), ConfigError);
    apply_override(d, "bogus=1");
    EXPECT_EQ(error_key(d), "bogus");
}

TEST(Io, FormatRoundTrips)
{
    for (double x : {0.1, 1.0 / 3.0, 1e-300, 6.02214076e23, 0.0, -2.5})
        EXPECT_EQ(std::stod(format_double(x)), x);
}

TEST(Io, CsvLayouts)
{
    const Mesh mesh(4);
    std::vector<Snapshot> snaps{{0, 0.0, {1.0, 2.0, 3.0, 4.0}}, {1, 0.5, {0.5, 0.25, 0.125, 1.0}}};
    std::ostringstream s;
    write_snapshots_csv(s, mesh, snaps);
    EXPECT_EQ(s.str(), "t,0.25,0.5,0.75,1\n0,1,2,3,4\n0.5,0.5,0.25,0.125,1\n");

    DiagnosticsRecord r;
    r.t = 1.0;
    r.mass = 0.5;
    r.energy = -1.25;
    r.linf_variation = 1e-3;
    r.min_u = 0.0;
    r.max_u = 1.0;
    r.newton_iters = 4;
    r.fallback_used = true;
    std::ostringstream d;
    write_diagnostics_csv(d, {r});
    EXPECT_EQ(d.str(), "t,mass,energy,linf_variation,min_u,max_u,newton_iters,fallback_used\n1,0.5,-1.25,0.001,0,1,4,1\n");
}

TEST(Io, MetadataCarriesSeedAndConfig)
{
    const RunConfig c = preset_config("gks-exponential");
    const json m = run_metadata(c);
    EXPECT_EQ(m["seed"], 42);
    EXPECT_EQ(m["config"], to_json(c));
    EXPECT_TRUE(m.contains("version"));
}
