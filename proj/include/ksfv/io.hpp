#pragma once

#include "ksfv/config.hpp"
#include "ksfv/simulation.hpp"

#include <json.hpp>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ksfv {

inline constexpr const char* version_string = "0.1.0";

/// Shortest round-trip decimal form of x.
inline std::string format_double(double x)
{
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

/// Snapshot table: header "t,<x_1>,...,<x_I>" with the cell centers, one row per snapshot.
inline void write_snapshots_csv(std::ostream& os, const Mesh& mesh, const std::vector<Snapshot>& snapshots)
{
    os << 't';
    for (std::size_t k = 0; k < mesh.size(); ++k)
        os << ',' << format_double(mesh.center(k));
    os << '\n';
    for (const auto& s : snapshots) {
        os << format_double(s.t);
        for (double x : s.u)
            os << ',' << format_double(x);
        os << '\n';
    }
}

inline constexpr const char* diagnostics_header = "t,mass,energy,linf_variation,min_u,max_u,newton_iters,fallback_used";

inline void write_diagnostics_row(std::ostream& os, const DiagnosticsRecord& r)
{
    os << format_double(r.t) << ',' << format_double(r.mass) << ',' << format_double(r.energy) << ','
       << format_double(r.linf_variation) << ',' << format_double(r.min_u) << ',' << format_double(r.max_u) << ','
       << r.newton_iters << ',' << (r.fallback_used ? 1 : 0) << '\n';
}

inline void write_diagnostics_csv(std::ostream& os, const std::vector<DiagnosticsRecord>& records)
{
    os << diagnostics_header << '\n';
    for (const auto& r : records)
        write_diagnostics_row(os, r);
}

/// The seed of a noisy start, 0 otherwise.
inline std::uint64_t config_seed(const RunConfig& c)
{
    if (const auto* n = std::get_if<NoiseInit>(&c.initial))
        return n->seed;
    return 0;
}

inline nlohmann::json run_metadata(const RunConfig& c)
{
    nlohmann::json j;
    j["config"] = to_json(c);
    j["seed"] = config_seed(c);
    j["version"] = version_string;
    j["scheme"] = std::string(scheme_name(c.scheme));
    return j;
}

namespace detail {

inline std::ofstream open_output(const std::filesystem::path& p)
{
    std::ofstream os(p);
    if (!os)
        throw std::runtime_error("cannot open '" + p.string() + "' for writing");
    return os;
}

} // namespace detail

/**
 * Writes snapshots.csv, diagnostics.csv and metadata.json into `dir`,
 * creating it if needed. Also used for partial results of a failed run.
 */
inline void write_run_outputs(const std::filesystem::path& dir, const RunConfig& config, const RunResult& result,
                              const std::string& status = "ok")
{
    std::filesystem::create_directories(dir);
    const Mesh mesh(config.cells);
    {
        auto os = detail::open_output(dir / "snapshots.csv");
        write_snapshots_csv(os, mesh, result.snapshots);
    }
    {
        auto os = detail::open_output(dir / "diagnostics.csv");
        write_diagnostics_csv(os, result.diagnostics);
    }
    {
        nlohmann::json meta = run_metadata(config);
        meta["status"] = status;
        meta["steps"] = result.steps;
        auto os = detail::open_output(dir / "metadata.json");
        os << meta.dump(2) << '\n';
    }
}

inline std::string read_text_file(const std::filesystem::path& p)
{
    std::ifstream is(p);
    if (!is)
        throw std::runtime_error("cannot read '" + p.string() + "'");
    return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

} // namespace ksfv
