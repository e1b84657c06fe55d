// Command-line front end: run configs and presets, convergence and scheme comparisons.

#include "ksfv/config.hpp"
#include "ksfv/harness.hpp"
#include "ksfv/io.hpp"
#include "ksfv/simulation.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace {

enum ExitCode : int { exit_ok = 0, exit_other = 1, exit_config = 2, exit_solver = 3 };

ksfv::RunConfig load_config(const std::string& path)
{
    std::string text;
    try {
        text = ksfv::read_text_file(path);
    }
    catch (const std::exception& e) {
        throw ksfv::ConfigError("", e.what());
    }
    return ksfv::parse_config_text(text);
}

int do_run(const ksfv::RunConfig& config, const std::filesystem::path& out)
{
    try {
        const ksfv::RunResult r = ksfv::run(config);
        ksfv::write_run_outputs(out, config, r);
        const auto& last = r.diagnostics.back();
        std::cout << "steps " << r.steps << "  t " << last.t << "  mass " << ksfv::format_double(last.mass)
                  << "  energy " << ksfv::format_double(last.energy) << "\n";
        return exit_ok;
    }
    catch (const ksfv::RunFailure& f) {
        ksfv::write_run_outputs(out, config, f.partial(), std::string("failed: ") + f.what());
        std::cerr << "ksfv: " << f.what() << "\n";
        return exit_solver;
    }
}

std::vector<std::string> split_list(const std::string& s)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        out.push_back(item);
    return out;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Finite-volume Keller-Segel / Fokker-Planck solver"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;

    auto* run_cmd = app.add_subcommand("run", "Run a JSON config");
    run_cmd->add_option("--config", config_path, "Config file")->required();
    run_cmd->add_option("--out", out_dir, "Output directory")->required();

    std::string preset_name;
    std::vector<std::string> overrides;
    auto* preset_cmd = app.add_subcommand("preset", "Run a named preset");
    preset_cmd->add_option("name", preset_name, "fp-linear, gks-logistic or gks-exponential")->required();
    preset_cmd->add_option("--set", overrides, "Override key=value (dotted key path)")->take_all();
    preset_cmd->add_option("--out", out_dir, "Output directory (required unless --print)");
    bool print_only = false;
    preset_cmd->add_flag("--print", print_only, "Print the resolved config and exit");

    std::string resolutions_text = "50,100,200";
    auto* conv_cmd = app.add_subcommand("convergence", "Spatial convergence study");
    conv_cmd->add_option("--config", config_path, "Config file")->required();
    conv_cmd->add_option("--resolutions", resolutions_text, "Comma-separated cell counts");
    std::string table_path;
    conv_cmd->add_option("--out", table_path, "Also write the table to this CSV file");

    std::string schemes_text = "sg,gf,upwind";
    std::uint64_t seed = 42;
    auto* cmp_cmd = app.add_subcommand("compare", "Run several schemes on the same initial data");
    cmp_cmd->add_option("--config", config_path, "Config file")->required();
    cmp_cmd->add_option("--schemes", schemes_text, "Comma-separated schemes");
    cmp_cmd->add_option("--seed", seed, "Shared noise seed");
    std::string compare_dir = ".";
    cmp_cmd->add_option("--out", compare_dir, "Output directory");

    try {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? exit_ok : exit_config;
    }

    try {
        if (*run_cmd)
            return do_run(load_config(config_path), out_dir);

        if (*preset_cmd) {
            nlohmann::json doc = ksfv::to_json(ksfv::preset_config(preset_name));
            for (const auto& o : overrides)
                ksfv::apply_override(doc, o);
            const ksfv::RunConfig config = ksfv::parse_config(doc);
            if (print_only) {
                std::cout << ksfv::to_json(config).dump(2) << "\n";
                return exit_ok;
            }
            if (out_dir.empty())
                throw ksfv::ConfigError("--out", "required unless --print is given");
            return do_run(config, out_dir);
        }

        if (*conv_cmd) {
            const ksfv::RunConfig config = load_config(config_path);
            std::vector<std::size_t> res;
            for (const auto& s : split_list(resolutions_text)) {
                try {
                    std::size_t pos = 0;
                    const long long v = std::stoll(s, &pos);
                    if (pos != s.size() || v < 2)
                        throw std::invalid_argument(s);
                    res.push_back(static_cast<std::size_t>(v));
                }
                catch (const std::logic_error&) {
                    throw ksfv::ConfigError("--resolutions", "expected comma-separated integers >= 2, got '" + s + "'");
                }
            }
            ksfv::ConvergenceTable table;
            try {
                table = ksfv::run_convergence(config, res);
            }
            catch (const std::invalid_argument& e) {
                throw ksfv::ConfigError("--resolutions", e.what());
            }
            std::cout << (table.reference == ksfv::ReferenceKind::ExactStationary ? "# reference: exact stationary\n"
                                                                                  : "# reference: finest grid\n");
            ksfv::write_convergence_csv(std::cout, table);
            if (!table_path.empty()) {
                auto os = ksfv::detail::open_output(table_path);
                ksfv::write_convergence_csv(os, table);
            }
            return exit_ok;
        }

        if (*cmp_cmd) {
            const ksfv::RunConfig config = load_config(config_path);
            std::vector<ksfv::SchemeKind> schemes;
            for (const auto& s : split_list(schemes_text)) {
                try {
                    schemes.push_back(ksfv::parse_scheme(s));
                }
                catch (const std::invalid_argument& e) {
                    throw ksfv::ConfigError("--schemes", e.what());
                }
            }
            ksfv::CompareResult r;
            try {
                r = ksfv::run_compare(config, schemes, seed, compare_dir);
            }
            catch (const std::invalid_argument& e) {
                throw ksfv::ConfigError("--schemes", e.what());
            }
            for (const auto& e : r.entries)
                std::cout << ksfv::scheme_name(e.scheme) << ": " << (e.ok ? "ok" : "failed: " + e.error) << "\n";
            return r.all_ok() ? exit_ok : exit_solver;
        }
    }
    catch (const ksfv::ConfigError& e) {
        std::cerr << "ksfv: " << e.what() << "\n";
        return exit_config;
    }
    catch (const ksfv::StepFailure& e) {
        std::cerr << "ksfv: " << e.what() << "\n";
        return exit_solver;
    }
    catch (const std::invalid_argument& e) {
        std::cerr << "ksfv: " << e.what() << "\n";
        return exit_config;
    }
    catch (const std::exception& e) {
        std::cerr << "ksfv: " << e.what() << "\n";
        return exit_other;
    }
    return exit_other;
}
