#pragma once

#include "ksfv/io.hpp"
#include "ksfv/simulation.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/toms748_solve.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace ksfv {

// ---------------------------------------------------------------------------
// Convergence study

struct ConvergenceRow {
    std::size_t cells = 0;
    double error = 0.0;                ///< relative infinity-norm error
    std::optional<double> order;       ///< empty for the first row
};

enum class ReferenceKind { ExactStationary, FinestGrid };

struct ConvergenceTable {
    ReferenceKind reference = ReferenceKind::ExactStationary;
    std::vector<ConvergenceRow> rows;
};

/**
 * Continuum steady state for a prescribed drift v(x) on (0, 1):
 * g(u) = (chi/D) v + mu with mu fixed by the mass. For the linear model this
 * is C e^{chi v / D}.
 */
class StationaryReference {
public:
    StationaryReference(SensitivityModel model, double (*potential)(double), ProblemCoefficients coefficients,
                        double target_mass)
        : model_(std::move(model)), potential_(potential), scale_(1.0 / coefficients.ratio())
    {
        if (!(target_mass > 0.0))
            throw std::invalid_argument("StationaryReference: mass must be positive");
        if (model_.kind() == SensitivityKind::Linear) {
            auto f = [&](double x) { return std::exp(scale_ * potential_(x)); };
            const double z = integrate(f);
            log_c_ = std::log(target_mass / z);
            mu_ = log_c_;
            return;
        }
        auto residual = [&](double mu) {
            return integrate([&](double x) { return model_.g_inverse(scale_ * potential_(x) + mu); }) - target_mass;
        };
        double lo = -1.0;
        double hi = 1.0;
        while (residual(lo) > 0.0)
            lo *= 2.0;
        while (residual(hi) < 0.0)
            hi *= 2.0;
        std::uintmax_t iters = 200;
        const auto root =
            boost::math::tools::toms748_solve(residual, lo, hi, boost::math::tools::eps_tolerance<double>(50), iters);
        mu_ = 0.5 * (root.first + root.second);
    }

    double operator()(double x) const
    {
        x = std::clamp(x, 0.0, 1.0);
        if (model_.kind() == SensitivityKind::Linear)
            return std::exp(log_c_ + scale_ * potential_(x));
        return model_.g_inverse(scale_ * potential_(x) + mu_);
    }

    double mu() const { return mu_; }

private:
    // The well potential has a kink at 0.3; splitting there keeps the rule exact to rounding.
    template <class F>
    static double integrate(F f)
    {
        using gk = boost::math::quadrature::gauss_kronrod<double, 61>;
        return gk::integrate(f, 0.0, 0.3, 15, 1e-14) + gk::integrate(f, 0.3, 1.0, 15, 1e-14);
    }

    SensitivityModel model_;
    double (*potential_)(double);
    double scale_;
    double log_c_ = 0.0;
    double mu_ = 0.0;
};

/**
 * Average of the piecewise-constant fine solution over each coarse cell,
 * weighted by overlap. Coarse cells reaching past the fine domain average
 * over the covered part only.
 */
inline std::vector<double> restrict_cell_average(std::span<const double> fine, const Mesh& fine_mesh,
                                                 const Mesh& coarse_mesh)
{
    if (fine.size() != fine_mesh.size())
        throw std::invalid_argument("restrict_cell_average: size mismatch");
    const double hf = fine_mesh.dx();
    const double hc = coarse_mesh.dx();
    std::vector<double> out(coarse_mesh.size(), 0.0);
    for (std::size_t j = 0; j < coarse_mesh.size(); ++j) {
        const double a = coarse_mesh.center(j) - 0.5 * hc;
        const double b = coarse_mesh.center(j) + 0.5 * hc;
        double sum = 0.0;
        double covered = 0.0;
        for (std::size_t k = 0; k < fine_mesh.size(); ++k) {
            const double fa = fine_mesh.center(k) - 0.5 * hf;
            const double fb = fine_mesh.center(k) + 0.5 * hf;
            const double w = std::min(b, fb) - std::max(a, fa);
            if (w > 0.0) {
                sum += w * fine[k];
                covered += w;
            }
        }
        out[j] = sum / covered;
    }
    return out;
}

inline double relative_linf_error(std::span<const double> u, std::span<const double> ref)
{
    double err = 0.0;
    double scale = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) {
        err = std::max(err, std::abs(u[k] - ref[k]));
        scale = std::max(scale, std::abs(ref[k]));
    }
    return scale > 0.0 ? err / scale : err;
}

/// Whether `config` has a closed-form stationary reference (prescribed named drift).
inline bool has_exact_reference(const RunConfig& config)
{
    return config.coupling.mode == CouplingMode::Prescribed && config.coupling.table.empty() &&
           config.coupling.preset == "fp-weighted-well";
}

inline double stationary_reference_error(const RunConfig& config, std::span<const double> u)
{
    const Mesh mesh(config.cells);
    const DriftCoupling coupling = config.coupling.make_coupling(mesh);
    const SensitivityModel model = config.sensitivity.make_model();
    const double m0 = mass(initial_condition(config.initial, mesh, model, coupling, config.coefficients), mesh);
    const StationaryReference ref(model, weighted_well_potential, config.coefficients, m0);
    std::vector<double> exact(mesh.size());
    for (std::size_t k = 0; k < mesh.size(); ++k)
        exact[k] = ref(mesh.center(k));
    return relative_linf_error(u, exact);
}

/**
 * Runs `config` at each resolution and reports the relative infinity-norm
 * error and the observed order log(e_prev / e) / log(I / I_prev).
 *
 * With a prescribed named drift the reference is the continuum stationary
 * state at the cell centers; otherwise the finest resolution is the
 * reference, restricted to the coarser grids by cell averaging (its own row
 * is then omitted).
 */
inline ConvergenceTable run_convergence(const RunConfig& config, const std::vector<std::size_t>& resolutions)
{
    if (resolutions.size() < 2)
        throw std::invalid_argument("run_convergence: need at least two resolutions");
    for (std::size_t k = 1; k < resolutions.size(); ++k) {
        if (resolutions[k] <= resolutions[k - 1])
            throw std::invalid_argument("run_convergence: resolutions must be strictly increasing");
    }
    if (!std::holds_alternative<ConstantInit>(config.initial) && !std::holds_alternative<NoiseInit>(config.initial) &&
        !std::holds_alternative<SteadyStateInit>(config.initial))
        throw std::invalid_argument("run_convergence: a table initial condition is tied to one resolution");
    if (!config.coupling.table.empty())
        throw std::invalid_argument("run_convergence: a drift table is tied to one resolution");

    ConvergenceTable table;
    table.reference = has_exact_reference(config) ? ReferenceKind::ExactStationary : ReferenceKind::FinestGrid;

    auto solve_at = [&](std::size_t cells) {
        RunConfig c = config;
        c.cells = cells;
        c.output = OutputSpec{};
        c.output.diagnostics_every = c.step_count();
        return run(c).final_state;
    };

    std::vector<std::size_t> measured = resolutions;
    if (table.reference == ReferenceKind::FinestGrid) {
        if (resolutions.size() < 3)
            throw std::invalid_argument("run_convergence: self-reference needs at least three resolutions");
        measured.pop_back();
    }

    std::vector<double> fine;
    const Mesh fine_mesh(resolutions.back());
    if (table.reference == ReferenceKind::FinestGrid)
        fine = solve_at(resolutions.back());

    for (std::size_t cells : measured) {
        RunConfig c = config;
        c.cells = cells;
        const std::vector<double> u = solve_at(cells);
        ConvergenceRow row;
        row.cells = cells;
        if (table.reference == ReferenceKind::ExactStationary)
            row.error = stationary_reference_error(c, u);
        else
            row.error = relative_linf_error(u, restrict_cell_average(fine, fine_mesh, Mesh(cells)));
        if (!table.rows.empty()) {
            const auto& prev = table.rows.back();
            row.order = std::log(prev.error / row.error) /
                        std::log(static_cast<double>(cells) / static_cast<double>(prev.cells));
        }
        table.rows.push_back(row);
    }
    return table;
}

inline void write_convergence_csv(std::ostream& os, const ConvergenceTable& table)
{
    os << "cells,error,order\n";
    for (const auto& r : table.rows)
        os << r.cells << ',' << format_double(r.error) << ',' << (r.order ? format_double(*r.order) : "") << '\n';
}

// ---------------------------------------------------------------------------
// Scheme comparison

struct CompareEntry {
    SchemeKind scheme = SchemeKind::ScharfetterGummel;
    bool ok = false;
    std::string error;
    RunResult result;
};

struct CompareResult {
    std::vector<CompareEntry> entries;
    bool all_ok() const
    {
        return std::all_of(entries.begin(), entries.end(), [](const CompareEntry& e) { return e.ok; });
    }
};

/// Worker cap: KSFV_THREADS if set to a positive integer, else the hardware concurrency.
inline unsigned worker_threads(std::size_t jobs)
{
    unsigned cap = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("KSFV_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0)
            cap = static_cast<unsigned>(v);
    }
    return static_cast<unsigned>(std::min<std::size_t>(cap, jobs));
}

/**
 * Runs `config` once per scheme with the same initial data (the seed
 * replaces the noise seed). Writes <out>/<scheme>/ for every scheme, partial
 * results included, and <out>/compare.csv with one linf_variation column per
 * scheme aligned on t.
 */
inline CompareResult run_compare(const RunConfig& config, const std::vector<SchemeKind>& schemes,
                                 std::uint64_t seed, const std::filesystem::path& out)
{
    if (schemes.size() < 2)
        throw std::invalid_argument("run_compare: need at least two schemes");
    for (std::size_t a = 0; a < schemes.size(); ++a) {
        for (std::size_t b = a + 1; b < schemes.size(); ++b) {
            if (schemes[a] == schemes[b])
                throw std::invalid_argument("run_compare: scheme '" + std::string(scheme_name(schemes[a])) +
                                            "' listed twice");
        }
    }
    RunConfig base = config;
    if (auto* noise = std::get_if<NoiseInit>(&base.initial))
        noise->seed = seed;
    base.validate();

    CompareResult result;
    result.entries.resize(schemes.size());
    std::vector<RunConfig> configs(schemes.size(), base);
    for (std::size_t k = 0; k < schemes.size(); ++k) {
        configs[k].scheme = schemes[k];
        result.entries[k].scheme = schemes[k];
    }

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k = next++; k < schemes.size(); k = next++) {
            CompareEntry& e = result.entries[k];
            try {
                e.result = run(configs[k]);
                e.ok = true;
            }
            catch (const RunFailure& f) {
                e.result = f.partial();
                e.error = f.what();
            }
            catch (const std::exception& ex) {
                e.error = ex.what();
            }
        }
    };
    const unsigned n_threads = worker_threads(schemes.size());
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < n_threads; ++t)
        pool.emplace_back(worker);
    worker();
    for (auto& t : pool)
        t.join();

    std::filesystem::create_directories(out);
    for (std::size_t k = 0; k < schemes.size(); ++k) {
        const auto& e = result.entries[k];
        write_run_outputs(out / std::string(scheme_name(e.scheme)), configs[k], e.result, e.ok ? "ok" : "failed: " + e.error);
    }

    auto os = detail::open_output(out / "compare.csv");
    os << 't';
    for (const auto& e : result.entries)
        os << ',' << scheme_name(e.scheme) << "_linf_variation";
    os << '\n';
    std::size_t rows = 0;
    for (const auto& e : result.entries)
        rows = std::max(rows, e.result.diagnostics.size());
    for (std::size_t r = 0; r < rows; ++r) {
        double t = 0.0;
        for (const auto& e : result.entries) {
            if (r < e.result.diagnostics.size()) {
                t = e.result.diagnostics[r].t;
                break;
            }
        }
        os << format_double(t);
        for (const auto& e : result.entries) {
            os << ',';
            if (r < e.result.diagnostics.size())
                os << format_double(e.result.diagnostics[r].linf_variation);
        }
        os << '\n';
    }
    return result;
}

} // namespace ksfv
