#pragma once

#include "ksfv/drift.hpp"
#include "ksfv/errors.hpp"
#include "ksfv/flux.hpp"
#include "ksfv/implicit_solver.hpp"
#include "ksfv/mesh.hpp"
#include "ksfv/random.hpp"
#include "ksfv/sensitivity.hpp"

#include <boost/math/tools/toms748_solve.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace ksfv {

// ---------------------------------------------------------------------------
// Configuration

struct SensitivitySpec {
    SensitivityKind kind = SensitivityKind::Linear;
    double saturation = 1.0; ///< M, logistic only

    SensitivityModel make_model() const
    {
        switch (kind) {
        case SensitivityKind::Linear: return SensitivityModel::linear();
        case SensitivityKind::Logistic: return SensitivityModel::logistic(saturation);
        case SensitivityKind::Exponential: return SensitivityModel::exponential();
        case SensitivityKind::Custom: break;
        }
        throw std::invalid_argument("SensitivitySpec: custom sensitivities cannot be built from a spec");
    }
};

struct CouplingSpec {
    CouplingMode mode = CouplingMode::EllipticSolve;
    KernelWeight weight = KernelWeight::Quadrature;
    std::string preset;         ///< named prescribed field, e.g. "fp-weighted-well"
    std::vector<double> table;  ///< prescribed values, one per cell

    DriftCoupling make_coupling(const Mesh& mesh) const
    {
        switch (mode) {
        case CouplingMode::Prescribed:
            if (!table.empty()) {
                if (table.size() != mesh.size())
                    throw std::invalid_argument("prescribed drift table has " + std::to_string(table.size()) +
                                                " values for " + std::to_string(mesh.size()) + " cells");
                return DriftCoupling::prescribed(table);
            }
            if (preset == "fp-weighted-well")
                return DriftCoupling::prescribed(mesh, weighted_well_potential);
            throw std::invalid_argument("unknown prescribed drift preset '" + preset + "'");
        case CouplingMode::KernelConvolution: return DriftCoupling::kernel_convolution(mesh, weight);
        case CouplingMode::EllipticSolve: return DriftCoupling::elliptic_solve(mesh, weight);
        }
        throw std::invalid_argument("CouplingSpec: unknown mode");
    }
};

struct ConstantInit {
    double value = 1.0;
};

/// u_i = c (1 + amplitude xi_i), xi_i uniform on [-1, 1) from SplitMix64(seed).
struct NoiseInit {
    double value = 0.5;
    double amplitude = 0.01;
    std::uint64_t seed = 42;
};

struct TableInit {
    std::vector<double> values;
};

/// Discrete steady state g(u_i) = (chi/D) v_i + mu, with mu given or fitted to a target mass.
struct SteadyStateInit {
    std::optional<double> mu;
    std::optional<double> mass;
};

using InitialSpec = std::variant<ConstantInit, NoiseInit, TableInit, SteadyStateInit>;

struct OutputSpec {
    std::size_t snapshot_every = 0; ///< 0: only requested times and the final state
    std::vector<double> snapshot_times;
    std::size_t diagnostics_every = 1;
};

struct RunConfig {
    std::size_t cells = 100;
    SchemeKind scheme = SchemeKind::ScharfetterGummel;
    SensitivitySpec sensitivity;
    CouplingSpec coupling;
    ProblemCoefficients coefficients;
    double dt = 0.01;
    double final_time = 1.0;
    InitialSpec initial = ConstantInit{};
    OutputSpec output;
    SolverConfig solver;

    void validate() const
    {
        if (cells < 2)
            throw std::invalid_argument("cells must be at least 2");
        if (!(dt > 0.0) || !std::isfinite(dt))
            throw std::invalid_argument("dt must be positive");
        if (!(final_time > 0.0) || !std::isfinite(final_time))
            throw std::invalid_argument("T must be positive");
        if (const auto* noise = std::get_if<NoiseInit>(&initial); noise && noise->amplitude < 0.0)
            throw std::invalid_argument("noise amplitude must be nonnegative");
        if (output.diagnostics_every == 0)
            throw std::invalid_argument("diagnostics_every must be positive");
        coefficients.validate();
        solver.validate();
    }

    std::size_t step_count() const
    {
        return static_cast<std::size_t>(std::ceil(final_time / dt - 1e-9));
    }
};

// ---------------------------------------------------------------------------
// Diagnostics

/**
 * Discrete energy dx sum_i [G(u_i) - kappa (chi/D) u_i v_i] with v the drift
 * generated by u. The chi/D factor makes this the Lyapunov functional of
 * u_t = (D u_x - chi phi(u) v_x)_x; it is the usual G - kappa u v for D = chi.
 */
inline double energy(std::span<const double> u, std::span<const double> v, double kappa,
                     const SensitivityModel& model, const Mesh& mesh, const ProblemCoefficients& coefficients)
{
    const double w = kappa / coefficients.ratio();
    double sum = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k)
        sum += model.G(u[k]) - w * u[k] * v[k];
    return mesh.dx() * sum;
}

inline double energy(std::span<const double> u, const DriftCoupling& coupling, const SensitivityModel& model,
                     const Mesh& mesh, const ProblemCoefficients& coefficients)
{
    const std::vector<double> v = coupling.drift(mesh, u);
    return energy(u, v, coupling.kappa(), model, mesh, coefficients);
}

inline double mass(std::span<const double> u, const Mesh& mesh)
{
    double s = 0.0;
    for (double x : u)
        s += x;
    return mesh.dx() * s;
}

struct SteadyStateResidual {
    double value = 0.0;
    bool plateau = false; ///< some cell sits at 0 or M where g diverges
};

/// max_i s_i - min_i s_i with s_i = g(u_i) - (chi/D) v_i; zero iff u is a discrete steady state.
inline SteadyStateResidual steady_state_residual(std::span<const double> u, std::span<const double> v,
                                                 const SensitivityModel& model,
                                                 const ProblemCoefficients& coefficients)
{
    SteadyStateResidual out;
    std::vector<double> s(u.size());
    for (std::size_t k = 0; k < u.size(); ++k) {
        if (!model.interior(u[k])) {
            out.plateau = true;
            out.value = std::numeric_limits<double>::infinity();
            return out;
        }
        s[k] = model.g(u[k]) - v[k] / coefficients.ratio();
    }
    if (!s.empty()) {
        const auto [lo, hi] = std::minmax_element(s.begin(), s.end());
        out.value = *hi - *lo;
    }
    return out;
}

inline SteadyStateResidual steady_state_residual(std::span<const double> u, const DriftCoupling& coupling,
                                                 const SensitivityModel& model, const Mesh& mesh,
                                                 const ProblemCoefficients& coefficients)
{
    const std::vector<double> v = coupling.drift(mesh, u);
    return steady_state_residual(u, v, model, coefficients);
}

// ---------------------------------------------------------------------------
// Initial conditions

namespace detail {

inline std::vector<double> steady_profile(const SensitivityModel& model, std::span<const double> v, double scale,
                                          double mu)
{
    std::vector<double> u(v.size());
    for (std::size_t k = 0; k < v.size(); ++k)
        u[k] = model.g_inverse(scale * v[k] + mu);
    return u;
}

// mu with dx sum_i g^-1(scale v_i + mu) = target.
inline double fit_mu(const SensitivityModel& model, std::span<const double> v, double scale, const Mesh& mesh,
                     double target)
{
    if (!(target > 0.0))
        throw std::invalid_argument("steady-state initial condition: target mass must be positive");
    if (model.bounded() && target >= model.upper_bound())
        throw std::invalid_argument("steady-state initial condition: target mass exceeds M");
    auto f = [&](double mu) { return mass(steady_profile(model, v, scale, mu), mesh) - target; };
    double lo = -1.0;
    double hi = 1.0;
    while (f(lo) > 0.0)
        lo *= 2.0;
    while (f(hi) < 0.0)
        hi *= 2.0;
    std::uintmax_t iters = 200;
    auto root = boost::math::tools::toms748_solve(f, lo, hi, boost::math::tools::eps_tolerance<double>(52), iters);
    return 0.5 * (root.first + root.second);
}

} // namespace detail

/**
 * Initial density on the mesh.
 *
 * Noise values outside the admissible range are clamped; clamping more than
 * 10% of the cells is rejected. The steady-state spec iterates
 * v <- drift(u), u <- g^-1((chi/D) v + mu) until the update is below 1e-12
 * in the infinity norm (a single pass for a prescribed drift).
 */
inline std::vector<double> initial_condition(const InitialSpec& spec, const Mesh& mesh,
                                             const SensitivityModel& model, const DriftCoupling& coupling,
                                             const ProblemCoefficients& coefficients)
{
    const std::size_t n = mesh.size();
    auto check = [&](const std::vector<double>& u) {
        for (double x : u) {
            if (!model.admissible(x))
                throw std::invalid_argument("initial condition: value " + std::to_string(x) +
                                            " outside the admissible range");
        }
        return u;
    };

    if (const auto* c = std::get_if<ConstantInit>(&spec))
        return check(std::vector<double>(n, c->value));

    if (const auto* t = std::get_if<TableInit>(&spec)) {
        if (t->values.size() != n)
            throw std::invalid_argument("initial condition: table has " + std::to_string(t->values.size()) +
                                        " values for " + std::to_string(n) + " cells");
        return check(t->values);
    }

    if (const auto* noise = std::get_if<NoiseInit>(&spec)) {
        if (!model.admissible(noise->value))
            throw std::invalid_argument("initial condition: base value outside the admissible range");
        SplitMix64 rng(noise->seed);
        std::vector<double> u(n);
        std::size_t clamped = 0;
        for (std::size_t k = 0; k < n; ++k) {
            const double raw = noise->value * (1.0 + noise->amplitude * rng.symmetric());
            const double c = std::clamp(raw, 0.0, model.upper_bound());
            clamped += (c != raw);
            u[k] = c;
        }
        if (10 * clamped > n)
            throw std::invalid_argument("initial condition: noise amplitude too large (" + std::to_string(clamped) +
                                        " of " + std::to_string(n) + " cells clamped)");
        return u;
    }

    const auto& ss = std::get<SteadyStateInit>(spec);
    if (ss.mu.has_value() == ss.mass.has_value())
        throw std::invalid_argument("steady-state initial condition: give exactly one of mu and mass");
    const double scale = 1.0 / coefficients.ratio();
    auto profile_for = [&](std::span<const double> v) {
        const double mu = ss.mu ? *ss.mu : detail::fit_mu(model, v, scale, mesh, *ss.mass);
        return detail::steady_profile(model, v, scale, mu);
    };

    if (!coupling.depends_on_state())
        return check(profile_for(coupling.prescribed_values()));

    const double start = ss.mass ? *ss.mass : model.g_inverse(*ss.mu);
    std::vector<double> u(n, start);
    for (int it = 0; it < 100000; ++it) {
        const std::vector<double> v = coupling.drift(mesh, u);
        std::vector<double> next = profile_for(v);
        double change = 0.0;
        for (std::size_t k = 0; k < n; ++k)
            change = std::max(change, std::abs(next[k] - u[k]));
        u.swap(next);
        if (change <= 1e-12)
            return check(u);
        if (!std::isfinite(change))
            break;
    }
    throw std::invalid_argument("steady-state initial condition: fixed-point iteration did not converge");
}

// ---------------------------------------------------------------------------
// Time loop

struct DiagnosticsRecord {
    std::size_t step = 0;
    double t = 0.0;
    double mass = 0.0;
    double energy = 0.0;
    double linf_variation = 0.0; ///< ||u^n - u^{n-1}||_inf / ||u^{n-1}||_inf
    double min_u = 0.0;
    double max_u = 0.0;
    int newton_iters = 0;
    std::int64_t pseudo_steps = 0;
    bool fallback_used = false;
};

struct Snapshot {
    std::size_t step = 0;
    double t = 0.0;
    std::vector<double> u;
};

struct RunResult {
    std::vector<Snapshot> snapshots;
    std::vector<DiagnosticsRecord> diagnostics;
    std::vector<double> final_state;
    std::size_t steps = 0;
};

/// A step failed; carries what was computed up to the failing step.
class RunFailure : public StepFailure {
public:
    RunFailure(const std::string& what, std::size_t step_index, RunResult partial)
        : StepFailure(what, step_index), partial_(std::move(partial))
    {
    }

    const RunResult& partial() const { return partial_; }

private:
    RunResult partial_;
};

/// Called after every step with (step index, time, state, record).
using StepObserver = std::function<void(std::size_t, double, std::span<const double>, const DiagnosticsRecord&)>;

/**
 * Runs ceil(T / dt) implicit steps. The drift is recomputed from u^n before
 * each step (explicit in v). Diagnostics are recorded every
 * `diagnostics_every` steps, snapshots every `snapshot_every` steps and at
 * the first step reaching each requested time; the initial and final states
 * are always recorded.
 */
inline RunResult run(const RunConfig& config, const StepObserver& observer = {})
{
    config.validate();
    const Mesh mesh(config.cells);
    const SensitivityModel model = config.sensitivity.make_model();
    const DriftCoupling coupling = config.coupling.make_coupling(mesh);
    const ProblemCoefficients& coeffs = config.coefficients;

    std::vector<double> u = initial_condition(config.initial, mesh, model, coupling, coeffs);
    std::vector<double> v = coupling.drift(mesh, u);

    auto record = [&](std::size_t step, double t, double variation, const StepStats* stats) {
        DiagnosticsRecord r;
        r.step = step;
        r.t = t;
        r.mass = mass(u, mesh);
        r.energy = energy(u, v, coupling.kappa(), model, mesh, coeffs);
        r.linf_variation = variation;
        r.min_u = *std::min_element(u.begin(), u.end());
        r.max_u = *std::max_element(u.begin(), u.end());
        if (stats) {
            r.newton_iters = stats->newton_iterations;
            r.pseudo_steps = stats->pseudo_steps;
            r.fallback_used = stats->path == SolvePath::PseudoTime;
        }
        return r;
    };

    RunResult result;
    const std::size_t steps = config.step_count();
    std::vector<double> pending_times = config.output.snapshot_times;
    std::sort(pending_times.begin(), pending_times.end());
    std::size_t next_time = 0;
    while (next_time < pending_times.size() && pending_times[next_time] <= 0.0)
        ++next_time;

    result.diagnostics.push_back(record(0, 0.0, 0.0, nullptr));
    result.snapshots.push_back({0, 0.0, u});

    for (std::size_t n = 0; n < steps; ++n) {
        const double t = static_cast<double>(n + 1) * config.dt;
        StepOutcome step;
        try {
            FluxContext ctx(mesh, model, coeffs, u, v);
            step = advance_one_step(ctx, config.scheme, config.dt, config.solver);
        }
        catch (const std::exception& e) {
            result.final_state = u;
            result.steps = n;
            throw RunFailure("step " + std::to_string(n + 1) + " failed: " + e.what(), n + 1, std::move(result));
        }
        const double norm_old = max_norm(u);
        double diff = 0.0;
        for (std::size_t k = 0; k < u.size(); ++k)
            diff = std::max(diff, std::abs(step.u[k] - u[k]));
        const double variation = norm_old > 0.0 ? diff / norm_old : 0.0;

        u = std::move(step.u);
        v = coupling.depends_on_state() ? coupling.drift(mesh, u) : v;

        const bool last = (n + 1 == steps);
        const DiagnosticsRecord rec = record(n + 1, t, variation, &step.stats);
        if ((n + 1) % config.output.diagnostics_every == 0 || last)
            result.diagnostics.push_back(rec);

        bool snap = last || (config.output.snapshot_every > 0 && (n + 1) % config.output.snapshot_every == 0);
        while (next_time < pending_times.size() && t >= pending_times[next_time] - 1e-9 * config.dt) {
            snap = true;
            ++next_time;
        }
        if (snap)
            result.snapshots.push_back({n + 1, t, u});
        if (observer)
            observer(n + 1, t, u, rec);
    }
    result.final_state = u;
    result.steps = steps;
    return result;
}

} // namespace ksfv
