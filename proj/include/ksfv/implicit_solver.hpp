#pragma once

#include "ksfv/errors.hpp"
#include "ksfv/flux.hpp"
#include "ksfv/tridiagonal.hpp"

#include <boost/math/tools/toms748_solve.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ksfv {

struct SolverConfig {
    /// Absolute infinity-norm tolerance, scaled by max(1, ||u_old||_inf).
    double residual_tol = 1e-10;
    int max_newton_iters = 50;
    /// Fixed pseudo-time step; 0 selects 0.9 / max_i J_ii, refreshed every 100 steps.
    double pseudo_time_step = 0.0;
    std::int64_t max_pseudo_steps = 1'000'000;

    void validate() const
    {
        if (!(residual_tol > 0.0))
            throw std::invalid_argument("SolverConfig: residual_tol must be positive");
        if (max_newton_iters <= 0 || max_pseudo_steps <= 0)
            throw std::invalid_argument("SolverConfig: iteration caps must be positive");
        if (pseudo_time_step < 0.0)
            throw std::invalid_argument("SolverConfig: pseudo_time_step must be nonnegative");
    }
};

inline double max_norm(std::span<const double> x)
{
    double m = 0.0;
    for (double v : x) {
        if (!std::isfinite(v))
            return std::numeric_limits<double>::infinity();
        m = std::max(m, std::abs(v));
    }
    return m;
}

/**
 * Nonlinear system of one implicit Euler step
 *
 *     r_i(u) = u_i - u_i^n + (dt/dx) (F_{i+1/2}(u) - F_{i-1/2}(u)),  i = 1..I,
 *
 * i.e. u_i + A_{i+1/2}(u_i, u_{i+1}) - A_{i-1/2}(u_{i-1}, u_i) = u_i^n with
 * A = (dt/dx) F. Fluxes telescope, so sum_i r_i = sum_i (u_i - u_i^n).
 */
class StepSystem {
public:
    StepSystem(FluxContext ctx, SchemeKind scheme, double dt) : ctx_(std::move(ctx)), scheme_(scheme), dt_(dt)
    {
        if (!(dt > 0.0) || !std::isfinite(dt))
            throw std::invalid_argument("StepSystem: time step must be positive and finite");
    }

    const FluxContext& context() const { return ctx_; }
    SchemeKind scheme() const { return scheme_; }
    double dt() const { return dt_; }
    std::size_t size() const { return ctx_.size(); }

    double tolerance(const SolverConfig& cfg) const
    {
        return cfg.residual_tol * std::max(1.0, max_norm(ctx_.u_old()));
    }

    /**
     * Per-cell residual attainable in double precision at u: the change of
     * r_i when every u_j moves by one unit in the last place, plus the
     * rounding of the two (possibly large, nearly cancelling) interface
     * fluxes. Near a saturation end the flux partials grow like 1/(M - u),
     * so this can exceed the configured tolerance.
     */
    std::vector<double> rounding_floor(std::span<const double> u, const Tridiagonal& jac) const
    {
        const std::size_t n = size();
        auto ulp = [](double x) {
            x = std::abs(x);
            return std::nextafter(x, std::numeric_limits<double>::infinity()) - x;
        };
        const double lambda = dt_ / ctx_.mesh().dx();
        const std::vector<double> f = interface_fluxes(scheme_, ctx_, u);
        std::vector<double> floor(n);
        for (std::size_t k = 0; k < n; ++k) {
            double s = std::abs(jac.diag[k]) * ulp(u[k]) + ulp(ctx_.u_old()[k]) +
                       lambda * (ulp(f[k]) + ulp(f[k + 1]));
            if (k > 0)
                s += std::abs(jac.lower[k]) * ulp(u[k - 1]);
            if (k + 1 < n)
                s += std::abs(jac.upper[k]) * ulp(u[k + 1]);
            floor[k] = rounding_slack * s;
        }
        return floor;
    }

    /// Per-cell acceptance threshold max(tolerance, rounding floor).
    std::vector<double> acceptance_scale(std::span<const double> u, const Tridiagonal& jac,
                                         const SolverConfig& cfg) const
    {
        const double tol = tolerance(cfg);
        std::vector<double> w = rounding_floor(u, jac);
        for (double& x : w)
            x = std::max(x, tol);
        return w;
    }

    /// max_i |r_i| / w_i; at most 1 means converged.
    static double scaled_norm(std::span<const double> r, std::span<const double> w)
    {
        double m = 0.0;
        for (std::size_t k = 0; k < r.size(); ++k)
            m = std::max(m, std::abs(r[k]) / w[k]);
        return m;
    }

    /// True when every |r_i| is below the tolerance or below its rounding floor.
    bool converged(std::span<const double> r, std::span<const double> u, const Tridiagonal& jac,
                   const SolverConfig& cfg) const
    {
        if (max_norm(r) <= tolerance(cfg))
            return true;
        return scaled_norm(r, acceptance_scale(u, jac, cfg)) <= 1.0;
    }

    static constexpr double rounding_slack = 16.0;

    std::vector<double> residual(std::span<const double> u) const
    {
        const std::size_t n = size();
        const double lambda = dt_ / ctx_.mesh().dx();
        std::vector<double> r(n);
        for (std::size_t k = 0; k < n; ++k)
            r[k] = u[k] - ctx_.u_old()[k];
        for (std::size_t i = 1; i < n; ++i) {
            const double f = evaluate_flux(scheme_, ctx_, u, i).value;
            r[i - 1] += lambda * f;
            r[i] -= lambda * f;
        }
        return r;
    }

    /// Residual and its tridiagonal Jacobian from the analytic flux partials.
    std::vector<double> residual_and_jacobian(std::span<const double> u, Tridiagonal& jac) const
    {
        const std::size_t n = size();
        const double lambda = dt_ / ctx_.mesh().dx();
        std::vector<double> r(n);
        jac = Tridiagonal(n);
        for (std::size_t k = 0; k < n; ++k) {
            r[k] = u[k] - ctx_.u_old()[k];
            jac.diag[k] = 1.0;
        }
        for (std::size_t i = 1; i < n; ++i) {
            const FluxEval f = evaluate_flux(scheme_, ctx_, u, i);
            const std::size_t l = i - 1;
            const std::size_t rr = i;
            r[l] += lambda * f.value;
            r[rr] -= lambda * f.value;
            jac.diag[l] += lambda * f.d_left;
            jac.upper[l] += lambda * f.d_right;
            jac.lower[rr] -= lambda * f.d_left;
            jac.diag[rr] -= lambda * f.d_right;
        }
        return r;
    }

    Tridiagonal jacobian(std::span<const double> u) const
    {
        Tridiagonal jac;
        residual_and_jacobian(u, jac);
        return jac;
    }

private:
    FluxContext ctx_;
    SchemeKind scheme_;
    double dt_;
};

/**
 * Tridiagonal Jacobian of the residual at u_new:
 * entry (i, j) = d r_i / d u_j for |i - j| <= 1.
 */
inline Tridiagonal flux_jacobian_band(const FluxContext& ctx, std::span<const double> u_new, SchemeKind scheme,
                                      double dt)
{
    return StepSystem(ctx, scheme, dt).jacobian(u_new);
}

/// True when every interface map A(a, b) is nondecreasing in a and nonincreasing in b at u.
inline bool monotone_sign_pattern(const FluxContext& ctx, std::span<const double> u, SchemeKind scheme)
{
    for (std::size_t i = 1; i < ctx.size(); ++i) {
        const FluxEval f = evaluate_flux(scheme, ctx, u, i);
        if (!(f.d_left >= 0.0) || !(f.d_right <= 0.0))
            return false;
    }
    return true;
}

/// Ordered sub- and supersolution of the step system.
struct Bracket {
    std::vector<double> lower;
    std::vector<double> upper;
};

namespace detail {

// Zero-flux profile of the upwind scheme started from value `start` in the
// first cell: D (U_{i+1} - U_i) = chi phi_up (v_{i+1} - v_i).
inline std::vector<double> upwind_zero_flux_profile(const FluxContext& ctx, double start)
{
    const auto& m = ctx.model();
    const double d = ctx.coefficients().diffusion;
    const double chi = ctx.coefficients().chemosensitivity;
    const auto& v = ctx.v_old();
    std::vector<double> p(ctx.size());
    p[0] = start;
    for (std::size_t k = 0; k + 1 < p.size(); ++k) {
        const double dv = v[k + 1] - v[k];
        const double ul = p[k];
        if (dv < 0.0) {
            p[k + 1] = d * ul / (d - chi * dv * m.psi(ul));
            continue;
        }
        if (dv == 0.0 || ul == 0.0) {
            p[k + 1] = ul;
            continue;
        }
        auto f = [&](double x) { return d * x - chi * dv * ul * m.psi(x) - d * ul; };
        double lo = ul;
        double hi = ul * (1.0 + chi * dv * m.psi(0.0) / d);
        const double flo = f(lo);
        const double fhi = f(hi);
        if (flo >= 0.0) {
            p[k + 1] = lo;
            continue;
        }
        if (fhi <= 0.0) {
            p[k + 1] = hi;
            continue;
        }
        std::uintmax_t iters = 200;
        auto root = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi,
                                                      boost::math::tools::eps_tolerance<double>(52), iters);
        p[k + 1] = root.second;
    }
    return p;
}

} // namespace detail

/**
 * Sub- and supersolution of the step system.
 *
 * The subsolution is 0. For saturating models the supersolution is M. For
 * unbounded models it is a zero-flux state lying above u^n:
 * gradient flow / Scharfetter-Gummel use U_i = g^-1((chi/D)(C + v_i^n)) with
 * C = max_i[(D/chi) g(max(u_i^n, a)) - v_i^n] + 1; the upwind scheme uses its
 * own discrete zero-flux profile, scaled up until it dominates u^n.
 */
inline Bracket build_bracket(const StepSystem& system)
{
    const FluxContext& ctx = system.context();
    const auto& m = ctx.model();
    const std::size_t n = ctx.size();
    const auto& u_old = ctx.u_old();
    const auto& v = ctx.v_old();

    Bracket b;
    b.lower.assign(n, 0.0);
    if (m.bounded()) {
        b.upper.assign(n, m.upper_bound());
        return b;
    }

    const double ratio = ctx.coefficients().ratio();
    b.upper.resize(n);
    if (system.scheme() == SchemeKind::Upwind) {
        double start = std::max(1.0, max_norm(u_old));
        for (int attempt = 0; attempt < 200; ++attempt) {
            b.upper = detail::upwind_zero_flux_profile(ctx, start);
            double need = 0.0;
            for (std::size_t k = 0; k < n; ++k)
                need = std::max(need, u_old[k] / b.upper[k]);
            if (need <= 1.0)
                break;
            start *= 1.01 * need;
        }
    }
    else {
        double c = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < n; ++k)
            c = std::max(c, ratio * m.g(std::max(u_old[k], m.anchor())) - v[k]);
        c += 1.0;
        for (std::size_t k = 0; k < n; ++k)
            b.upper[k] = m.g_inverse((c + v[k]) / ratio);
    }
    for (std::size_t k = 0; k < n; ++k) {
        if (!std::isfinite(b.upper[k]) || b.upper[k] < u_old[k])
            throw UnsupportedModel("build_bracket: no finite supersolution (g must grow without bound)");
    }
    return b;
}

inline void project_onto(std::vector<double>& u, const Bracket& b)
{
    for (std::size_t k = 0; k < u.size(); ++k)
        u[k] = std::clamp(u[k], b.lower[k], b.upper[k]);
}

struct NewtonResult {
    std::vector<double> u;
    bool converged = false;
    int iterations = 0;
    double residual = std::numeric_limits<double>::infinity();
};

namespace detail {

// u + du, except that the move towards a bracket end is bent so the end is
// approached geometrically and never reached: u moves by
// gap (1 - e^{-|du| / gap}) where gap is the distance to the end it heads
// for. Agrees with u + du to first order. Cells already on an end move
// additively and are clipped.
inline double bracketed_update(double u, double du, double lo, double hi)
{
    if (!(u > lo && u < hi))
        return std::clamp(u + du, lo, hi);
    if (du >= 0.0) {
        const double gap = hi - u;
        const double x = du / gap;
        return x > 0.5 ? hi - gap * std::exp(-x) : u - gap * std::expm1(-x);
    }
    const double gap = u - lo;
    const double x = du / gap;
    return x < -0.5 ? lo + gap * std::exp(x) : u + gap * std::expm1(x);
}

} // namespace detail

/**
 * Damped Newton with Armijo backtracking. Trial iterates stay inside the
 * bracket [sub_i, super_i] (see detail::bracketed_update). After convergence, up to three further
 * full steps polish the residual towards rounding level (mass conservation
 * is only as good as sum_i r_i).
 *
 * Converged means StepSystem::converged. Non-convergence is reported
 * through `converged`, not thrown.
 */
inline NewtonResult newton_step_solve(const StepSystem& system, const Bracket& bracket, const SolverConfig& cfg,
                                      std::optional<std::vector<double>> initial_guess = std::nullopt)
{
    cfg.validate();
    NewtonResult out;
    out.u = initial_guess ? *initial_guess : system.context().u_old();
    project_onto(out.u, bracket);

    Tridiagonal jac;
    std::vector<double> r = system.residual_and_jacobian(out.u, jac);
    std::vector<double> w = system.acceptance_scale(out.u, jac, cfg);
    double merit = StepSystem::scaled_norm(r, w);
    int polish = 0;
    for (int it = 0; it < cfg.max_newton_iters; ++it) {
        if (merit <= 1.0) {
            out.converged = true;
            if (polish++ >= 3 || merit == 0.0)
                break;
        }
        std::vector<double> rhs(r.size());
        for (std::size_t k = 0; k < r.size(); ++k)
            rhs[k] = -r[k];
        std::vector<double> delta;
        try {
            delta = solve_tridiagonal(jac, rhs);
        }
        catch (const std::runtime_error&) {
            break;
        }

        // The merit weights are frozen at the current iterate so that cells
        // sitting at their rounding floor do not block progress elsewhere.
        double step = 1.0;
        bool accepted = false;
        std::vector<double> trial(out.u.size());
        while (step > 1e-10) {
            for (std::size_t k = 0; k < trial.size(); ++k)
                trial[k] = detail::bracketed_update(out.u[k], step * delta[k], bracket.lower[k], bracket.upper[k]);
            const double trial_merit = StepSystem::scaled_norm(system.residual(trial), w);
            const bool polishing = out.converged;
            if (polishing ? trial_merit < merit : trial_merit <= (1.0 - 1e-4 * step) * merit) {
                accepted = true;
                break;
            }
            if (polishing)
                break;
            step *= 0.5;
        }
        ++out.iterations;
        if (!accepted)
            break;
        out.u = trial;
        r = system.residual_and_jacobian(out.u, jac);
        w = system.acceptance_scale(out.u, jac, cfg);
        merit = StepSystem::scaled_norm(r, w);
    }
    out.residual = max_norm(r);
    out.converged = merit <= 1.0;
    return out;
}

enum class BracketEnd { Sub, Super };

struct PseudoTimeResult {
    std::vector<double> u;
    std::int64_t steps = 0;
    double residual = std::numeric_limits<double>::infinity();
    double final_step = 0.0;
};

/// Called with (accepted step count, iterate) for the start vector and every accepted step.
using PseudoTimeObserver = std::function<void(std::int64_t, std::span<const double>)>;

/**
 * Explicit Euler integration of du/dtau = -r(u) from one end of the bracket.
 *
 * With dtau <= 1 / max_i J_ii the update u - dtau r(u) is order-preserving,
 * so iterates from the subsolution increase and iterates from the
 * supersolution decrease towards the unique solution. A step whose result
 * leaves the sub (super) solution set by more than 1e-12 is rejected and
 * dtau halved.
 */
inline PseudoTimeResult monotone_pseudo_time_solve(const StepSystem& system, const Bracket& bracket,
                                                   const SolverConfig& cfg, BracketEnd start,
                                                   const PseudoTimeObserver& observer = {})
{
    cfg.validate();
    constexpr double order_tol = 1e-12;
    const double tol = system.tolerance(cfg);
    const double sign = start == BracketEnd::Sub ? 1.0 : -1.0;

    PseudoTimeResult out;
    out.u = start == BracketEnd::Sub ? bracket.lower : bracket.upper;
    Tridiagonal jac;
    std::vector<double> r = system.residual_and_jacobian(out.u, jac);
    for (double ri : r) {
        if (sign * ri > order_tol + tol)
            throw std::invalid_argument(start == BracketEnd::Sub
                                            ? "monotone_pseudo_time_solve: start vector is not a subsolution"
                                            : "monotone_pseudo_time_solve: start vector is not a supersolution");
    }

    auto auto_step = [&](const Tridiagonal& j) {
        double dmax = 0.0;
        for (double d : j.diag)
            dmax = std::max(dmax, d);
        return 0.9 / dmax;
    };
    double dtau = cfg.pseudo_time_step > 0.0 ? cfg.pseudo_time_step : auto_step(jac);
    if (observer)
        observer(0, out.u);

    std::vector<double> trial(out.u.size());
    double norm = max_norm(r);
    while (!system.converged(r, out.u, jac, cfg)) {
        if (out.steps >= cfg.max_pseudo_steps)
            throw ConvergenceFailure("monotone_pseudo_time_solve: step limit reached", out.u, norm);
        if (dtau < 1e-300)
            throw ConvergenceFailure("monotone_pseudo_time_solve: pseudo-time step underflow", out.u, norm);
        for (std::size_t k = 0; k < trial.size(); ++k)
            trial[k] = std::clamp(out.u[k] - dtau * r[k], bracket.lower[k], bracket.upper[k]);
        Tridiagonal trial_jac;
        std::vector<double> trial_r = system.residual_and_jacobian(trial, trial_jac);
        bool keeps_order = max_norm(trial_r) < std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; keeps_order && k < trial_r.size(); ++k)
            keeps_order = sign * trial_r[k] <= order_tol;
        if (!keeps_order) {
            dtau *= 0.5;
            continue;
        }
        out.u.swap(trial);
        r.swap(trial_r);
        jac = std::move(trial_jac);
        norm = max_norm(r);
        ++out.steps;
        if (observer)
            observer(out.steps, out.u);
        if (cfg.pseudo_time_step == 0.0 && out.steps % 100 == 0)
            dtau = auto_step(jac);
    }
    out.residual = norm;
    out.final_step = dtau;
    return out;
}

enum class SolvePath { Newton, PseudoTime };

struct StepStats {
    SolvePath path = SolvePath::Newton;
    int newton_iterations = 0;
    /// Intermediate step sizes solved before the full one (0 when plain Newton succeeded).
    int continuation_stages = 0;
    std::int64_t pseudo_steps = 0;
    double residual = 0.0;
};

struct StepOutcome {
    std::vector<double> u;
    StepStats stats;
};

namespace detail {

inline bool step_admissible(const StepSystem& system, std::span<const double> u, const SolverConfig& cfg)
{
    const auto& m = system.context().model();
    const auto& u_old = system.context().u_old();
    double before = 0.0;
    double after = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) {
        if (!m.admissible(u[k]))
            return false;
        before += u_old[k];
        after += u[k];
    }
    if (std::abs(after - before) > 1e-12 * before + 1e-300)
        return false;
    Tridiagonal jac;
    const std::vector<double> r = system.residual_and_jacobian(u, jac);
    return system.converged(r, u, jac, cfg);
}

} // namespace detail

namespace detail {

// Newton continued in the step size: solves the same system with theta * dt
// for increasing theta, each stage started from the previous solution. The
// bracket does not depend on dt, so it is shared by all stages.
inline NewtonResult continued_newton(const FluxContext& ctx, SchemeKind scheme, double dt, const Bracket& bracket,
                                     const SolverConfig& cfg, StepStats& stats)
{
    std::vector<double> start = ctx.u_old();
    double theta = 0.0;
    double increment = 0.25;
    NewtonResult last;
    while (increment > 1e-6) {
        const double next = std::min(1.0, theta + increment);
        const StepSystem stage(ctx, scheme, next * dt);
        NewtonResult trial = newton_step_solve(stage, bracket, cfg, start);
        stats.newton_iterations += trial.iterations;
        if (!trial.converged) {
            increment *= 0.25;
            continue;
        }
        theta = next;
        start = trial.u;
        if (theta == 1.0)
            return trial;
        ++stats.continuation_stages;
        increment *= 2.0;
        last = std::move(trial);
    }
    last.converged = false;
    return last;
}

} // namespace detail

/**
 * One implicit Euler step: Newton first, then Newton continued in the step
 * size, then the monotone pseudo-time flow from the subsolution (followed by
 * a Newton polish). The returned state is admissible, conserves mass to 1e-12 relative and meets
 * the residual tolerance (or its rounding floor), or StepFailure is thrown.
 */
inline StepOutcome advance_one_step(const FluxContext& ctx, SchemeKind scheme, double dt, const SolverConfig& cfg)
{
    const StepSystem system(ctx, scheme, dt);
    const Bracket bracket = build_bracket(system);

    StepOutcome out;
    NewtonResult newton = newton_step_solve(system, bracket, cfg);
    out.stats.newton_iterations = newton.iterations;
    if (newton.converged && detail::step_admissible(system, newton.u, cfg)) {
        out.u = std::move(newton.u);
        out.stats.residual = newton.residual;
        return out;
    }
    NewtonResult continued = detail::continued_newton(ctx, scheme, dt, bracket, cfg, out.stats);
    if (continued.converged && detail::step_admissible(system, continued.u, cfg)) {
        out.u = std::move(continued.u);
        out.stats.residual = continued.residual;
        return out;
    }

    out.stats.path = SolvePath::PseudoTime;
    PseudoTimeResult flow;
    try {
        flow = monotone_pseudo_time_solve(system, bracket, cfg, BracketEnd::Sub);
    }
    catch (const ConvergenceFailure& e) {
        throw StepFailure(std::string("advance_one_step: Newton failed and ") + e.what());
    }
    out.stats.pseudo_steps = flow.steps;
    NewtonResult polish = newton_step_solve(system, bracket, cfg, flow.u);
    out.stats.newton_iterations += polish.iterations;
    if (polish.converged && polish.residual <= flow.residual) {
        out.u = std::move(polish.u);
        out.stats.residual = polish.residual;
    }
    else {
        out.u = std::move(flow.u);
        out.stats.residual = flow.residual;
    }
    if (!detail::step_admissible(system, out.u, cfg))
        throw StepFailure("advance_one_step: no admissible solution (bounds or mass conservation violated)");
    return out;
}

} // namespace ksfv
