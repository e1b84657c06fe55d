#include "ksfv/drift.hpp"
#include "ksfv/implicit_solver.hpp"
#include "ksfv/random.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

using namespace ksfv;

namespace {

const SchemeKind all_schemes[] = {SchemeKind::GradientFlow, SchemeKind::ScharfetterGummel, SchemeKind::Upwind};

double total(std::span<const double> u)
{
    double s = 0.0;
    for (double x : u)
        s += x;
    return s;
}

FluxContext random_gks_context(SplitMix64& rng, std::size_t cells, const SensitivityModel& m, double chi)
{
    const Mesh mesh(cells);
    std::vector<double> u(cells);
    const double base = m.bounded() ? 0.5 * m.upper_bound() : 0.7;
    for (double& x : u)
        x = base * (1.0 + 0.3 * rng.symmetric());
    const auto coupling = DriftCoupling::elliptic_solve(mesh, KernelWeight::Unit);
    auto v = coupling.drift(mesh, u);
    return FluxContext(mesh, m, ProblemCoefficients(1.0, chi), u, v);
}

} // namespace

TEST(Tridiagonal, SolveMatchesMultiply)
{
    Tridiagonal a(5);
    for (std::size_t k = 0; k < 5; ++k) {
        a.diag[k] = 4.0 + k;
        if (k > 0)
            a.lower[k] = -1.0 - 0.1 * k;
        if (k + 1 < 5)
            a.upper[k] = -0.5;
    }
    const std::vector<double> x{1.0, -2.0, 0.5, 3.0, 0.25};
    const auto b = a.multiply(x);
    const auto y = solve_tridiagonal(a, b);
    for (std::size_t k = 0; k < 5; ++k)
        EXPECT_NEAR(y[k], x[k], 1e-14);
}

TEST(BracketedUpdate, StaysInsideAndIsFirstOrder)
{
    const double lo = 0.0;
    const double hi = 1.0;
    for (double u : {1e-30, 1e-8, 0.2, 0.5, 0.9, 1.0 - 1e-12}) {
        for (double du : {-10.0, -0.3, -1e-6, 0.0, 1e-6, 0.3, 10.0}) {
            const double next = detail::bracketed_update(u, du, lo, hi);
            EXPECT_GE(next, lo);
            EXPECT_LE(next, hi);
            if (du > 0.0) {
                EXPECT_GE(next, u);
            }
            if (du < 0.0) {
                EXPECT_LE(next, u);
            }
        }
        // small moves agree with u + du to second order
        const double gap = std::min(u - lo, hi - u);
        const double du = 1e-4 * gap;
        EXPECT_NEAR(detail::bracketed_update(u, du, lo, hi), u + du, 1e-7 * gap);
        EXPECT_NEAR(detail::bracketed_update(u, -du, lo, hi), u - du, 1e-7 * gap);
    }
    // a value on the bracket end moves by projection
    EXPECT_EQ(detail::bracketed_update(0.0, -1.0, lo, hi), 0.0);
    EXPECT_EQ(detail::bracketed_update(0.0, 0.25, lo, hi), 0.25);
}

TEST(Bracket, LogisticIsZeroAndM)
{
    const Mesh mesh(5);
    const std::vector<double> u{0.1, 0.4, 0.5, 0.9, 0.3};
    const FluxContext ctx(mesh, SensitivityModel::logistic(1.0), ProblemCoefficients(1.0, 10.0), u,
                          std::vector<double>(5, 0.2));
    for (SchemeKind s : all_schemes) {
        const Bracket b = build_bracket(StepSystem(ctx, s, 1.0));
        for (std::size_t k = 0; k < 5; ++k) {
            EXPECT_EQ(b.lower[k], 0.0);
            EXPECT_EQ(b.upper[k], 1.0);
        }
    }
}

TEST(Bracket, LinearFlatDriftSuper)
{
    const Mesh mesh(6);
    const std::vector<double> u(6, 1.0);
    const FluxContext ctx(mesh, SensitivityModel::linear(), ProblemCoefficients(1.0, 1.0), u,
                          std::vector<double>(6, 0.0));
    const Bracket b = build_bracket(StepSystem(ctx, SchemeKind::GradientFlow, 1.0));
    for (std::size_t k = 0; k < 6; ++k) {
        EXPECT_GE(std::log(b.upper[k]), 1.0 - 1e-12);
        EXPECT_GE(b.upper[k], u[k]);
    }
}

TEST(Bracket, SubAndSuperSolutionInequalities)
{
    SplitMix64 rng(5);
    for (const auto& m : {SensitivityModel::linear(), SensitivityModel::logistic(1.0), SensitivityModel::exponential()}) {
        for (SchemeKind s : all_schemes) {
            const FluxContext ctx = random_gks_context(rng, 9, m, 5.0);
            const StepSystem sys(ctx, s, 0.5);
            const Bracket b = build_bracket(sys);
            const auto r_sub = sys.residual(b.lower);
            const auto r_super = sys.residual(b.upper);
            for (std::size_t k = 0; k < 9; ++k) {
                EXPECT_LE(r_sub[k], 1e-12) << scheme_name(s) << ' ' << m.name();
                EXPECT_GE(r_super[k], -1e-12 * std::max(1.0, b.upper[k])) << scheme_name(s) << ' ' << m.name();
                EXPECT_LE(b.lower[k], ctx.u_old()[k]);
                EXPECT_GE(b.upper[k], ctx.u_old()[k]);
            }
        }
    }
}

TEST(Bracket, ZeroDataSubIsFixedPoint)
{
    const Mesh mesh(4);
    const std::vector<double> zero(4, 0.0);
    const FluxContext ctx(mesh, SensitivityModel::exponential(), ProblemCoefficients(1.0, 3.0), zero,
                          std::vector<double>{0.1, 0.2, 0.1, 0.0});
    for (SchemeKind s : all_schemes) {
        const StepSystem sys(ctx, s, 1.0);
        for (double r : sys.residual(build_bracket(sys).lower))
            EXPECT_EQ(r, 0.0);
    }
}

TEST(Newton, SteadyStateNeedsOnlyPolishing)
{
    const Mesh mesh(20);
    for (const auto& m : {SensitivityModel::linear(), SensitivityModel::logistic(1.0), SensitivityModel::exponential()}) {
        const ProblemCoefficients co(1.0, 4.0);
        std::vector<double> v(20), u(20);
        for (std::size_t k = 0; k < 20; ++k) {
            v[k] = weighted_well_potential(mesh.center(k));
            u[k] = m.g_inverse(v[k] / co.ratio() - 0.2);
        }
        for (SchemeKind s : {SchemeKind::GradientFlow, SchemeKind::ScharfetterGummel}) {
            const StepSystem sys(FluxContext(mesh, m, co, u, v), s, 1.0);
            Tridiagonal jac;
            const auto r0 = sys.residual_and_jacobian(u, jac);
            EXPECT_TRUE(sys.converged(r0, u, jac, SolverConfig{})) << scheme_name(s) << ' ' << m.name();
            const NewtonResult r = newton_step_solve(sys, build_bracket(sys), SolverConfig{});
            ASSERT_TRUE(r.converged);
            // at most the three polishing steps taken after convergence
            EXPECT_LE(r.iterations, 3) << scheme_name(s) << ' ' << m.name();
            for (std::size_t k = 0; k < 20; ++k)
                EXPECT_NEAR(r.u[k], u[k], 1e-10 * std::max(1.0, u[k]));
        }
    }
}

TEST(Newton, ZeroDataStaysZero)
{
    const Mesh mesh(6);
    const std::vector<double> zero(6, 0.0);
    const FluxContext ctx(mesh, SensitivityModel::linear(), ProblemCoefficients(1.0, 2.0), zero,
                          std::vector<double>(6, 0.5));
    for (SchemeKind s : all_schemes) {
        const StepOutcome out = advance_one_step(ctx, s, 1.0, SolverConfig{});
        for (double x : out.u)
            EXPECT_EQ(x, 0.0);
    }
}

TEST(Newton, FlatStateUnchanged)
{
    const Mesh mesh(10);
    const std::vector<double> u(10, 0.6);
    const FluxContext ctx(mesh, SensitivityModel::logistic(1.0), ProblemCoefficients(1.0, 9.0), u,
                          std::vector<double>(10, 0.3));
    for (SchemeKind s : all_schemes) {
        const StepOutcome out = advance_one_step(ctx, s, 5.0, SolverConfig{});
        for (double x : out.u)
            EXPECT_NEAR(x, 0.6, 1e-14);
    }
}

TEST(Newton, MassConservedAndBoundsKept)
{
    SplitMix64 rng(17);
    for (const auto& m : {SensitivityModel::linear(), SensitivityModel::logistic(1.0), SensitivityModel::exponential()}) {
        for (SchemeKind s : all_schemes) {
            for (double dt : {0.01, 1.0, 100.0}) {
                const FluxContext ctx = random_gks_context(rng, 30, m, m.bounded() ? 40.0 : 10.0);
                const StepOutcome out = advance_one_step(ctx, s, dt, SolverConfig{});
                const double before = total(ctx.u_old());
                EXPECT_NEAR(total(out.u), before, 1e-13 * before) << scheme_name(s) << ' ' << m.name() << " dt " << dt;
                for (double x : out.u) {
                    EXPECT_GE(x, 0.0);
                    EXPECT_LE(x, m.upper_bound());
                }
            }
        }
    }
}

TEST(Newton, ConvergedResidualRespectsTolerance)
{
    SplitMix64 rng(23);
    const FluxContext ctx = random_gks_context(rng, 25, SensitivityModel::exponential(), 6.0);
    const StepSystem sys(ctx, SchemeKind::ScharfetterGummel, 1.0);
    const NewtonResult r = newton_step_solve(sys, build_bracket(sys), SolverConfig{});
    ASSERT_TRUE(r.converged);
    EXPECT_LE(max_norm(sys.residual(r.u)), sys.tolerance(SolverConfig{}));
}

TEST(RoundingFloor, BoundsOneUlpPerturbations)
{
    // Moving every u_j by one ulp must not change r_i by more than its floor.
    const Mesh mesh(4);
    const std::vector<double> u{0.5, 0.999999, 0.2, 0.6};
    const FluxContext ctx(mesh, SensitivityModel::logistic(1.0), ProblemCoefficients(1.0, 40.0), u,
                          std::vector<double>{10.0, 40.0, 12.0, 11.0});
    const StepSystem sys(ctx, SchemeKind::ScharfetterGummel, 1.0);
    Tridiagonal jac;
    const auto r0 = sys.residual_and_jacobian(u, jac);
    const auto floor = sys.rounding_floor(u, jac);
    for (int pattern = 0; pattern < 16; ++pattern) {
        std::vector<double> p = u;
        for (std::size_t k = 0; k < 4; ++k)
            p[k] = std::nextafter(p[k], (pattern >> k) & 1 ? 2.0 : 0.0);
        const auto r1 = sys.residual(p);
        for (std::size_t k = 0; k < 4; ++k) {
            EXPECT_GT(floor[k], 0.0);
            EXPECT_LE(std::abs(r1[k] - r0[k]), floor[k]) << "pattern " << pattern << " cell " << k;
        }
    }
    const auto w = sys.acceptance_scale(u, jac, SolverConfig{});
    for (std::size_t k = 0; k < 4; ++k)
        EXPECT_EQ(w[k], std::max(floor[k], sys.tolerance(SolverConfig{})));
}

TEST(PseudoTime, MonotoneFromBothEndsAndAgreesWithNewton)
{
    SplitMix64 rng(29);
    for (const auto& m : {SensitivityModel::logistic(1.0), SensitivityModel::exponential()}) {
        const FluxContext ctx = random_gks_context(rng, 25, m, m.bounded() ? 40.0 : 8.0);
        for (SchemeKind s : all_schemes) {
            const StepSystem sys(ctx, s, 0.2);
            const Bracket b = build_bracket(sys);
            SolverConfig cfg;
            std::vector<std::vector<double>> sub_path;
            std::vector<std::vector<double>> super_path;
            const auto from_sub = monotone_pseudo_time_solve(sys, b, cfg, BracketEnd::Sub,
                                                             [&](std::int64_t, std::span<const double> u) {
                                                                 sub_path.emplace_back(u.begin(), u.end());
                                                             });
            const auto from_super = monotone_pseudo_time_solve(sys, b, cfg, BracketEnd::Super,
                                                               [&](std::int64_t, std::span<const double> u) {
                                                                   super_path.emplace_back(u.begin(), u.end());
                                                               });
            const NewtonResult newton = newton_step_solve(sys, b, cfg);
            ASSERT_TRUE(newton.converged);
            for (std::size_t k = 0; k < 25; ++k) {
                EXPECT_NEAR(from_sub.u[k], from_super.u[k], 1e-8);
                EXPECT_NEAR(from_sub.u[k], newton.u[k], 1e-8);
            }
            for (std::size_t p = 1; p < sub_path.size(); ++p) {
                for (std::size_t k = 0; k < 25; ++k)
                    EXPECT_GE(sub_path[p][k] - sub_path[p - 1][k], -1e-12);
            }
            const std::size_t common = std::min(sub_path.size(), super_path.size());
            for (std::size_t p = 0; p < common; ++p) {
                for (std::size_t k = 0; k < 25; ++k)
                    EXPECT_LE(sub_path[p][k], super_path[p][k] + 1e-12);
            }
        }
    }
}

TEST(PseudoTime, RejectsNonSubsolutionStart)
{
    const Mesh mesh(4);
    const std::vector<double> u{0.2, 0.8, 0.3, 0.5};
    const FluxContext ctx(mesh, SensitivityModel::logistic(1.0), ProblemCoefficients(1.0, 5.0), u,
                          std::vector<double>(4, 0.0));
    const StepSystem sys(ctx, SchemeKind::GradientFlow, 1.0);
    Bracket b = build_bracket(sys);
    b.lower = {0.9, 0.9, 0.9, 0.9};
    EXPECT_THROW(monotone_pseudo_time_solve(sys, b, SolverConfig{}, BracketEnd::Sub), std::invalid_argument);
}

TEST(AdvanceOneStep, LargeStepsOnLogisticBenchmark)
{
    const Mesh mesh(100);
    const auto model = SensitivityModel::logistic(1.0);
    const auto coupling = DriftCoupling::elliptic_solve(mesh, KernelWeight::Unit);
    SplitMix64 rng(42);
    std::vector<double> u(100);
    for (double& x : u)
        x = 0.5 * (1.0 + 0.01 * rng.symmetric());
    for (double dt : {0.01, 1.0, 100.0}) {
        const FluxContext ctx(mesh, model, ProblemCoefficients(1.0, 40.0), u, coupling.drift(mesh, u));
        for (SchemeKind s : all_schemes)
            EXPECT_NO_THROW(advance_one_step(ctx, s, dt, SolverConfig{})) << scheme_name(s) << " dt " << dt;
    }
}

TEST(SolverConfig, Validation)
{
    SolverConfig c;
    EXPECT_NO_THROW(c.validate());
    c.residual_tol = 0.0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = SolverConfig{};
    c.max_newton_iters = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = SolverConfig{};
    c.pseudo_time_step = -1.0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
}
