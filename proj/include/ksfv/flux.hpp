#pragma once

#include "ksfv/mesh.hpp"
#include "ksfv/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ksfv {

enum class SchemeKind { GradientFlow, ScharfetterGummel, Upwind };

inline std::string_view scheme_name(SchemeKind s)
{
    switch (s) {
    case SchemeKind::GradientFlow: return "gf";
    case SchemeKind::ScharfetterGummel: return "sg";
    case SchemeKind::Upwind: return "upwind";
    }
    return "unknown";
}

inline SchemeKind parse_scheme(std::string_view text)
{
    if (text == "gf" || text == "gradient-flow")
        return SchemeKind::GradientFlow;
    if (text == "sg" || text == "scharfetter-gummel")
        return SchemeKind::ScharfetterGummel;
    if (text == "upwind")
        return SchemeKind::Upwind;
    throw std::invalid_argument("unknown scheme '" + std::string(text) + "' (expected sg, gf or upwind)");
}

/// Lower clamp applied to u before evaluating g; the upper clamp is M - this.
inline constexpr double entropy_clamp = 1e-14;

/// Interface flux and its partial derivatives with respect to the left and right cell values.
struct FluxEval {
    double value = 0.0;
    double d_left = 0.0;
    double d_right = 0.0;
};

/**
 * Frozen data of one implicit Euler step: the old state u^n, the explicit
 * drift v^n, and everything the fluxes need from them.
 *
 * All fluxes approximate -(D u_x - chi phi(u) v_x) at interior interfaces,
 * so that u_i' = -(F_{i+1/2} - F_{i-1/2}) / dx. Boundary fluxes are zero
 * and never evaluated. With s_j = (D/chi) g(u_j) - v_j:
 *
 *   gradient flow       F = -(chi/dx) phi_up (s_{i+1} - s_i)
 *   Scharfetter-Gummel  F = -(chi/dx) w_up (e^{s_{i+1}} - e^{s_i})
 *   upwind              F = -(1/dx) [D (u_{i+1} - u_i) - chi phi_up (v_{i+1} - v_i)]
 *
 * with phi_up = u_donor psi(u_receiver) and the donor picked by the sign of
 * the driving difference (ties go to the first branch).
 */
class FluxContext {
public:
    FluxContext(Mesh mesh, SensitivityModel model, ProblemCoefficients coefficients, std::vector<double> u_old,
                std::vector<double> v_old)
        : mesh_(std::move(mesh)), model_(std::move(model)), coefficients_(coefficients),
          u_old_(std::move(u_old)), v_old_(std::move(v_old))
    {
        coefficients_.validate();
        const std::size_t n = mesh_.size();
        if (u_old_.size() != n || v_old_.size() != n)
            throw std::invalid_argument("FluxContext: vectors must have one entry per cell");
        for (std::size_t k = 0; k < n; ++k) {
            if (!model_.admissible(u_old_[k]))
                throw std::domain_error("FluxContext: u_old[" + std::to_string(k) + "] outside admissible range");
            if (!std::isfinite(v_old_[k]))
                throw std::domain_error("FluxContext: v_old must be finite");
        }
        g_old_.resize(n);
        for (std::size_t k = 0; k < n; ++k)
            g_old_[k] = clamped_g(u_old_[k]);
    }

    const Mesh& mesh() const { return mesh_; }
    const SensitivityModel& model() const { return model_; }
    const ProblemCoefficients& coefficients() const { return coefficients_; }
    const std::vector<double>& u_old() const { return u_old_; }
    const std::vector<double>& v_old() const { return v_old_; }
    std::size_t size() const { return mesh_.size(); }

    /// g evaluated at u clamped to [eps, M - eps]; finite on the closed range.
    double clamped_g(double u) const { return model_.g(clamp_open(u)); }

    /// g'(u) at the clamped point.
    double clamped_dg(double u) const { return model_.dg(clamp_open(u)); }

    /// u g'(u) = 1 / psi(u), the finite limit at u = 0. Clamped at the saturation end.
    double u_times_dg(double u) const
    {
        const double m = model_.upper_bound();
        return 1.0 / model_.psi(std::min(u, m - entropy_clamp));
    }

    double clamp_open(double u) const
    {
        const double m = model_.upper_bound();
        return std::clamp(u, entropy_clamp, m - entropy_clamp);
    }

    /// Potential s_j = (D/chi) g(u_j) - v_j^n.
    double potential(double u, std::size_t j) const { return coefficients_.ratio() * clamped_g(u) - v_old_[j]; }

    /// s_l - s_r for neighbouring cells, formed from the differences of g and v
    /// separately so a large common offset in v does not cancel digits.
    double potential_difference(double ul, std::size_t l, double ur, std::size_t r) const
    {
        return coefficients_.ratio() * (clamped_g(ul) - clamped_g(ur)) - (v_old_[l] - v_old_[r]);
    }

    double g_old(std::size_t j) const { return g_old_[j]; }

private:
    Mesh mesh_;
    SensitivityModel model_;
    ProblemCoefficients coefficients_;
    std::vector<double> u_old_;
    std::vector<double> v_old_;
    std::vector<double> g_old_;
};

namespace detail {

inline void check_interface(const FluxContext& ctx, std::span<const double> u_new, std::size_t i)
{
    if (u_new.size() != ctx.size())
        throw std::invalid_argument("flux: state size does not match mesh");
    if (i < 1 || i + 1 > ctx.size())
        throw std::invalid_argument("flux: interface index " + std::to_string(i) +
                                    " outside 1..I-1 (boundary fluxes are zero)");
}

} // namespace detail

/**
 * Gradient-flow flux at interface i + 1/2 (1-based, i = 1..I-1) with its
 * analytic partials.
 */
inline FluxEval gradient_flow_flux(const FluxContext& ctx, std::span<const double> u_new, std::size_t i)
{
    detail::check_interface(ctx, u_new, i);
    const std::size_t l = i - 1;
    const std::size_t r = i;
    const double ul = u_new[l];
    const double ur = u_new[r];
    const auto& m = ctx.model();
    const double ratio = ctx.coefficients().ratio();
    const double scale = ctx.coefficients().chemosensitivity / ctx.mesh().dx();
    const double diff = ctx.potential_difference(ul, l, ur, r);

    FluxEval f;
    if (diff >= 0.0) {
        const double psi_r = m.psi(ur);
        f.value = scale * ul * psi_r * diff;
        f.d_left = scale * (psi_r * diff + ratio * psi_r * ctx.u_times_dg(ul));
        f.d_right = scale * (ul * m.dpsi(ur) * diff - ratio * ul * psi_r * ctx.clamped_dg(ur));
    }
    else {
        const double psi_l = m.psi(ul);
        f.value = scale * ur * psi_l * diff;
        f.d_left = scale * (ur * m.dpsi(ul) * diff + ratio * ur * psi_l * ctx.clamped_dg(ul));
        f.d_right = scale * (psi_l * diff - ratio * psi_l * ctx.u_times_dg(ur));
    }
    return f;
}

/**
 * Scharfetter-Gummel flux. The interpolant carries e^{v^n - (D/chi) g(u^n)}
 * from the donor cell; it is merged with e^{s} before exponentiation so
 * that only e^{(D/chi)(g(u_new) - g(u_old))} and e^{-|s_{i+1} - s_i|}
 * are ever formed.
 */
inline FluxEval scharfetter_gummel_flux(const FluxContext& ctx, std::span<const double> u_new, std::size_t i)
{
    detail::check_interface(ctx, u_new, i);
    const std::size_t l = i - 1;
    const std::size_t r = i;
    const double ul = u_new[l];
    const double ur = u_new[r];
    const auto& m = ctx.model();
    const double ratio = ctx.coefficients().ratio();
    const double scale = ctx.coefficients().chemosensitivity / ctx.mesh().dx();
    const double diff = ctx.potential_difference(ul, l, ur, r); // s_l - s_r

    FluxEval f;
    if (diff <= 0.0) {
        // donor is the right cell; weight e^{v_r - (D/chi) g(u_r^n)} e^{s_r}
        const double big = std::exp(ratio * (ctx.clamped_g(ur) - ctx.g_old(r)));
        const double decay = std::exp(diff);
        const double gap = std::expm1(diff); // e^{s_l - s_r} - 1 <= 0
        const double psi_l = m.psi(ul);
        f.value = scale * ur * psi_l * big * gap;
        f.d_left = scale * (ur * m.dpsi(ul) * big * gap + ur * psi_l * big * decay * ratio * ctx.clamped_dg(ul));
        f.d_right = scale * (psi_l * big * gap - psi_l * big * ratio * ctx.u_times_dg(ur));
    }
    else {
        const double big = std::exp(ratio * (ctx.clamped_g(ul) - ctx.g_old(l)));
        const double decay = std::exp(-diff);
        const double gap = -std::expm1(-diff); // 1 - e^{s_r - s_l} > 0
        const double psi_r = m.psi(ur);
        f.value = scale * ul * psi_r * big * gap;
        f.d_left = scale * (psi_r * big * gap + psi_r * big * ratio * ctx.u_times_dg(ul));
        f.d_right = scale * (ul * m.dpsi(ur) * big * gap - ul * psi_r * big * decay * ratio * ctx.clamped_dg(ur));
    }
    return f;
}

/// Upwind flux: linear diffusion plus the drift term upwinded on the sign of v_{i+1} - v_i.
inline FluxEval upwind_flux(const FluxContext& ctx, std::span<const double> u_new, std::size_t i)
{
    detail::check_interface(ctx, u_new, i);
    const std::size_t l = i - 1;
    const std::size_t r = i;
    const double ul = u_new[l];
    const double ur = u_new[r];
    const auto& m = ctx.model();
    const double d = ctx.coefficients().diffusion;
    const double chi = ctx.coefficients().chemosensitivity;
    const double inv_dx = 1.0 / ctx.mesh().dx();
    const double dv = ctx.v_old()[r] - ctx.v_old()[l];

    FluxEval f;
    if (dv >= 0.0) {
        const double psi_r = m.psi(ur);
        f.value = -inv_dx * (d * (ur - ul) - chi * ul * psi_r * dv);
        f.d_left = inv_dx * (d + chi * psi_r * dv);
        f.d_right = inv_dx * (-d + chi * ul * m.dpsi(ur) * dv);
    }
    else {
        const double psi_l = m.psi(ul);
        f.value = -inv_dx * (d * (ur - ul) - chi * ur * psi_l * dv);
        f.d_left = inv_dx * (d + chi * ur * m.dpsi(ul) * dv);
        f.d_right = inv_dx * (-d + chi * psi_l * dv);
    }
    return f;
}

inline FluxEval evaluate_flux(SchemeKind scheme, const FluxContext& ctx, std::span<const double> u_new,
                              std::size_t i)
{
    switch (scheme) {
    case SchemeKind::GradientFlow: return gradient_flow_flux(ctx, u_new, i);
    case SchemeKind::ScharfetterGummel: return scharfetter_gummel_flux(ctx, u_new, i);
    case SchemeKind::Upwind: return upwind_flux(ctx, u_new, i);
    }
    return {};
}

inline double flux_gradient_flow(const FluxContext& ctx, std::span<const double> u_new, std::size_t i)
{
    return gradient_flow_flux(ctx, u_new, i).value;
}

inline double flux_scharfetter_gummel(const FluxContext& ctx, std::span<const double> u_new, std::size_t i)
{
    return scharfetter_gummel_flux(ctx, u_new, i).value;
}

inline double flux_upwind(const FluxContext& ctx, std::span<const double> u_new, std::size_t i)
{
    return upwind_flux(ctx, u_new, i).value;
}

/// All I + 1 interface fluxes, F_{1/2} = F_{I+1/2} = 0 included.
inline std::vector<double> interface_fluxes(SchemeKind scheme, const FluxContext& ctx, std::span<const double> u_new)
{
    const std::size_t n = ctx.size();
    std::vector<double> f(n + 1, 0.0);
    for (std::size_t i = 1; i < n; ++i)
        f[i] = evaluate_flux(scheme, ctx, u_new, i).value;
    return f;
}

} // namespace ksfv
