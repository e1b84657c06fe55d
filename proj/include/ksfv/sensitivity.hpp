#pragma once

#include "ksfv/special_functions.hpp"

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/tools/toms748_solve.hpp>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>

namespace ksfv {

enum class SensitivityKind { Linear, Logistic, Exponential, Custom };

namespace detail {

/// x ln x with the continuous extension 0 ln 0 = 0.
inline double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

inline const double ei_at_one = exponential_integral_ei(1.0);

} // namespace detail

/**
 * Chemotactic sensitivity phi(u) = u psi(u) with psi >= 0, psi' <= 0,
 * together with the entropy pair
 *
 *     g(u) = int_a^u ds / phi(s),    G(u) = int_0^u g(s) ds.
 *
 * Two model classes are supported: unbounded (psi > 0 for all u > 0) and
 * saturating (psi(M) = 0, admissible range [0, M]).
 *
 * Built-in anchors: Linear a = 1 (g = ln u), Logistic a = M/2
 * (g = ln(u / (M - u))), Exponential a = 1 (g = Ei(u) - Ei(1)).
 * The anchor only shifts g by a constant.
 *
 * Instances are immutable and cheap to copy.
 */
class SensitivityModel {
public:
    using ScalarFunction = std::function<double(double)>;

    static SensitivityModel linear() { return SensitivityModel(SensitivityKind::Linear, infinity(), 1.0); }

    static SensitivityModel logistic(double saturation = 1.0)
    {
        if (!(saturation > 0.0) || !std::isfinite(saturation))
            throw std::invalid_argument("logistic sensitivity: saturation M must be positive and finite");
        return SensitivityModel(SensitivityKind::Logistic, saturation, 0.5 * saturation);
    }

    static SensitivityModel exponential() { return SensitivityModel(SensitivityKind::Exponential, infinity(), 1.0); }

    /**
     * User-supplied psi and psi'. g and G are integrated numerically and g^-1
     * is root-found. Pass a finite saturation M for a saturating model
     * (psi(M) must vanish); the anchor must lie strictly inside the range.
     */
    static SensitivityModel custom(ScalarFunction psi, ScalarFunction dpsi, double anchor,
                                   double saturation = std::numeric_limits<double>::infinity())
    {
        if (!psi || !dpsi)
            throw std::invalid_argument("custom sensitivity: psi and dpsi are required");
        if (!(saturation > 0.0))
            throw std::invalid_argument("custom sensitivity: saturation must be positive");
        if (!(anchor > 0.0 && anchor < saturation))
            throw std::invalid_argument("custom sensitivity: anchor must lie inside (0, M)");
        SensitivityModel m(SensitivityKind::Custom, saturation, anchor);
        auto fns = std::make_shared<CustomFunctions>();
        fns->psi = std::move(psi);
        fns->dpsi = std::move(dpsi);
        fns->psi_at_zero = fns->psi(0.0);
        if (!(fns->psi_at_zero > 0.0))
            throw std::invalid_argument("custom sensitivity: psi(0) must be positive");
        m.custom_ = std::move(fns);
        return m;
    }

    SensitivityKind kind() const { return kind_; }
    double anchor() const { return anchor_; }
    bool bounded() const { return std::isfinite(upper_); }
    /// M for saturating models, +inf otherwise.
    double upper_bound() const { return upper_; }

    std::string name() const
    {
        switch (kind_) {
        case SensitivityKind::Linear: return "linear";
        case SensitivityKind::Logistic: return "logistic";
        case SensitivityKind::Exponential: return "exponential";
        case SensitivityKind::Custom: return "custom";
        }
        return "unknown";
    }

    /// Closed admissible range [0, M] (or [0, inf)).
    bool admissible(double u) const { return u >= 0.0 && u <= upper_; }
    /// Open range where g is finite.
    bool interior(double u) const { return u > 0.0 && u < upper_; }

    double psi(double u) const
    {
        require_closed(u, "psi");
        switch (kind_) {
        case SensitivityKind::Linear: return 1.0;
        case SensitivityKind::Logistic: return 1.0 - u / upper_;
        case SensitivityKind::Exponential: return std::exp(-u);
        case SensitivityKind::Custom: return custom_->psi(u);
        }
        return 0.0;
    }

    double dpsi(double u) const
    {
        require_closed(u, "dpsi");
        switch (kind_) {
        case SensitivityKind::Linear: return 0.0;
        case SensitivityKind::Logistic: return -1.0 / upper_;
        case SensitivityKind::Exponential: return -std::exp(-u);
        case SensitivityKind::Custom: return custom_->dpsi(u);
        }
        return 0.0;
    }

    double phi(double u) const { return u * psi(u); }

    double g(double u) const
    {
        require_open(u, "g");
        switch (kind_) {
        case SensitivityKind::Linear: return std::log(u);
        case SensitivityKind::Logistic: return std::log(u / (upper_ - u));
        case SensitivityKind::Exponential: return exponential_integral_ei(u) - detail::ei_at_one;
        case SensitivityKind::Custom: return custom_g(u);
        }
        return 0.0;
    }

    /// g'(u) = 1 / phi(u).
    double dg(double u) const
    {
        require_open(u, "dg");
        return 1.0 / phi(u);
    }

    double G(double u) const
    {
        require_closed(u, "G");
        switch (kind_) {
        case SensitivityKind::Linear: return detail::xlogx(u) - u;
        case SensitivityKind::Logistic:
            return detail::xlogx(u) + detail::xlogx(upper_ - u) - detail::xlogx(upper_);
        case SensitivityKind::Exponential:
            if (u == 0.0)
                return 0.0;
            return u * exponential_integral_ei(u) - std::expm1(u) - u * detail::ei_at_one;
        case SensitivityKind::Custom: return custom_G(u);
        }
        return 0.0;
    }

    /// Unique u with g(u) = y. Saturating models map y -> +inf to M.
    double g_inverse(double y) const
    {
        if (!std::isfinite(y))
            throw std::domain_error("g_inverse: argument must be finite");
        switch (kind_) {
        case SensitivityKind::Linear: return std::exp(y);
        case SensitivityKind::Logistic: return upper_ / (1.0 + std::exp(-y));
        case SensitivityKind::Exponential:
        case SensitivityKind::Custom: return solve_g_inverse(y);
        }
        return 0.0;
    }

private:
    struct CustomFunctions {
        ScalarFunction psi;
        ScalarFunction dpsi;
        double psi_at_zero = 1.0;
    };

    SensitivityModel(SensitivityKind kind, double upper, double anchor)
        : kind_(kind), upper_(upper), anchor_(anchor)
    {
    }

    static double infinity() { return std::numeric_limits<double>::infinity(); }

    void require_closed(double u, const char* what) const
    {
        if (!admissible(u))
            throw std::domain_error(std::string(what) + ": u = " + std::to_string(u) +
                                    " outside the admissible range of the " + name() + " model");
    }

    void require_open(double u, const char* what) const
    {
        if (!interior(u))
            throw std::domain_error(std::string(what) + ": u = " + std::to_string(u) +
                                    " not strictly inside the range of the " + name() + " model (g diverges)");
    }

    static boost::math::quadrature::tanh_sinh<double>& integrator()
    {
        thread_local boost::math::quadrature::tanh_sinh<double> quad;
        return quad;
    }

    // g(u) = ln(u/a)/psi(0) + int_a^u [1/(s psi(s)) - 1/(s psi(0))] ds; the
    // integrand of the correction stays bounded as s -> 0.
    double custom_g(double u) const
    {
        const double p0 = custom_->psi_at_zero;
        if (u == anchor_)
            return 0.0;
        auto correction = [this, p0](double s) {
            const double p = custom_->psi(s);
            return (p0 - p) / (s * p * p0);
        };
        const double lo = std::min(u, anchor_);
        const double hi = std::max(u, anchor_);
        double integral = integrator().integrate(correction, lo, hi, 1e-13);
        if (u < anchor_)
            integral = -integral;
        return std::log(u / anchor_) / p0 + integral;
    }

    // Integration by parts: G(u) = u g(u) - int_0^u ds / psi(s).
    double custom_G(double u) const
    {
        if (u == 0.0)
            return 0.0;
        if (u == upper_) {
            auto gs = [this](double s) { return custom_g(s); };
            return integrator().integrate(gs, 0.0, u, 1e-12);
        }
        auto inv_psi = [this](double s) { return 1.0 / custom_->psi(s); };
        return u * custom_g(u) - integrator().integrate(inv_psi, 0.0, u, 1e-13);
    }

    double solve_g_inverse(double y) const
    {
        double lo = anchor_;
        double hi = anchor_;
        if (y > 0.0) {
            for (int k = 0; g(hi) < y; ++k) {
                lo = hi;
                hi = bounded() ? upper_ - 0.5 * (upper_ - hi) : 2.0 * hi;
                if (k > 2000 || !interior(hi))
                    return bounded() ? upper_ : infinity();
            }
        }
        else if (y < 0.0) {
            for (int k = 0; g(lo) > y; ++k) {
                hi = lo;
                lo *= 0.5;
                if (lo < 1e-300)
                    return 0.0;
            }
        }
        else {
            return anchor_;
        }
        std::uintmax_t max_iter = 200;
        auto f = [this, y](double u) { return g(u) - y; };
        const double flo = f(lo);
        const double fhi = f(hi);
        if (flo == 0.0)
            return lo;
        if (fhi == 0.0)
            return hi;
        auto root = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi,
                                                      boost::math::tools::eps_tolerance<double>(53), max_iter);
        const double a = root.first;
        const double b = root.second;
        return std::abs(f(a)) <= std::abs(f(b)) ? a : b;
    }

    SensitivityKind kind_;
    double upper_;
    double anchor_;
    std::shared_ptr<const CustomFunctions> custom_;
};

} // namespace ksfv
