#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace ksfv {

/**
 * Exponential integral Ei(x) for x > 0.
 *
 * Power series gamma + ln x + sum x^k / (k k!) for x <= 40 (all terms are
 * positive there, so there is no cancellation), asymptotic expansion
 * e^x/x sum k!/x^k beyond. Relative accuracy is ~1e-15 away from the root
 * x0 ~ 0.3725 where only absolute accuracy is meaningful.
 */
inline double exponential_integral_ei(double x)
{
    if (!(x > 0.0))
        throw std::domain_error("exponential_integral_ei: argument must be positive");
    constexpr double eps = std::numeric_limits<double>::epsilon();
    if (x <= 40.0) {
        double term = 1.0;
        double sum = 0.0;
        for (int k = 1; k < 500; ++k) {
            term *= x / k;
            const double contrib = term / k;
            sum += contrib;
            if (contrib < eps * sum)
                break;
        }
        return std::numbers::egamma + std::log(x) + sum;
    }
    if (x > 709.0)
        return std::numeric_limits<double>::infinity();
    double term = 1.0;
    double sum = 1.0;
    for (int k = 1; k < 60; ++k) {
        const double prev = term;
        term *= k / x;
        if (term > prev)
            break;
        sum += term;
        if (term < eps * sum)
            break;
    }
    return std::exp(x) / x * sum;
}

} // namespace ksfv
