#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace ksfv {

/// Tridiagonal matrix in band storage. lower[0] and upper[n-1] are unused.
struct Tridiagonal {
    std::vector<double> lower;
    std::vector<double> diag;
    std::vector<double> upper;

    explicit Tridiagonal(std::size_t n = 0) : lower(n, 0.0), diag(n, 0.0), upper(n, 0.0) {}

    std::size_t size() const { return diag.size(); }

    std::vector<double> multiply(std::span<const double> x) const
    {
        const std::size_t n = size();
        std::vector<double> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            double s = diag[i] * x[i];
            if (i > 0)
                s += lower[i] * x[i - 1];
            if (i + 1 < n)
                s += upper[i] * x[i + 1];
            y[i] = s;
        }
        return y;
    }
};

/**
 * Thomas algorithm. Stable without pivoting for the diagonally dominant
 * M-matrices produced by the elliptic operator and the monotone schemes.
 */
inline std::vector<double> solve_tridiagonal(const Tridiagonal& a, std::span<const double> rhs)
{
    const std::size_t n = a.size();
    if (rhs.size() != n)
        throw std::invalid_argument("solve_tridiagonal: size mismatch");
    std::vector<double> c(n), x(n);
    double denom = a.diag[0];
    if (denom == 0.0)
        throw std::runtime_error("solve_tridiagonal: zero pivot");
    c[0] = n > 1 ? a.upper[0] / denom : 0.0;
    x[0] = rhs[0] / denom;
    for (std::size_t i = 1; i < n; ++i) {
        denom = a.diag[i] - a.lower[i] * c[i - 1];
        if (denom == 0.0)
            throw std::runtime_error("solve_tridiagonal: zero pivot");
        c[i] = i + 1 < n ? a.upper[i] / denom : 0.0;
        x[i] = (rhs[i] - a.lower[i] * x[i - 1]) / denom;
    }
    for (std::size_t i = n - 1; i-- > 0;)
        x[i] -= c[i] * x[i + 1];
    return x;
}

} // namespace ksfv
