#pragma once

#include "ksfv/errors.hpp"
#include "ksfv/mesh.hpp"
#include "ksfv/tridiagonal.hpp"

#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ksfv {

/**
 * Green function of -v'' + v = u on (0, 1) with v'(0) = v'(1) = 0:
 *
 *     K(x, y) = lambda (e^x + e^-x)(e^y + e^(2-y)),  x <= y,
 *     lambda  = 1 / (2 (e^2 - 1)),
 *
 * extended symmetrically to x > y.
 */
inline double kernel_value(double x, double y)
{
    if (!(x >= 0.0 && x <= 1.0 && y >= 0.0 && y <= 1.0))
        throw std::domain_error("kernel_value: arguments must lie in [0, 1]");
    if (x > y)
        std::swap(x, y);
    const double e2 = std::exp(2.0);
    const double lambda = 1.0 / (2.0 * (e2 - 1.0));
    return lambda * (std::exp(x) + std::exp(-x)) * (std::exp(y) + std::exp(2.0 - y));
}

/// Row-major dense square matrix.
struct DenseMatrix {
    std::size_t n = 0;
    std::vector<double> data;

    DenseMatrix() = default;
    explicit DenseMatrix(std::size_t size) : n(size), data(size * size, 0.0) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * n + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * n + j]; }
};

/// K_ij = K(x_i, x_j); the lower triangle is copied from the upper one.
inline DenseMatrix kernel_matrix(const Mesh& mesh)
{
    const std::size_t n = mesh.size();
    DenseMatrix k(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            const double value = kernel_value(mesh.center(i), mesh.center(j));
            k(i, j) = value;
            k(j, i) = value;
        }
    }
    return k;
}

enum class CouplingMode { Prescribed, KernelConvolution, EllipticSolve };

/**
 * Scaling of the discrete convolution v_i = w sum_j K_ij u_j.
 * Quadrature: w = dx (midpoint rule for int K(x, y) u(y) dy).
 * Unit: w = 1, the literal pointwise sum; equivalent to multiplying the
 * coupling strength by I.
 */
enum class KernelWeight { Quadrature, Unit };

/**
 * Source of the drift potential v_i.
 *
 * Prescribed: v_i = v(x_i) independent of u (Fokker-Planck, energy weight 1).
 * KernelConvolution / EllipticSolve: v depends linearly on u through the
 * symmetric Green operator (Keller-Segel, energy weight 1/2).
 */
class DriftCoupling {
public:
    static DriftCoupling prescribed(std::vector<double> values)
    {
        for (double v : values) {
            if (!std::isfinite(v) || v < 0.0)
                throw std::invalid_argument("prescribed drift: values must be finite and nonnegative");
        }
        DriftCoupling c(CouplingMode::Prescribed, KernelWeight::Quadrature);
        c.prescribed_ = std::move(values);
        return c;
    }

    static DriftCoupling prescribed(const Mesh& mesh, const std::function<double(double)>& field)
    {
        std::vector<double> values(mesh.size());
        for (std::size_t k = 0; k < mesh.size(); ++k)
            values[k] = field(mesh.center(k));
        return prescribed(std::move(values));
    }

    static DriftCoupling kernel_convolution(const Mesh& mesh, KernelWeight weight = KernelWeight::Quadrature)
    {
        DriftCoupling c(CouplingMode::KernelConvolution, weight);
        c.kernel_ = kernel_matrix(mesh);
        return c;
    }

    /// Centred second difference for -v'' + v = u with mirror ghosts v_0 = v_1, v_{I+1} = v_I.
    static DriftCoupling elliptic_solve(const Mesh& mesh, KernelWeight weight = KernelWeight::Quadrature)
    {
        DriftCoupling c(CouplingMode::EllipticSolve, weight);
        const std::size_t n = mesh.size();
        const double inv_dx2 = 1.0 / (mesh.dx() * mesh.dx());
        Tridiagonal& a = c.operator_;
        a = Tridiagonal(n);
        for (std::size_t i = 0; i < n; ++i) {
            const bool edge = (i == 0 || i + 1 == n);
            a.diag[i] = 1.0 + (edge ? 1.0 : 2.0) * inv_dx2;
            if (i > 0)
                a.lower[i] = -inv_dx2;
            if (i + 1 < n)
                a.upper[i] = -inv_dx2;
        }
        return c;
    }

    CouplingMode mode() const { return mode_; }
    KernelWeight weight() const { return weight_; }
    bool depends_on_state() const { return mode_ != CouplingMode::Prescribed; }

    /// Energy weight kappa: 1 for a prescribed potential, 1/2 for the symmetric interaction.
    double kappa() const { return mode_ == CouplingMode::Prescribed ? 1.0 : 0.5; }

    const std::vector<double>& prescribed_values() const { return prescribed_; }
    const DenseMatrix& kernel() const { return kernel_; }
    const Tridiagonal& elliptic_operator() const { return operator_; }

    std::vector<double> drift(const Mesh& mesh, std::span<const double> u) const
    {
        const std::size_t n = mesh.size();
        if (u.size() != n)
            throw std::invalid_argument("drift_from_state: state size does not match mesh");
        for (double x : u) {
            if (!std::isfinite(x))
                throw InvalidState("drift_from_state: non-finite density");
        }
        const double w = weight_ == KernelWeight::Quadrature ? mesh.dx() : 1.0;
        switch (mode_) {
        case CouplingMode::Prescribed:
            if (prescribed_.size() != n)
                throw std::invalid_argument("drift_from_state: prescribed table size does not match mesh");
            return prescribed_;
        case CouplingMode::KernelConvolution: {
            std::vector<double> v(n, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < n; ++j)
                    s += kernel_(i, j) * u[j];
                v[i] = w * s;
            }
            return v;
        }
        case CouplingMode::EllipticSolve: {
            if (operator_.size() != n)
                throw std::invalid_argument("drift_from_state: elliptic operator built for another mesh");
            std::vector<double> v = solve_tridiagonal(operator_, u);
            if (weight_ == KernelWeight::Unit) {
                for (double& x : v)
                    x /= mesh.dx();
            }
            return v;
        }
        }
        return {};
    }

private:
    DriftCoupling(CouplingMode mode, KernelWeight weight) : mode_(mode), weight_(weight) {}

    CouplingMode mode_;
    KernelWeight weight_;
    std::vector<double> prescribed_;
    DenseMatrix kernel_;
    Tridiagonal operator_;
};

inline std::vector<double> drift_from_state(const DriftCoupling& coupling, const Mesh& mesh,
                                            std::span<const double> u)
{
    return coupling.drift(mesh, u);
}

/// v(x) = x (1 - x) |x - 0.3|, the weighted double-well potential of the Fokker-Planck benchmark.
inline double weighted_well_potential(double x) { return x * (1.0 - x) * std::abs(x - 0.3); }

} // namespace ksfv
