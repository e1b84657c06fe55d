#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace ksfv {

/**
 * Uniform cell-centred grid on the shifted unit interval.
 *
 * Cell i (1-based, i = 1..I) has centre x_i = i*dx and spans
 * ((i - 1/2) dx, (i + 1/2) dx), so the grid covers (dx/2, (I + 1/2) dx).
 * Storage is 0-based: index k holds cell k + 1.
 */
class Mesh {
public:
    explicit Mesh(std::size_t cells) : cells_(cells)
    {
        if (cells < 2)
            throw std::invalid_argument("Mesh: at least 2 cells required, got " + std::to_string(cells));
        dx_ = 1.0 / static_cast<double>(cells);
    }

    std::size_t size() const { return cells_; }
    double dx() const { return dx_; }

    /// Centre of the cell stored at 0-based index k.
    double center(std::size_t k) const
    {
        return static_cast<double>(k + 1) / static_cast<double>(cells_);
    }

    /// Right interface of the cell stored at index k, i.e. x_{k+1+1/2}.
    double right_interface(std::size_t k) const
    {
        return (static_cast<double>(k + 1) + 0.5) / static_cast<double>(cells_);
    }

    double left_interface(std::size_t k) const
    {
        return (static_cast<double>(k + 1) - 0.5) / static_cast<double>(cells_);
    }

    std::vector<double> centers() const
    {
        std::vector<double> x(cells_);
        for (std::size_t k = 0; k < cells_; ++k)
            x[k] = center(k);
        return x;
    }

private:
    std::size_t cells_;
    double dx_;
};

inline Mesh make_mesh(std::size_t cells) { return Mesh(cells); }

/// Diffusion D and chemosensitivity chi of u_t = (D u_x - chi phi(u) v_x)_x.
struct ProblemCoefficients {
    double diffusion = 1.0;
    double chemosensitivity = 1.0;

    ProblemCoefficients() = default;
    ProblemCoefficients(double d, double chi) : diffusion(d), chemosensitivity(chi) { validate(); }

    void validate() const
    {
        if (!(diffusion > 0.0))
            throw std::invalid_argument("ProblemCoefficients: diffusion must be positive");
        if (!(chemosensitivity > 0.0))
            throw std::invalid_argument("ProblemCoefficients: chemosensitivity must be positive");
    }

    /// D / chi, the weight of the entropy term in the potential.
    double ratio() const { return diffusion / chemosensitivity; }
};

} // namespace ksfv
