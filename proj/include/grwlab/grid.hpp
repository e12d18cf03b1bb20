#pragma once

#include <bit>
#include <cmath>
#include <cstddef>
#include <numbers>

#include "grwlab/errors.hpp"

namespace grwlab {

/// Uniform periodic grid of n (a power of two) points x_i = x_min + i*dx.
class Grid1D {
public:
    Grid1D(std::size_t n_points, double x_min, double dx)
        : n_(n_points), x_min_(x_min), dx_(dx) {
        if (n_points < 2 || !std::has_single_bit(n_points)) {
            throw DomainError("grid size must be a power of two >= 2");
        }
        if (!(dx > 0.0) || !std::isfinite(dx) || !std::isfinite(x_min) ||
            !std::isfinite(x_min + static_cast<double>(n_points) * dx)) {
            throw DomainError("grid spacing must be finite and positive");
        }
    }

    /// Grid centred on the origin.
    static Grid1D centered(std::size_t n_points, double dx) {
        return Grid1D(n_points, -0.5 * static_cast<double>(n_points) * dx, dx);
    }

    std::size_t size() const noexcept { return n_; }
    double x_min() const noexcept { return x_min_; }
    double dx() const noexcept { return dx_; }
    double length() const noexcept { return static_cast<double>(n_) * dx_; }
    double x_max() const noexcept { return x_min_ + length(); }
    double x(std::size_t i) const noexcept { return x_min_ + static_cast<double>(i) * dx_; }

    double dk() const noexcept { return 2.0 * std::numbers::pi / length(); }
    double k_max() const noexcept { return std::numbers::pi / dx_; }

    /// Wave number of FFT bin j in standard (unshifted) order.
    double k(std::size_t j) const noexcept {
        const auto n = static_cast<std::ptrdiff_t>(n_);
        auto jj = static_cast<std::ptrdiff_t>(j);
        if (jj >= n / 2) jj -= n;
        return dk() * static_cast<double>(jj);
    }

    /// Displacement wrapped to [-L/2, L/2).
    double min_image(double u) const noexcept {
        const double len = length();
        return u - len * std::floor(u / len + 0.5);
    }

    bool contains(double x) const noexcept { return x >= x_min_ && x < x_max(); }

    friend bool operator==(const Grid1D&, const Grid1D&) = default;

private:
    std::size_t n_;
    double x_min_;
    double dx_;
};

}  // namespace grwlab
