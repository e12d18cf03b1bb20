#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "grwlab/errors.hpp"
#include "grwlab/fft.hpp"
#include "grwlab/grid.hpp"
#include "grwlab/potential.hpp"

namespace grwlab {

using cplx = std::complex<double>;

inline constexpr double norm_tolerance = 1e-9;

/// Complex amplitudes on a uniform periodic grid plus the particle mass
/// (in internal mass units, i.e. multiples of the nucleon mass by default).
class WaveFunction {
public:
    WaveFunction(Grid1D grid, std::vector<cplx> amps, double mass)
        : grid_(grid), amps_(std::move(amps)), mass_(mass) {
        if (amps_.size() != grid_.size()) {
            throw ShapeError("amplitude count " + std::to_string(amps_.size()) +
                             " does not match grid size " + std::to_string(grid_.size()));
        }
        if (!(mass_ > 0.0) || !std::isfinite(mass_)) throw DomainError("mass must be finite and positive");
    }

    const Grid1D& grid() const noexcept { return grid_; }
    double mass() const noexcept { return mass_; }
    std::span<const cplx> amps() const noexcept { return amps_; }
    std::size_t size() const noexcept { return amps_.size(); }

    // Raw storage for in-place kernels (propagator, localization).
    std::vector<cplx>& data() noexcept { return amps_; }
    const std::vector<cplx>& data() const noexcept { return amps_; }

    double norm2() const noexcept {
        double s = 0.0;
        for (const auto& a : amps_) s += std::norm(a);
        return s * grid_.dx();
    }

    bool is_normalized() const noexcept { return std::abs(norm2() - 1.0) <= norm_tolerance; }

    bool compatible(const WaveFunction& other) const noexcept {
        return grid_ == other.grid_ && mass_ == other.mass_;
    }

private:
    Grid1D grid_;
    std::vector<cplx> amps_;
    double mass_;
};

/// Spin (two-level label) tensor pointer wavefunction: up (x) branch_up + down (x) branch_down.
struct HybridState {
    WaveFunction branch_up;
    WaveFunction branch_down;

    HybridState(WaveFunction up, WaveFunction down) : branch_up(std::move(up)), branch_down(std::move(down)) {
        if (!branch_up.compatible(branch_down)) {
            throw ShapeError("hybrid branches must share grid and mass");
        }
    }

    double weight_up() const noexcept { return branch_up.norm2(); }
    double weight_down() const noexcept { return branch_down.norm2(); }
    double norm2() const noexcept { return weight_up() + weight_down(); }
};

inline void scale_amplitudes(std::vector<cplx>& amps, double factor) {
    for (auto& a : amps) a *= factor;
}

inline void check_finite(std::span<const cplx> amps) {
    for (const auto& a : amps) {
        if (!std::isfinite(a.real()) || !std::isfinite(a.imag())) {
            throw NumericError("wavefunction contains non-finite amplitudes");
        }
    }
}

inline WaveFunction normalized(WaveFunction psi) {
    const double n2 = psi.norm2();
    if (!(n2 > 0.0) || !std::isfinite(n2)) throw DegeneracyError("cannot normalize a zero or non-finite state");
    scale_amplitudes(psi.data(), 1.0 / std::sqrt(n2));
    return psi;
}

/// Minimum-uncertainty packet (2 pi s^2)^(-1/4) exp(-(x-x0)^2/(4 s^2) + i p0 x),
/// renormalized on the grid. The packet must fit with six widths to spare.
inline WaveFunction gaussian_packet(const Grid1D& grid, double x0, double p0, double sigma, double mass) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw DomainError("packet width must be positive");
    if (x0 - 6.0 * sigma < grid.x_min()) {
        throw DomainError("packet does not fit grid: overflows the left edge (x0 - 6 sigma < x_min)");
    }
    if (x0 + 6.0 * sigma > grid.x_max()) {
        throw DomainError("packet does not fit grid: overflows the right edge (x0 + 6 sigma > x_max)");
    }
    std::vector<cplx> amps(grid.size());
    const double pref = std::pow(2.0 * std::numbers::pi * sigma * sigma, -0.25);
    for (std::size_t i = 0; i < amps.size(); ++i) {
        const double x = grid.x(i);
        const double u = x - x0;
        amps[i] = pref * std::exp(-u * u / (4.0 * sigma * sigma)) * std::polar(1.0, p0 * x);
    }
    return normalized(WaveFunction(grid, std::move(amps), mass));
}

/// Normalized ca*a + cb*b.
inline WaveFunction superpose(const WaveFunction& a, const WaveFunction& b, cplx ca, cplx cb) {
    if (!a.compatible(b)) throw ShapeError("superposed states must share grid and mass");
    std::vector<cplx> amps(a.size());
    for (std::size_t i = 0; i < amps.size(); ++i) amps[i] = ca * a.amps()[i] + cb * b.amps()[i];
    WaveFunction out(a.grid(), std::move(amps), a.mass());
    const double scale = std::norm(ca) * a.norm2() + std::norm(cb) * b.norm2();
    const double n2 = out.norm2();
    if (!(n2 > 1e-20 * scale) || n2 == 0.0) throw DegeneracyError("superposition has zero norm");
    return normalized(std::move(out));
}

/// Momentum-space amplitudes phi(k_j) = dx/sqrt(2 pi) sum_i psi_i e^{-i k_j x_i},
/// normalized so that sum |phi|^2 dk equals sum |psi|^2 dx.
inline std::vector<cplx> momentum_amplitudes(const WaveFunction& psi) {
    const auto& grid = psi.grid();
    std::vector<cplx> phi(psi.amps().begin(), psi.amps().end());
    Fft(grid.size()).forward(phi);
    // The DFT sums from index 0; the grid starts at x_min, hence the phase.
    const double pref = grid.dx() / std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t j = 0; j < phi.size(); ++j) {
        phi[j] *= pref * std::polar(1.0, -grid.k(j) * grid.x_min());
    }
    return phi;
}

struct Observables {
    double norm2 = 0.0;
    double mean_x = 0.0;
    double var_x = 0.0;
    double mean_p = 0.0;
    double var_p = 0.0;
    double energy = 0.0;
};

namespace detail {

// Shared kernel: `scratch` receives a copy of the amplitudes and is overwritten.
inline Observables observables_impl(const WaveFunction& psi, std::span<const double> v_values,
                                    std::vector<cplx>& scratch) {
    const auto& grid = psi.grid();
    const auto amps = psi.amps();
    check_finite(amps);

    double s0 = 0.0, sx = 0.0, sxx = 0.0, sv = 0.0;
    for (std::size_t i = 0; i < amps.size(); ++i) {
        const double w = std::norm(amps[i]);
        const double x = grid.x(i);
        s0 += w;
        sx += w * x;
        sxx += w * x * x;
        sv += w * v_values[i];
    }
    Observables o;
    o.norm2 = s0 * grid.dx();
    if (!(s0 > 0.0)) throw DegeneracyError("observables of a zero state");
    o.mean_x = sx / s0;
    o.var_x = std::max(0.0, sxx / s0 - o.mean_x * o.mean_x);

    scratch.assign(amps.begin(), amps.end());
    Fft(grid.size()).forward(scratch);
    double t0 = 0.0, tk = 0.0, tkk = 0.0;
    for (std::size_t j = 0; j < scratch.size(); ++j) {
        const double w = std::norm(scratch[j]);
        const double k = grid.k(j);
        t0 += w;
        tk += w * k;
        tkk += w * k * k;
    }
    o.mean_p = tk / t0;
    const double p2 = tkk / t0;
    o.var_p = std::max(0.0, p2 - o.mean_p * o.mean_p);
    o.energy = p2 / (2.0 * psi.mass()) + sv / s0;
    return o;
}

}  // namespace detail

/// Expectation values (internal units, hbar = 1) using spectral momentum.
inline Observables observables(const WaveFunction& psi, const Potential& potential) {
    const auto v = potential.sample(psi.grid(), psi.mass());
    std::vector<cplx> scratch;
    return detail::observables_impl(psi, v, scratch);
}

}  // namespace grwlab
