#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "grwlab/errors.hpp"
#include "grwlab/fft.hpp"
#include "grwlab/potential.hpp"
#include "grwlab/qstate.hpp"

namespace grwlab {

/// Symmetric (Strang) split-step Fourier integrator for
///   i d/dt psi = -1/(2m) d^2/dx^2 psi + V(x) psi      (hbar = 1)
/// with periodic boundaries.
///
/// Each step is half potential kick, full kinetic drift in k-space, half kick.
/// For a free particle the kick is the identity and n steps collapse into one
/// kinetic phase exp(-i k^2 n dt / 2m), so free evolution costs one FFT pair
/// regardless of n. Non-free steps are applied one by one without fusing
/// half-kicks across step boundaries, so splitting a run into segments never
/// changes the floating-point result.
class SplitStepPropagator {
public:
    static constexpr double kick_guard = 0.5;
    static constexpr double phase_guard = std::numbers::pi;

    SplitStepPropagator(const Grid1D& grid, double mass, const Potential& potential, double dt)
        : grid_(grid), mass_(mass), dt_(dt), free_(potential.is_free()), fft_(grid.size()) {
        if (!(mass > 0.0)) throw DomainError("mass must be positive");
        if (!(dt != 0.0) || !std::isfinite(dt)) throw StepSizeError("time step must be finite and non-zero");
        v_ = potential.sample(grid, mass);
        double v_max = 0.0;
        for (double v : v_) v_max = std::max(v_max, std::abs(v));
        if (std::abs(dt) * v_max >= kick_guard) {
            throw StepSizeError("stability guard violated: |dt| * max|V| = " +
                                std::to_string(std::abs(dt) * v_max) + " >= 0.5");
        }
        const double k_max = grid.k_max();
        if (std::abs(dt) * k_max * k_max / (2.0 * mass) >= phase_guard) {
            throw StepSizeError("spectral phase guard violated: |dt| k_max^2 / 2m = " +
                                std::to_string(std::abs(dt) * k_max * k_max / (2.0 * mass)) + " >= pi");
        }
        if (!free_) {
            half_kick_.resize(grid.size());
            drift_.resize(grid.size());
            const double inv_n = 1.0 / static_cast<double>(grid.size());
            for (std::size_t i = 0; i < v_.size(); ++i) half_kick_[i] = std::polar(1.0, -0.5 * dt * v_[i]);
            for (std::size_t j = 0; j < drift_.size(); ++j) {
                const double k = grid.k(j);
                // 1/n of the inverse transform is folded into the drift.
                drift_[j] = std::polar(inv_n, -dt * k * k / (2.0 * mass));
            }
        }
    }

    const Grid1D& grid() const noexcept { return grid_; }
    double mass() const noexcept { return mass_; }
    double dt() const noexcept { return dt_; }
    bool is_free() const noexcept { return free_; }
    std::span<const double> potential_values() const noexcept { return v_; }

    /// Advances amplitudes in place by n_steps steps of size dt.
    void advance(std::vector<cplx>& amps, std::int64_t n_steps) const {
        if (n_steps < 0) throw DomainError("step count must be non-negative");
        if (amps.size() != grid_.size()) throw ShapeError("amplitudes do not match propagator grid");
        if (n_steps == 0) return;
        if (free_) {
            const double t = static_cast<double>(n_steps) * dt_;
            fft_.forward(amps);
            const double inv_n = 1.0 / static_cast<double>(grid_.size());
            for (std::size_t j = 0; j < amps.size(); ++j) {
                const double k = grid_.k(j);
                amps[j] *= std::polar(inv_n, -t * k * k / (2.0 * mass_));
            }
            fft_.inverse_unscaled(amps);
            return;
        }
        for (std::int64_t s = 0; s < n_steps; ++s) {
            for (std::size_t i = 0; i < amps.size(); ++i) amps[i] *= half_kick_[i];
            fft_.forward(amps);
            for (std::size_t j = 0; j < amps.size(); ++j) amps[j] *= drift_[j];
            fft_.inverse_unscaled(amps);
            for (std::size_t i = 0; i < amps.size(); ++i) amps[i] *= half_kick_[i];
        }
    }

    WaveFunction evolve(const WaveFunction& psi, std::int64_t n_steps) const {
        if (psi.grid() != grid_ || psi.mass() != mass_) {
            throw ShapeError("state grid or mass does not match the propagator");
        }
        WaveFunction out = psi;
        advance(out.data(), n_steps);
        return out;
    }

private:
    Grid1D grid_;
    double mass_;
    double dt_;
    bool free_;
    Fft fft_;
    std::vector<double> v_;
    std::vector<cplx> half_kick_;
    std::vector<cplx> drift_;
};

/// n_steps Strang steps of size dt. dt may be negative (backward evolution).
inline WaveFunction split_step(const WaveFunction& psi, const Potential& v, double dt, std::int64_t n_steps) {
    if (!psi.is_normalized()) throw PreconditionError("split_step requires a normalized state");
    if (n_steps == 0) return psi;
    return SplitStepPropagator(psi.grid(), psi.mass(), v, dt).evolve(psi, n_steps);
}

/// Width of a free Gaussian packet: sqrt(s0^2 + (t / (2 m s0))^2), hbar = 1.
inline double spread_analytic(double sigma0, double mass, double t) {
    if (!(sigma0 > 0.0) || !(mass > 0.0) || !(t >= 0.0)) {
        throw DomainError("spread_analytic requires sigma0 > 0, mass > 0, t >= 0");
    }
    const double g = t / (2.0 * mass * sigma0);
    return std::sqrt(sigma0 * sigma0 + g * g);
}

struct EvolutionSample {
    double t = 0.0;
    Observables obs;
};

struct EvolutionResult {
    std::vector<EvolutionSample> samples;
    WaveFunction final_state;
};

/// Step index schedule shared by pure evolution and collapse trajectories:
/// samples at 0, every, 2*every, ..., and always at n_total.
inline std::vector<std::int64_t> sample_schedule(std::int64_t n_total, std::int64_t every) {
    if (every <= 0) throw DomainError("sample interval must be positive");
    std::vector<std::int64_t> out;
    for (std::int64_t s = 0; s < n_total; s += every) out.push_back(s);
    out.push_back(n_total);
    return out;
}

inline std::int64_t step_count(double t_total, double dt) {
    if (!(t_total > 0.0) || !(dt > 0.0)) throw DomainError("total time and time step must be positive");
    const double ratio = t_total / dt;
    const auto n = static_cast<std::int64_t>(std::llround(ratio));
    if (n < 1) throw StepSizeError("time step exceeds the total time");
    if (std::abs(ratio - static_cast<double>(n)) > 1e-6 * std::max(1.0, ratio)) {
        throw StepSizeError("total time is not an integer multiple of the time step");
    }
    return n;
}

/// Pure Schroedinger run with observables sampled on the standard schedule.
/// Free evolution restarts every segment from the initial state, so sampling
/// never perturbs the trajectory.
inline EvolutionResult schrodinger_run(const WaveFunction& psi0, const Potential& v, double t_total, double dt,
                                       std::int64_t sample_every) {
    if (!psi0.is_normalized()) throw PreconditionError("evolution requires a normalized state");
    const SplitStepPropagator prop(psi0.grid(), psi0.mass(), v, dt);
    const std::int64_t n_total = step_count(t_total, dt);
    const auto schedule = sample_schedule(n_total, sample_every);

    EvolutionResult result{{}, psi0};
    std::vector<cplx> scratch;
    WaveFunction current = psi0;
    std::int64_t step = 0;
    for (std::int64_t s : schedule) {
        if (prop.is_free()) {
            current = psi0;
            prop.advance(current.data(), s);
        } else {
            prop.advance(current.data(), s - step);
        }
        step = s;
        result.samples.push_back({static_cast<double>(s) * dt,
                                  detail::observables_impl(current, prop.potential_values(), scratch)});
    }
    result.final_state = std::move(current);
    return result;
}

}  // namespace grwlab
