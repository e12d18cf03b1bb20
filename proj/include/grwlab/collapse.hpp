#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "grwlab/errors.hpp"
#include "grwlab/fft.hpp"
#include "grwlab/grid.hpp"
#include "grwlab/propagator.hpp"
#include "grwlab/qstate.hpp"
#include "grwlab/rng.hpp"
#include "grwlab/units.hpp"

namespace grwlab {

/// Spontaneous localization parameters. lambda_si is the per-nucleon rate in
/// s^-1 and r_c the localization length in internal units. The process acts on
/// the single simulated coordinate at the total rate N*lambda, or (m/m_N)*lambda
/// when mass_scaling is set (m taken from the state being localized).
struct CollapseParams {
    double lambda_si = 1e-16;
    double r_c = 1.0;
    double n_nucleons = 1.0;
    bool mass_scaling = false;

    void validate() const {
        if (!(lambda_si >= 0.0) || !std::isfinite(lambda_si)) throw DomainError("lambda must be finite and >= 0");
        if (!(r_c > 0.0) || !std::isfinite(r_c)) throw DomainError("r_c must be finite and > 0");
        if (!(n_nucleons >= 1.0) || !std::isfinite(n_nucleons)) throw DomainError("n_nucleons must be finite and >= 1");
    }

    /// Total collapse rate in s^-1 for a body of the given mass (in nucleon masses).
    double total_rate_si(double mass_in_mn = 1.0) const {
        validate();
        const double rate = (mass_scaling ? mass_in_mn : n_nucleons) * lambda_si;
        if (!std::isfinite(rate) || rate < 0.0) throw DomainError("total collapse rate is not finite");
        return rate;
    }

    /// Total rate in inverse internal time; `mass` is in internal mass units.
    double total_rate_internal(double mass, const UnitSystem& units) const {
        return convert_rate(total_rate_si(units.mass_in_nucleons(mass)), units);
    }
};

struct CollapseEvent {
    double t = 0.0;       // internal time of the hit
    double center = 0.0;  // hit centre a (internal length)
    // ||exp(-(x-a)^2/(2 r_c^2)) psi||^2 before renormalization, i.e. the
    // retained norm under a unit-peak localization profile; lies in (0, 1].
    double branch_weight = 1.0;
};

struct TrajectoryRecord {
    std::vector<CollapseEvent> events;
    std::vector<double> sample_times;
    std::vector<Observables> observables_at_samples;
    WaveFunction final_state;
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;
};

/// Dephasing rate (s^-1) of coherence between components separated by d:
/// Lambda_total * (1 - exp(-d^2 / (4 r_c^2))).
inline double effective_reduction_rate(double d, const CollapseParams& params, double mass_in_mn = 1.0) {
    if (!(d >= 0.0)) throw DomainError("separation must be non-negative");
    const double total = params.total_rate_si(mass_in_mn);
    if (std::isinf(d)) return total;
    return total * -std::expm1(-d * d / (4.0 * params.r_c * params.r_c));
}

/// Gaussian localization operator L(a) = (pi r_c^2)^(-1/4) exp(-(x-a)^2/(2 r_c^2))
/// on a periodic grid (distances taken as minimum images), together with the
/// hit-centre density p(a) = ||L(a) psi||^2 and its sampler.
class Localizer {
public:
    Localizer(const Grid1D& grid, double r_c) : grid_(grid), r_c_(r_c), fft_(grid.size()) {
        if (!(r_c > 0.0) || !std::isfinite(r_c)) throw DomainError("r_c must be finite and > 0");
        if (r_c >= 0.125 * grid.length()) {
            throw DomainError("r_c must be much smaller than the periodic grid length");
        }
        amp_norm_ = std::pow(std::numbers::pi * r_c * r_c, -0.25);
        const double dens_norm = 1.0 / std::sqrt(std::numbers::pi * r_c * r_c);
        kernel_hat_.resize(grid.size());
        for (std::size_t j = 0; j < kernel_hat_.size(); ++j) {
            const double u = grid.min_image(static_cast<double>(j) * grid.dx());
            kernel_hat_[j] = dens_norm * std::exp(-u * u / (r_c * r_c)) * grid.dx();
        }
        fft_.forward(kernel_hat_);
        const double inv_n = 1.0 / static_cast<double>(grid.size());
        for (auto& c : kernel_hat_) c *= inv_n;
    }

    const Grid1D& grid() const noexcept { return grid_; }
    double r_c() const noexcept { return r_c_; }

    /// p(a_j) for every grid point from a position density rho_i = |psi_i|^2
    /// (summed over branches where relevant). Periodic FFT convolution with
    /// (pi r_c^2)^(-1/2) exp(-u^2/r_c^2).
    std::vector<double> density_from_rho(std::span<const double> rho) const {
        if (rho.size() != grid_.size()) throw ShapeError("density does not match grid");
        std::vector<cplx> buf(rho.begin(), rho.end());
        fft_.forward(buf);
        for (std::size_t j = 0; j < buf.size(); ++j) buf[j] *= kernel_hat_[j];
        fft_.inverse_unscaled(buf);
        std::vector<double> p(buf.size());
        for (std::size_t j = 0; j < p.size(); ++j) p[j] = std::max(0.0, buf[j].real());
        return p;
    }

    std::vector<double> density(std::span<const cplx> amps) const {
        std::vector<double> rho(amps.size());
        for (std::size_t i = 0; i < rho.size(); ++i) rho[i] = std::norm(amps[i]);
        return density_from_rho(rho);
    }

    /// Inverse-CDF draw of a hit centre. Grid point j owns the cell
    /// [x_j - dx/2, x_j + dx/2); the CDF is linear inside each cell.
    double sample_center(std::span<const double> p, RngStream& rng) const {
        if (p.size() != grid_.size()) throw ShapeError("density does not match grid");
        std::vector<double> cdf(p.size());
        double acc = 0.0;
        for (std::size_t j = 0; j < p.size(); ++j) {
            acc += p[j];
            cdf[j] = acc;
        }
        if (!(acc > 0.0) || !std::isfinite(acc)) throw ZeroSupportError("hit density vanishes everywhere");
        const double target = rng.uniform() * acc;
        auto it = std::upper_bound(cdf.begin(), cdf.end(), target);
        if (it == cdf.end()) --it;
        // Skip zero-mass cells that upper_bound can land on at the boundary.
        while (p[static_cast<std::size_t>(it - cdf.begin())] <= 0.0 && it != cdf.begin()) --it;
        const auto j = static_cast<std::size_t>(it - cdf.begin());
        const double below = j == 0 ? 0.0 : cdf[j - 1];
        const double frac = std::clamp((target - below) / p[j], 0.0, 1.0);
        double a = grid_.x(j) + (frac - 0.5) * grid_.dx();
        if (a < grid_.x_min()) a += grid_.length();
        if (a >= grid_.x_max()) a -= grid_.length();
        return a;
    }

    /// Multiplies amplitudes by L(a) in place and returns ||L(a) psi||^2.
    double apply(std::vector<cplx>& amps, double a) const {
        if (amps.size() != grid_.size()) throw ShapeError("amplitudes do not match grid");
        const double inv = 1.0 / (2.0 * r_c_ * r_c_);
        double s = 0.0;
        for (std::size_t i = 0; i < amps.size(); ++i) {
            const double u = grid_.min_image(grid_.x(i) - a);
            amps[i] *= amp_norm_ * std::exp(-u * u * inv);
            s += std::norm(amps[i]);
        }
        return s * grid_.dx();
    }

    /// Converts ||L(a) psi||^2 to the retained norm under a unit-peak profile.
    double peak_normalized(double weight) const noexcept {
        return std::min(1.0, weight / (amp_norm_ * amp_norm_));
    }

private:
    Grid1D grid_;
    double r_c_;
    Fft fft_;
    double amp_norm_;
    std::vector<cplx> kernel_hat_;
};

inline constexpr double zero_support_threshold = 1e-300;

/// p(a) = ||L(a) psi||^2 tabulated at the grid points.
inline std::vector<double> hit_position_density(const WaveFunction& psi, double r_c) {
    if (!psi.is_normalized()) throw PreconditionError("hit density requires a normalized state");
    return Localizer(psi.grid(), r_c).density(psi.amps());
}

/// One localization hit at centre a: returns (L(a) psi / ||L(a) psi||, ||L(a) psi||^2).
inline std::pair<WaveFunction, double> apply_hit(const WaveFunction& psi, double a, double r_c) {
    if (!psi.is_normalized()) throw PreconditionError("apply_hit requires a normalized state");
    if (!psi.grid().contains(a)) throw DomainError("hit centre lies outside the grid");
    WaveFunction out = psi;
    const double w = Localizer(psi.grid(), r_c).apply(out.data(), a);
    if (!(w >= zero_support_threshold)) {
        throw ZeroSupportError("hit centre in a region of negligible amplitude");
    }
    scale_amplitudes(out.data(), 1.0 / std::sqrt(w));
    return {std::move(out), w};
}

struct TrajectoryConfig {
    double t_total = 1.0;
    double dt = 1e-3;
    std::int64_t sample_every = 1;
    bool record_observables = true;
};

using SampleHook = std::function<void(std::size_t sample_index, double t, const WaveFunction& psi)>;

/// Hits are snapped to step boundaries; this bounds the snapping bias.
inline constexpr double max_rate_times_dt = 1e-3;

/// GRW trajectory engine: Schroedinger evolution between hits, hits at
/// exponentially distributed times, centres drawn from p(a). Built once per
/// ensemble and shared read-only between worker threads.
class GrwEngine {
public:
    GrwEngine(const Grid1D& grid, double mass, const Potential& v, const CollapseParams& params,
              const UnitSystem& units, const TrajectoryConfig& cfg)
        : prop_(grid, mass, v, cfg.dt),
          loc_(grid, params.r_c),
          params_(params),
          cfg_(cfg),
          rate_(params.total_rate_internal(mass, units)),
          n_total_(step_count(cfg.t_total, cfg.dt)),
          schedule_(sample_schedule(n_total_, cfg.sample_every)) {
        if (rate_ * cfg.dt >= max_rate_times_dt) {
            throw StepSizeError("hit-snapping guard violated: Lambda * dt = " + std::to_string(rate_ * cfg.dt) +
                                " >= 1e-3");
        }
    }

    double total_rate() const noexcept { return rate_; }
    std::int64_t n_steps() const noexcept { return n_total_; }
    const std::vector<std::int64_t>& schedule() const noexcept { return schedule_; }
    const SplitStepPropagator& propagator() const noexcept { return prop_; }
    const Localizer& localizer() const noexcept { return loc_; }
    const TrajectoryConfig& config() const noexcept { return cfg_; }

    TrajectoryRecord run(const WaveFunction& psi0, RngStream& rng, const SampleHook& hook = {}) const {
        if (psi0.grid() != prop_.grid() || psi0.mass() != prop_.mass()) {
            throw ShapeError("initial state does not match the engine grid or mass");
        }
        if (!psi0.is_normalized()) throw PreconditionError("trajectory requires a normalized initial state");

        const double dt = cfg_.dt;
        TrajectoryRecord rec{{}, {}, {}, psi0, rng.master_seed(), rng.index()};

        double clock = 0.0;
        std::int64_t last_hit = -1;
        auto draw_hit = [&]() -> std::optional<std::int64_t> {
            const auto wait = sample_next_hit_time(rate_, rng);
            if (!wait) return std::nullopt;
            clock += *wait;
            if (clock > cfg_.t_total) return std::nullopt;
            const auto s = std::max<std::int64_t>(std::llround(clock / dt), last_hit + 1);
            if (s > n_total_) return std::nullopt;
            return s;
        };

        // Free evolution is recomputed from the last post-hit state (ref), so
        // the sample schedule never changes the numerical result.
        std::vector<cplx> ref(psi0.amps().begin(), psi0.amps().end());
        std::int64_t ref_step = 0;
        WaveFunction cur = psi0;
        std::int64_t cur_step = 0;
        auto bring_to = [&](std::int64_t s) {
            if (s == cur_step) return;
            if (prop_.is_free()) {
                cur.data() = ref;
                prop_.advance(cur.data(), s - ref_step);
            } else {
                prop_.advance(cur.data(), s - cur_step);
            }
            cur_step = s;
        };

        std::vector<cplx> scratch;
        auto next_hit = draw_hit();
        for (std::size_t idx = 0; idx < schedule_.size(); ++idx) {
            const std::int64_t s_sample = schedule_[idx];
            while (next_hit && *next_hit <= s_sample) {
                const std::int64_t h = *next_hit;
                bring_to(h);
                const auto p = loc_.density(cur.amps());
                const double a = loc_.sample_center(p, rng);
                const double w = loc_.apply(cur.data(), a);
                if (!(w >= zero_support_threshold)) {
                    throw ZeroSupportError("hit centre in a region of negligible amplitude");
                }
                scale_amplitudes(cur.data(), 1.0 / std::sqrt(w));
                rec.events.push_back({static_cast<double>(h) * dt, a, loc_.peak_normalized(w)});
                if (prop_.is_free()) {
                    ref = cur.data();
                    ref_step = h;
                }
                last_hit = h;
                next_hit = draw_hit();
            }
            bring_to(s_sample);
            const double t = static_cast<double>(s_sample) * dt;
            rec.sample_times.push_back(t);
            if (cfg_.record_observables) {
                rec.observables_at_samples.push_back(
                    detail::observables_impl(cur, prop_.potential_values(), scratch));
            }
            if (hook) hook(idx, t, cur);
        }
        rec.final_state = std::move(cur);
        return rec;
    }

private:
    SplitStepPropagator prop_;
    Localizer loc_;
    CollapseParams params_;
    TrajectoryConfig cfg_;
    double rate_;
    std::int64_t n_total_;
    std::vector<std::int64_t> schedule_;
};

inline TrajectoryRecord grw_trajectory(const WaveFunction& psi0, const Potential& v, const CollapseParams& params,
                                       const UnitSystem& units, const TrajectoryConfig& cfg, RngStream& rng,
                                       const SampleHook& hook = {}) {
    if (!(cfg.t_total > 0.0)) throw DomainError("t_total must be positive");
    return GrwEngine(psi0.grid(), psi0.mass(), v, params, units, cfg).run(psi0, rng, hook);
}

}  // namespace grwlab
