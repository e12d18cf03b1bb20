#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "grwlab/collapse.hpp"
#include "grwlab/errors.hpp"
#include "grwlab/parallel.hpp"
#include "grwlab/propagator.hpp"
#include "grwlab/qstate.hpp"
#include "grwlab/rates.hpp"
#include "grwlab/rng.hpp"
#include "grwlab/stats.hpp"
#include "grwlab/units.hpp"

namespace grwlab {

struct EnsembleReport {
    std::size_t n_trajectories = 0;
    std::map<std::string, std::size_t> outcome_counts;
    double estimate = 0.0;
    double std_error = 0.0;
    std::map<std::string, double> fit_diagnostics;
    std::uint64_t seed = 0;
};

/// Master seed of the k-th independent sub-ensemble of a run.
inline std::uint64_t sub_ensemble_seed(std::uint64_t master_seed, std::uint64_t k) {
    return splitmix64(master_seed + 0x632BE59BD9B4E019ULL * (k + 1));
}

// ---------------------------------------------------------------------------
// Measurement: spin (x) pointer, reduced by hits on the pointer coordinate.
// ---------------------------------------------------------------------------

/// Spin amplitudes plus a one-coordinate pointer. Spin up pairs with the
/// pointer displaced to -separation/2, spin down with +separation/2. The
/// pointer mass is pointer_n_nucleons nucleon masses and its collapse rate is
/// pointer_n_nucleons * lambda.
struct MeasurementConfig {
    cplx c_up{std::numbers::sqrt2 / 2.0, 0.0};
    cplx c_down{std::numbers::sqrt2 / 2.0, 0.0};
    double pointer_n_nucleons = 1e6;
    double pointer_separation = 10.0;  // internal length
    double pointer_sigma = 0.5;        // internal length
    double decision_epsilon = 1e-6;
    std::size_t n_points = 1024;
    double dx = 0.05;
    double dt = 1e-4;       // internal time
    double t_budget = 20.0;  // internal time

    void validate() const {
        if (std::abs(std::norm(c_up) + std::norm(c_down) - 1.0) > 1e-9) {
            throw DomainError("spin amplitudes must satisfy |c_up|^2 + |c_down|^2 = 1");
        }
        if (!(pointer_separation > 4.0 * pointer_sigma)) {
            throw DomainError("pointer separation must exceed 4 pointer widths");
        }
        if (!(decision_epsilon > 0.0 && decision_epsilon < 1.0)) {
            throw DomainError("decision_epsilon must lie in (0, 1)");
        }
        if (!(pointer_n_nucleons >= 1.0)) throw DomainError("pointer must contain at least one nucleon");
        if (!(t_budget > 0.0) || !(dt > 0.0)) throw DomainError("time budget and step must be positive");
    }

    static MeasurementConfig with_probability_up(double p_up) {
        if (!(p_up >= 0.0 && p_up <= 1.0)) throw DomainError("probability must lie in [0, 1]");
        MeasurementConfig cfg;
        cfg.c_up = std::sqrt(p_up);
        cfg.c_down = std::sqrt(1.0 - p_up);
        return cfg;
    }
};

enum class Outcome { Up, Down };

inline const char* to_string(Outcome o) { return o == Outcome::Up ? "up" : "down"; }

struct BornTrial {
    Outcome outcome = Outcome::Up;
    std::size_t hits = 0;
    double decision_time = 0.0;
};

/// Precomputed machinery for repeated measurement trials.
class MeasurementModel {
public:
    MeasurementModel(const MeasurementConfig& cfg, const CollapseParams& params, const UnitSystem& units)
        : cfg_(checked(cfg)),
          grid_(Grid1D::centered(cfg.n_points, cfg.dx)),
          mass_(units.mass_to_internal(cfg.pointer_n_nucleons * nucleon_mass_kg)),
          prop_(grid_, mass_, Potential::free(), cfg.dt),
          loc_(grid_, params.r_c),
          rate_(pointer_params(params, cfg).total_rate_internal(mass_, units)),
          n_budget_(static_cast<std::int64_t>(std::ceil(cfg.t_budget / cfg.dt))),
          up0_(gaussian_packet(grid_, -0.5 * cfg.pointer_separation, 0.0, cfg.pointer_sigma, mass_)),
          down0_(gaussian_packet(grid_, 0.5 * cfg.pointer_separation, 0.0, cfg.pointer_sigma, mass_)) {
        if (rate_ * cfg.dt >= max_rate_times_dt) {
            throw StepSizeError("hit-snapping guard violated: Lambda * dt >= 1e-3");
        }
        for (auto& a : up0_.data()) a *= cfg.c_up;
        for (auto& a : down0_.data()) a *= cfg.c_down;
    }

    double total_rate() const noexcept { return rate_; }
    const MeasurementConfig& config() const noexcept { return cfg_; }

    HybridState initial_state() const { return HybridState(up0_, down0_); }

    BornTrial run(RngStream& rng) const {
        std::vector<cplx> up_ref = up0_.data();
        std::vector<cplx> down_ref = down0_.data();
        std::int64_t ref_step = 0;
        std::vector<cplx> up, down;
        std::vector<double> rho(grid_.size());

        BornTrial trial;
        if (auto o = decide(up0_.norm2(), down0_.norm2())) {
            trial.outcome = *o;
            return trial;
        }
        double clock = 0.0;
        std::int64_t last = -1;
        const double dx = grid_.dx();
        while (true) {
            const auto wait = sample_next_hit_time(rate_, rng);
            if (!wait) throw TimeoutError("no collapse can occur at zero rate; measurement never decides");
            clock += *wait;
            const auto s = std::max<std::int64_t>(std::llround(clock / cfg_.dt), last + 1);
            if (clock > cfg_.t_budget || s > n_budget_) {
                throw TimeoutError("measurement undecided after the time budget; pointer collapse too slow");
            }
            up = up_ref;
            down = down_ref;
            prop_.advance(up, s - ref_step);
            prop_.advance(down, s - ref_step);
            for (std::size_t i = 0; i < rho.size(); ++i) rho[i] = std::norm(up[i]) + std::norm(down[i]);
            const auto p = loc_.density_from_rho(rho);
            const double a = loc_.sample_center(p, rng);
            const double w_up = loc_.apply(up, a);
            const double w_down = loc_.apply(down, a);
            const double w = w_up + w_down;
            if (!(w >= zero_support_threshold)) throw ZeroSupportError("hit centre in a region of negligible amplitude");
            const double scale = 1.0 / std::sqrt(w);
            scale_amplitudes(up, scale);
            scale_amplitudes(down, scale);
            ++trial.hits;
            last = s;
            up_ref = std::move(up);
            down_ref = std::move(down);
            ref_step = s;
            double nu = 0.0, nd = 0.0;
            for (const auto& c : up_ref) nu += std::norm(c);
            for (const auto& c : down_ref) nd += std::norm(c);
            if (auto o = decide(nu * dx, nd * dx)) {
                trial.outcome = *o;
                trial.decision_time = static_cast<double>(s) * cfg_.dt;
                return trial;
            }
        }
    }

private:
    static const MeasurementConfig& checked(const MeasurementConfig& cfg) {
        cfg.validate();
        return cfg;
    }

    static CollapseParams pointer_params(CollapseParams p, const MeasurementConfig& cfg) {
        p.n_nucleons = cfg.pointer_n_nucleons;
        return p;
    }

    std::optional<Outcome> decide(double w_up, double w_down) const {
        const double total = w_up + w_down;
        if (w_down < cfg_.decision_epsilon * total) return Outcome::Up;
        if (w_up < cfg_.decision_epsilon * total) return Outcome::Down;
        return std::nullopt;
    }

    MeasurementConfig cfg_;
    Grid1D grid_;
    double mass_;
    SplitStepPropagator prop_;
    Localizer loc_;
    double rate_;
    std::int64_t n_budget_;
    WaveFunction up0_;
    WaveFunction down0_;
};

/// One measurement: evolves the entangled spin-pointer state under joint hits
/// until one branch carries less than decision_epsilon of the weight.
inline Outcome born_trial(const MeasurementConfig& cfg, const CollapseParams& params, const UnitSystem& units,
                          RngStream& rng) {
    return MeasurementModel(cfg, params, units).run(rng).outcome;
}

struct BornEnsemble {
    EnsembleReport report;
    std::vector<BornTrial> trials;
};

inline BornEnsemble born_ensemble(const MeasurementConfig& cfg, const CollapseParams& params, const UnitSystem& units,
                                  std::size_t n_trajectories, std::uint64_t master_seed, unsigned threads = 1) {
    if (n_trajectories == 0) throw DomainError("ensemble must contain at least one trajectory");
    const MeasurementModel model(cfg, params, units);
    BornEnsemble out;
    out.trials.resize(n_trajectories);
    parallel_for(n_trajectories, threads, [&](std::size_t i) {
        RngStream rng(master_seed, i);
        out.trials[i] = model.run(rng);
    });

    std::size_t n_up = 0, hits = 0;
    double time_sum = 0.0;
    for (const auto& t : out.trials) {
        n_up += t.outcome == Outcome::Up ? 1 : 0;
        hits += t.hits;
        time_sum += t.decision_time;
    }
    const auto n = static_cast<double>(n_trajectories);
    const double p_expected = std::norm(cfg.c_up);
    const double freq = static_cast<double>(n_up) / n;

    auto& r = out.report;
    r.n_trajectories = n_trajectories;
    r.outcome_counts = {{"up", n_up}, {"down", n_trajectories - n_up}};
    r.estimate = freq;
    // Agresti-Coull adjusted binomial standard error; stays positive at p = 0, 1.
    const double p_adj = (static_cast<double>(n_up) + 2.0) / (n + 4.0);
    r.std_error = std::sqrt(p_adj * (1.0 - p_adj) / (n + 4.0));
    r.seed = master_seed;

    double chi2 = 0.0;
    bool impossible = false;
    for (const auto& [expected_p, observed] :
         {std::pair{p_expected, n_up}, std::pair{1.0 - p_expected, n_trajectories - n_up}}) {
        const double e = expected_p * n;
        if (e > 0.0) {
            chi2 += (static_cast<double>(observed) - e) * (static_cast<double>(observed) - e) / e;
        } else if (observed > 0) {
            impossible = true;
        }
    }
    const double sigma_binom = std::sqrt(p_expected * (1.0 - p_expected) / n);
    r.fit_diagnostics["p_up_expected"] = p_expected;
    r.fit_diagnostics["binomial_sigma"] = sigma_binom;
    r.fit_diagnostics["z_score"] = sigma_binom > 0.0 ? (freq - p_expected) / sigma_binom : (freq == p_expected ? 0.0 : INFINITY);
    r.fit_diagnostics["chi2"] = impossible ? INFINITY : chi2;
    r.fit_diagnostics["chi2_p_value"] = impossible ? 0.0 : stats::chi2_sf_1dof(chi2);
    r.fit_diagnostics["mean_hits"] = static_cast<double>(hits) / n;
    r.fit_diagnostics["mean_decision_time"] = time_sum / n;
    r.fit_diagnostics["collapse_rate_internal"] = model.total_rate();
    return out;
}

// ---------------------------------------------------------------------------
// Decoherence-rate scan.
// ---------------------------------------------------------------------------

/// Per-trajectory coherence between components a distance d apart:
///   c(t) = sum_x conj(psi(x)) psi(x + d) dx = <psi|T_d|psi>.
/// Translations commute with free evolution, and the ensemble average of one
/// hit multiplies rho(x, x + d) by exp(-d^2/(4 r_c^2)), so E[c](t) decays
/// exactly as c(0) exp(-Gamma(d) t).
inline cplx translated_overlap(std::span<const cplx> amps, std::size_t shift, double dx) {
    const std::size_t n = amps.size();
    cplx s{0.0, 0.0};
    for (std::size_t i = 0; i < n; ++i) s += std::conj(amps[i]) * amps[(i + shift) % n];
    return s * dx;
}

struct DecoherenceConfig {
    std::size_t n_points = 2048;
    double dx = 0.05;
    double sigma = 0.2;   // packet width
    double mass = 100.0;  // internal mass units
    double dt = 2e-4;
    double efoldings = 2.0;  // target Gamma(d) * t_total
    double t_max = 100.0;    // cap (and the duration used when Gamma = 0)
    std::size_t n_samples = 20;
    std::size_t groups = 20;
    unsigned threads = 1;
};

struct DecoherenceResult {
    double separation = 0.0;
    double t_total = 0.0;
    EnsembleReport report;  // estimate = fitted Gamma in inverse internal time
    std::vector<double> times;
    std::vector<double> coherence;
    std::vector<double> coherence_stderr;
};

inline DecoherenceResult decoherence_run(double d, const CollapseParams& params, const UnitSystem& units,
                                         std::size_t ensemble_size, std::uint64_t master_seed,
                                         const DecoherenceConfig& cfg) {
    if (ensemble_size < 2) throw DomainError("decoherence ensemble needs at least 2 trajectories");
    if (!(d >= 0.0)) throw DomainError("separation must be non-negative");
    const Grid1D grid = Grid1D::centered(cfg.n_points, cfg.dx);
    const double shift_f = d / grid.dx();
    const auto shift = static_cast<std::size_t>(std::llround(shift_f));
    if (std::abs(shift_f - static_cast<double>(shift)) > 1e-9 * std::max(1.0, shift_f)) {
        throw DomainError("separation must be an integer multiple of the grid spacing");
    }
    if (d + 12.0 * cfg.sigma > 0.5 * grid.length()) throw DomainError("separation does not fit the grid");

    const auto packet_l = gaussian_packet(grid, -0.5 * d, 0.0, cfg.sigma, cfg.mass);
    const auto packet_r = gaussian_packet(grid, 0.5 * d, 0.0, cfg.sigma, cfg.mass);
    const WaveFunction psi0 = d > 0.0 ? superpose(packet_l, packet_r, std::numbers::sqrt2 / 2.0, std::numbers::sqrt2 / 2.0)
                                      : packet_l;

    const double gamma_si = effective_reduction_rate(d, params, units.mass_in_nucleons(cfg.mass));
    const double gamma = units.rate_to_internal(gamma_si);
    const double lambda_total = params.total_rate_internal(cfg.mass, units);
    double t_target = gamma > 0.0 ? std::min(cfg.efoldings / gamma, cfg.t_max) : cfg.t_max;
    const auto per_sample =
        std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(t_target / cfg.dt / static_cast<double>(cfg.n_samples))));
    TrajectoryConfig tc;
    tc.dt = cfg.dt;
    tc.sample_every = per_sample;
    tc.t_total = static_cast<double>(per_sample * static_cast<std::int64_t>(cfg.n_samples)) * cfg.dt;
    tc.record_observables = false;
    const GrwEngine engine(grid, cfg.mass, Potential::free(), params, units, tc);
    const std::size_t n_samples = engine.schedule().size();

    std::vector<cplx> per_traj(ensemble_size * n_samples);
    std::vector<std::size_t> hits(ensemble_size);
    parallel_for(ensemble_size, cfg.threads, [&](std::size_t i) {
        RngStream rng(master_seed, i);
        const auto rec = engine.run(psi0, rng, [&](std::size_t k, double, const WaveFunction& psi) {
            per_traj[i * n_samples + k] = translated_overlap(psi.amps(), shift, grid.dx());
        });
        hits[i] = rec.events.size();
    });

    const cplx c0 = translated_overlap(psi0.amps(), shift, grid.dx());
    const cplx phase = std::abs(c0) > 0.0 ? std::conj(c0) / std::abs(c0) : cplx{1.0, 0.0};

    DecoherenceResult res;
    res.separation = d;
    res.t_total = tc.t_total;
    for (auto s : engine.schedule()) res.times.push_back(static_cast<double>(s) * tc.dt);

    // Coherence curve projected on the initial phase, from trajectories in [lo, hi) minus group `skip`.
    const std::size_t n_groups = std::min(cfg.groups, ensemble_size);
    const auto bounds = stats::group_bounds(ensemble_size, n_groups);
    auto curve = [&](std::optional<std::size_t> skip) {
        std::vector<double> c(n_samples, 0.0);
        std::size_t count = 0;
        for (std::size_t g = 0; g < n_groups; ++g) {
            if (skip && *skip == g) continue;
            for (std::size_t i = bounds[g]; i < bounds[g + 1]; ++i) {
                for (std::size_t k = 0; k < n_samples; ++k) c[k] += (per_traj[i * n_samples + k] * phase).real();
                ++count;
            }
        }
        for (auto& v : c) v /= static_cast<double>(count);
        return c;
    };
    res.coherence = curve(std::nullopt);
    res.coherence_stderr.assign(n_samples, 0.0);
    for (std::size_t k = 0; k < n_samples; ++k) {
        double m = 0.0, m2 = 0.0;
        for (std::size_t i = 0; i < ensemble_size; ++i) {
            const double v = (per_traj[i * n_samples + k] * phase).real();
            m += v;
            m2 += v * v;
        }
        const auto n = static_cast<double>(ensemble_size);
        m /= n;
        res.coherence_stderr[k] = std::sqrt(std::max(0.0, m2 / n - m * m) / (n - 1.0));
    }

    const auto fit = stats::exp_decay_fit(res.times, res.coherence);
    const double se = stats::jackknife_stderr(n_groups, [&](std::size_t g) {
        return stats::exp_decay_fit(res.times, curve(g)).rate;
    });

    std::size_t no_hit = 0, total_hits = 0;
    for (auto h : hits) {
        no_hit += h == 0 ? 1 : 0;
        total_hits += h;
    }
    auto& r = res.report;
    r.n_trajectories = ensemble_size;
    r.outcome_counts = {{"no_hit", no_hit}, {"hit", ensemble_size - no_hit}};
    r.estimate = fit.rate;
    r.std_error = se;
    r.seed = master_seed;
    r.fit_diagnostics["separation"] = d;
    r.fit_diagnostics["separation_over_rc"] = d / params.r_c;
    r.fit_diagnostics["gamma_analytic_internal"] = gamma;
    r.fit_diagnostics["gamma_fit_si"] = units.rate_to_si(fit.rate);
    r.fit_diagnostics["gamma_analytic_si"] = gamma_si;
    r.fit_diagnostics["lambda_total_internal"] = lambda_total;
    r.fit_diagnostics["relative_error"] = gamma > 0.0 ? (fit.rate - gamma) / gamma : 0.0;
    r.fit_diagnostics["amplitude"] = fit.amplitude;
    r.fit_diagnostics["c0"] = std::abs(c0);
    r.fit_diagnostics["r2"] = fit.r2;
    r.fit_diagnostics["low_r2"] = fit.r2 < 0.95 ? 1.0 : 0.0;
    r.fit_diagnostics["t_total"] = tc.t_total;
    r.fit_diagnostics["mean_hits"] = static_cast<double>(total_hits) / static_cast<double>(ensemble_size);
    return res;
}

/// Runs one ensemble per separation on independent sub-ensemble seeds.
inline std::vector<DecoherenceResult> decoherence_scan(std::span<const double> separations,
                                                       const CollapseParams& params, const UnitSystem& units,
                                                       std::size_t ensemble_size, std::uint64_t master_seed,
                                                       const DecoherenceConfig& cfg) {
    std::vector<DecoherenceResult> out;
    for (std::size_t k = 0; k < separations.size(); ++k) {
        out.push_back(decoherence_run(separations[k], params, units, ensemble_size,
                                      sub_ensemble_seed(master_seed, k), cfg));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Fringe visibility.
// ---------------------------------------------------------------------------

struct ScreenConfig {
    std::size_t n_points = 8192;
    double dx = 0.1;
    double sigma = 0.5;  // slit packet width
    double mass = 1.0;
    double dt = 2e-3;
    std::size_t fringes = 5;  // central fringes used for the contrast
    std::size_t groups = 20;
    unsigned threads = 1;
};

struct FringeExtrema {
    std::vector<double> maxima;
    std::vector<double> minima;
};

namespace detail {

// Value at x of the parabola through the three grid samples nearest to x.
inline double interpolate_quadratic(const Grid1D& grid, std::span<const double> f, double x) {
    const double u = (x - grid.x_min()) / grid.dx();
    auto j = static_cast<std::ptrdiff_t>(std::llround(u));
    j = std::clamp<std::ptrdiff_t>(j, 1, static_cast<std::ptrdiff_t>(f.size()) - 2);
    const double t = u - static_cast<double>(j);
    const double fm = f[static_cast<std::size_t>(j - 1)], f0 = f[static_cast<std::size_t>(j)],
                 fp = f[static_cast<std::size_t>(j + 1)];
    return f0 + 0.5 * t * (fp - fm) + 0.5 * t * t * (fp - 2.0 * f0 + fm);
}

}  // namespace detail

/// Local extrema of an intensity profile inside |x - center| <= half_width,
/// refined by parabolic interpolation.
inline FringeExtrema find_fringe_extrema(const Grid1D& grid, std::span<const double> intensity, double center,
                                         double half_width) {
    FringeExtrema ex;
    for (std::size_t i = 1; i + 1 < intensity.size(); ++i) {
        const double x = grid.x(i);
        if (std::abs(x - center) > half_width) continue;
        const double fm = intensity[i - 1], f0 = intensity[i], fp = intensity[i + 1];
        const bool is_max = f0 > fm && f0 >= fp;
        const bool is_min = f0 < fm && f0 <= fp;
        if (!is_max && !is_min) continue;
        const double curv = fp - 2.0 * f0 + fm;
        const double off = curv != 0.0 ? std::clamp(0.5 * (fm - fp) / curv, -0.5, 0.5) : 0.0;
        (is_max ? ex.maxima : ex.minima).push_back(x + off * grid.dx());
    }
    return ex;
}

/// (mean I_max - mean I_min) / (mean I_max + mean I_min) evaluated at given extrema.
inline double fringe_contrast(const Grid1D& grid, std::span<const double> intensity, const FringeExtrema& ex) {
    double smax = 0.0, smin = 0.0;
    for (double x : ex.maxima) smax += detail::interpolate_quadratic(grid, intensity, x);
    for (double x : ex.minima) smin += detail::interpolate_quadratic(grid, intensity, x);
    smax /= static_cast<double>(ex.maxima.size());
    smin /= static_cast<double>(ex.minima.size());
    if (!(smax + smin > 0.0)) throw NumericError("screen intensity vanishes at the fringe extrema");
    return (smax - smin) / (smax + smin);
}

struct VisibilityResult {
    double v_measured = 0.0;
    double v_ideal = 0.0;
    double ratio = 0.0;
    double ratio_stderr = 0.0;
    double v_analytic = 0.0;
    double gamma_t = 0.0;
    double fringe_spacing = 0.0;
    double mean_hits = 0.0;
    std::size_t n_trajectories = 0;
    std::uint64_t seed = 0;
    FringeExtrema extrema;
    std::vector<double> x;
    std::vector<double> intensity;
    std::vector<double> intensity_ideal;
};

/// Two-slit run: packets at +-d/2 fly freely for t_flight (internal time) to a
/// virtual screen. The extrema of the no-collapse pattern fix where the
/// ensemble-averaged intensity is read, so a smooth background from collapsed
/// trajectories lifts maxima and minima alike.
inline VisibilityResult visibility_experiment(double d, const CollapseParams& params, const UnitSystem& units,
                                              double t_flight, std::size_t ensemble_size, std::uint64_t master_seed,
                                              const ScreenConfig& screen) {
    if (ensemble_size < 2) throw DomainError("visibility ensemble needs at least 2 trajectories");
    if (!(d > 0.0) || !(t_flight > 0.0)) throw DomainError("separation and flight time must be positive");
    const Grid1D grid = Grid1D::centered(screen.n_points, screen.dx);
    const double sigma_t = spread_analytic(screen.sigma, screen.mass, t_flight);
    if (std::exp(-d * d / (8.0 * sigma_t * sigma_t)) < 0.5) {
        throw ConfigurationError("packets do not overlap at the screen; increase the flight time");
    }
    const auto psi0 = superpose(gaussian_packet(grid, -0.5 * d, 0.0, screen.sigma, screen.mass),
                                gaussian_packet(grid, 0.5 * d, 0.0, screen.sigma, screen.mass),
                                std::numbers::sqrt2 / 2.0, std::numbers::sqrt2 / 2.0);

    TrajectoryConfig tc;
    tc.dt = screen.dt;
    tc.t_total = t_flight;
    tc.sample_every = step_count(t_flight, screen.dt);
    tc.record_observables = false;
    const GrwEngine engine(grid, screen.mass, Potential::free(), params, units, tc);

    VisibilityResult res;
    res.n_trajectories = ensemble_size;
    res.seed = master_seed;
    res.fringe_spacing = 2.0 * std::numbers::pi * t_flight / (screen.mass * d);
    if (res.fringe_spacing < 4.0 * grid.dx()) throw ConfigurationError("fringes are not resolved by the grid");
    res.x.resize(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) res.x[i] = grid.x(i);

    const auto ideal = engine.propagator().evolve(psi0, engine.n_steps());
    res.intensity_ideal.resize(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) res.intensity_ideal[i] = std::norm(ideal.amps()[i]);
    res.extrema = find_fringe_extrema(grid, res.intensity_ideal, 0.0,
                                      0.5 * static_cast<double>(screen.fringes) * res.fringe_spacing);
    if (res.extrema.maxima.size() < 2 || res.extrema.minima.size() < 2) {
        throw ConfigurationError("fewer than two fringe maxima and minima in the central window");
    }
    res.v_ideal = fringe_contrast(grid, res.intensity_ideal, res.extrema);

    const std::size_t n_groups = std::min(screen.groups, ensemble_size);
    const auto bounds = stats::group_bounds(ensemble_size, n_groups);
    std::vector<std::vector<double>> group_sum(n_groups, std::vector<double>(grid.size(), 0.0));
    std::vector<std::size_t> group_hits(n_groups, 0);
    parallel_for(n_groups, screen.threads, [&](std::size_t g) {
        for (std::size_t i = bounds[g]; i < bounds[g + 1]; ++i) {
            RngStream rng(master_seed, i);
            const auto rec = engine.run(psi0, rng);
            const auto amps = rec.final_state.amps();
            for (std::size_t j = 0; j < amps.size(); ++j) group_sum[g][j] += std::norm(amps[j]);
            group_hits[g] += rec.events.size();
        }
    });

    auto mean_without = [&](std::optional<std::size_t> skip) {
        std::vector<double> s(grid.size(), 0.0);
        std::size_t count = 0;
        for (std::size_t g = 0; g < n_groups; ++g) {
            if (skip && *skip == g) continue;
            for (std::size_t j = 0; j < s.size(); ++j) s[j] += group_sum[g][j];
            count += bounds[g + 1] - bounds[g];
        }
        for (auto& v : s) v /= static_cast<double>(count);
        return s;
    };
    res.intensity = mean_without(std::nullopt);
    res.v_measured = fringe_contrast(grid, res.intensity, res.extrema);
    res.ratio = res.v_measured / res.v_ideal;
    res.ratio_stderr = stats::jackknife_stderr(n_groups, [&](std::size_t g) {
                           return fringe_contrast(grid, mean_without(g), res.extrema);
                       }) /
                       res.v_ideal;
    const double gamma = units.rate_to_internal(effective_reduction_rate(d, params, units.mass_in_nucleons(screen.mass)));
    res.gamma_t = gamma * t_flight;
    res.v_analytic = std::exp(-res.gamma_t);
    std::size_t hits = 0;
    for (auto h : group_hits) hits += h;
    res.mean_hits = static_cast<double>(hits) / static_cast<double>(ensemble_size);
    return res;
}

// ---------------------------------------------------------------------------
// Heating and momentum diffusion.
// ---------------------------------------------------------------------------

struct HeatingConfig {
    std::size_t n_points = 1024;
    double dx = 0.1;
    double sigma = 1.0;
    double mass = 1.0;
    double dt = 5e-4;
    std::size_t n_samples = 20;
    std::size_t groups = 20;
    unsigned threads = 1;
};

struct HeatingResult {
    double slope_measured = 0.0;
    double slope_analytic = 0.0;
    double std_error = 0.0;
    double var_p_slope = 0.0;
    double var_p_slope_analytic = 0.0;
    double var_p_stderr = 0.0;
    double energy_r2 = 0.0;
    double var_p_r2 = 0.0;
    double expected_hits = 0.0;
    double mean_hits = 0.0;
    std::size_t n_trajectories = 0;
    std::uint64_t seed = 0;
    std::vector<double> times;
    std::vector<double> mean_energy;
    std::vector<double> var_p;
};

/// Free-particle ensemble: linear fits of the ensemble-mean energy and of the
/// ensemble momentum variance E<p^2> - E<p>^2 against time (internal units).
inline HeatingResult heating_experiment(const CollapseParams& params, const UnitSystem& units, double t_total,
                                        std::size_t ensemble_size, std::uint64_t master_seed,
                                        const HeatingConfig& cfg) {
    if (ensemble_size < 2) throw DomainError("heating ensemble needs at least 2 trajectories");
    const Grid1D grid = Grid1D::centered(cfg.n_points, cfg.dx);
    const auto psi0 = gaussian_packet(grid, 0.0, 0.0, cfg.sigma, cfg.mass);
    const double rate = params.total_rate_internal(cfg.mass, units);
    const double expected_hits = rate * t_total;
    if (rate > 0.0 && expected_hits < 5.0) {
        throw StatisticsError("fewer than 5 expected hits per trajectory (Lambda t = " +
                              std::to_string(expected_hits) + ")");
    }

    TrajectoryConfig tc;
    tc.dt = cfg.dt;
    const std::int64_t n_total = step_count(t_total, cfg.dt);
    if (n_total % static_cast<std::int64_t>(cfg.n_samples) != 0) {
        throw StepSizeError("t_total / dt must be divisible by the number of samples");
    }
    tc.t_total = t_total;
    tc.sample_every = n_total / static_cast<std::int64_t>(cfg.n_samples);
    tc.record_observables = true;
    const GrwEngine engine(grid, cfg.mass, Potential::free(), params, units, tc);
    const std::size_t n_samples = engine.schedule().size();

    // Per trajectory and sample: <p>, <p^2>, <H>.
    std::vector<double> data(ensemble_size * n_samples * 3);
    std::vector<std::size_t> hits(ensemble_size);
    parallel_for(ensemble_size, cfg.threads, [&](std::size_t i) {
        RngStream rng(master_seed, i);
        const auto rec = engine.run(psi0, rng);
        for (std::size_t k = 0; k < n_samples; ++k) {
            const auto& o = rec.observables_at_samples[k];
            double* row = &data[(i * n_samples + k) * 3];
            row[0] = o.mean_p;
            row[1] = o.var_p + o.mean_p * o.mean_p;
            row[2] = o.energy;
        }
        hits[i] = rec.events.size();
    });

    HeatingResult res;
    res.n_trajectories = ensemble_size;
    res.seed = master_seed;
    for (auto s : engine.schedule()) res.times.push_back(static_cast<double>(s) * cfg.dt);

    const std::size_t n_groups = std::min(cfg.groups, ensemble_size);
    const auto bounds = stats::group_bounds(ensemble_size, n_groups);
    auto curves = [&](std::optional<std::size_t> skip) {
        std::vector<double> e(n_samples, 0.0), p(n_samples, 0.0), p2(n_samples, 0.0);
        std::size_t count = 0;
        for (std::size_t g = 0; g < n_groups; ++g) {
            if (skip && *skip == g) continue;
            for (std::size_t i = bounds[g]; i < bounds[g + 1]; ++i) {
                for (std::size_t k = 0; k < n_samples; ++k) {
                    const double* row = &data[(i * n_samples + k) * 3];
                    p[k] += row[0];
                    p2[k] += row[1];
                    e[k] += row[2];
                }
                ++count;
            }
        }
        std::vector<double> var(n_samples);
        for (std::size_t k = 0; k < n_samples; ++k) {
            const double c = static_cast<double>(count);
            e[k] /= c;
            var[k] = p2[k] / c - (p[k] / c) * (p[k] / c);
        }
        return std::pair{e, var};
    };
    const auto [e_all, var_all] = curves(std::nullopt);
    res.mean_energy = e_all;
    res.var_p = var_all;
    const auto fe = stats::linear_fit(res.times, res.mean_energy);
    const auto fv = stats::linear_fit(res.times, res.var_p);
    res.slope_measured = fe.slope;
    res.var_p_slope = fv.slope;
    res.energy_r2 = fe.r2;
    res.var_p_r2 = fv.r2;
    res.std_error = stats::jackknife_stderr(n_groups, [&](std::size_t g) {
        return stats::linear_fit(res.times, curves(g).first).slope;
    });
    res.var_p_stderr = stats::jackknife_stderr(n_groups, [&](std::size_t g) {
        return stats::linear_fit(res.times, curves(g).second).slope;
    });
    res.slope_analytic = rates::heating_rate_internal(rate, cfg.mass, params.r_c, 1);
    res.var_p_slope_analytic = rates::momentum_diffusion_rate_internal(rate, params.r_c);
    res.expected_hits = expected_hits;
    std::size_t total = 0;
    for (auto h : hits) total += h;
    res.mean_hits = static_cast<double>(total) / static_cast<double>(ensemble_size);
    return res;
}

}  // namespace grwlab
