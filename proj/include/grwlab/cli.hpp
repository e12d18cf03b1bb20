#pragma once

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fftw3.h>
#include <json.hpp>

#include "grwlab/collapse.hpp"
#include "grwlab/errors.hpp"
#include "grwlab/exclusion.hpp"
#include "grwlab/experiments.hpp"
#include "grwlab/io.hpp"
#include "grwlab/parallel.hpp"
#include "grwlab/propagator.hpp"
#include "grwlab/rates.hpp"
#include "grwlab/units.hpp"

namespace grwlab::cli {

inline constexpr const char* version = "1.0.0";

/// Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.
enum ExitCode : int { ok = 0, config_error = 1, runtime_error = 2 };

namespace detail {

/// One physical quantity accepted in either SI or internal units. Giving
/// both (on the command line, in the config file, or one in each) is an error.
struct Quantity {
    std::string name;
    double fallback_internal = 0.0;
    double si = 0.0;
    double internal = 0.0;
    CLI::Option* si_opt = nullptr;
    CLI::Option* internal_opt = nullptr;
    std::function<double(double)> to_internal;

    double resolve() const {
        const bool has_si = si_opt->count() > 0;
        const bool has_internal = internal_opt->count() > 0;
        if (has_si && has_internal) {
            throw ConfigurationError("'" + name + "' is given in two unit systems (" + si_opt->get_name() + " and " +
                                     internal_opt->get_name() + ")");
        }
        if (has_si) return to_internal(si);
        if (has_internal) return internal;
        return fallback_internal;
    }
};

inline std::string flag(const std::string& stem) {
    std::string dashed = stem, under = stem;
    for (auto& c : dashed) c = c == '_' ? '-' : c;
    return dashed == under ? "--" + dashed : "--" + dashed + ",--" + under;
}

class Registry {
public:
    Quantity& add(CLI::App* app, const std::string& stem, const std::string& si_suffix, double fallback_internal,
                  std::function<double(double)> to_internal, const std::string& help,
                  const std::string& si_unit = "") {
        auto q = std::make_unique<Quantity>();
        q->name = stem;
        q->fallback_internal = fallback_internal;
        q->to_internal = std::move(to_internal);
        q->si_opt = app->add_option(flag(stem + "_" + si_suffix), q->si, help + " [" + (si_unit.empty() ? si_suffix : si_unit) + "]");
        q->internal_opt = app->add_option(flag(stem + "_internal"), q->internal,
                                          help + " [internal units, default " + io::format_shortest(fallback_internal) +
                                              "]");
        items_.push_back(std::move(q));
        return *items_.back();
    }

private:
    std::vector<std::unique_ptr<Quantity>> items_;
};

/// Everything shared by the subcommands: output handling and the manifest.
struct RunContext {
    std::uint64_t seed = 1;
    std::string out_dir = "grwlab_out";
    std::string threads_text = "auto";
    double length_unit_m = 1e-7;
    double mass_unit_kg = nucleon_mass_kg;
    std::vector<std::string> outputs;
    nlohmann::json results = nlohmann::json::object();

    UnitSystem units() const { return UnitSystem(length_unit_m, mass_unit_kg); }

    unsigned threads() const {
        if (threads_text == "auto") return resolve_threads(0);
        std::size_t used = 0;
        long v = 0;
        try {
            v = std::stol(threads_text, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != threads_text.size() || v < 1 || v > 4096) {
            throw ConfigurationError("--threads must be a positive integer or 'auto', got '" + threads_text + "'");
        }
        return static_cast<unsigned>(v);
    }

    std::filesystem::path prepare() const {
        std::filesystem::path dir(out_dir);
        std::error_code ec;
        std::filesystem::create_directories(dir, ec);
        if (ec) throw ConfigurationError("cannot create output directory '" + out_dir + "': " + ec.message());
        return dir;
    }

    void text(const std::string& name, const std::string& content) {
        io::write_text(prepare() / name, content);
        outputs.push_back(name);
    }

    void bytes(const std::string& name, std::span<const std::uint8_t> content) {
        io::write_bytes(prepare() / name, content);
        outputs.push_back(name);
    }
};

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Option values as given (command line or config file), or their defaults.
inline nlohmann::json echo_options(const CLI::App* app) {
    nlohmann::json j = nlohmann::json::object();
    for (const CLI::Option* o : app->get_options()) {
        if (o->get_lnames().empty()) continue;
        const std::string& name = o->get_lnames().front();
        if (name == "help" || name == "version") continue;
        if (o->count() > 0) {
            const auto r = o->reduced_results();
            j[name] = r.size() == 1 ? nlohmann::json(r.front()) : nlohmann::json(r);
        } else if (!o->get_default_str().empty()) {
            j[name] = o->get_default_str();
        }
    }
    return j;
}

inline std::string observables_csv(const std::vector<double>& times, const std::vector<Observables>& obs) {
    io::CsvWriter w({"t_internal", "norm2", "mean_x", "var_x", "mean_p", "var_p", "energy"});
    for (std::size_t k = 0; k < obs.size(); ++k) {
        const auto& o = obs[k];
        w.row({times[k], o.norm2, o.mean_x, o.var_x, o.mean_p, o.var_p, o.energy});
    }
    return w.str();
}

// Shared option groups ------------------------------------------------------

struct PacketOptions {
    std::size_t n_points = 1024;
    std::string potential = "free";
    std::int64_t sample_every = 100;
    Quantity* dx = nullptr;
    Quantity* x0 = nullptr;
    Quantity* p0 = nullptr;
    Quantity* sigma = nullptr;
    Quantity* mass = nullptr;
    Quantity* omega = nullptr;
    Quantity* t = nullptr;
    Quantity* dt = nullptr;

    void attach(CLI::App* app, Registry& reg, const RunContext& ctx) {
        auto len = [&ctx](double m) { return ctx.units().length_to_internal(m); };
        auto time = [&ctx](double s) { return ctx.units().time_to_internal(s); };
        auto rate = [&ctx](double r) { return ctx.units().rate_to_internal(r); };
        auto mass_c = [&ctx](double kg) { return ctx.units().mass_to_internal(kg); };
        auto mom = [&ctx](double p) { return p * ctx.units().length_unit_m() / hbar_si; };
        app->add_option(flag("n_points"), n_points, "grid points (power of two)")->capture_default_str();
        dx = &reg.add(app, "dx", "m", 0.1, len, "grid spacing");
        x0 = &reg.add(app, "x0", "m", 0.0, len, "packet centre");
        p0 = &reg.add(app, "p0", "si", 0.0, mom, "packet mean momentum", "kg m/s");
        sigma = &reg.add(app, "sigma", "m", 1.0, len, "packet width");
        mass = &reg.add(app, "mass", "si", 1.0, mass_c, "particle mass", "kg");
        app->add_option(flag("potential"), potential, "free or harmonic")
            ->check(CLI::IsMember({"free", "harmonic"}))
            ->capture_default_str();
        omega = &reg.add(app, "omega", "si", 1.0, rate, "harmonic angular frequency", "rad/s");
        t = &reg.add(app, "t", "s", 1.0, time, "total evolution time");
        dt = &reg.add(app, "dt", "s", 1e-3, time, "time step");
        app->add_option(flag("sample_every"), sample_every, "steps between observable samples")->capture_default_str();
    }

    Potential make_potential() const {
        return potential == "harmonic" ? Potential::harmonic(omega->resolve()) : Potential::free();
    }

    WaveFunction make_state() const {
        const Grid1D grid = Grid1D::centered(n_points, dx->resolve());
        return gaussian_packet(grid, x0->resolve(), p0->resolve(), sigma->resolve(), mass->resolve());
    }
};

struct CollapseOptions {
    double n_nucleons = 1.0;
    bool mass_scaling = false;
    Quantity* lambda = nullptr;
    Quantity* rc = nullptr;

    void attach(CLI::App* app, Registry& reg, const RunContext& ctx, double lambda_fallback_internal,
                double rc_fallback_internal, double n_default) {
        n_nucleons = n_default;
        lambda = &reg.add(app, "lambda", "si", lambda_fallback_internal,
                          [&ctx](double r) { return ctx.units().rate_to_internal(r); }, "collapse rate per nucleon", "1/s");
        rc = &reg.add(app, "rc", "m", rc_fallback_internal,
                      [&ctx](double m) { return ctx.units().length_to_internal(m); }, "localization length");
        app->add_option(flag("n_nucleons"), n_nucleons, "nucleons in the entangled body")->capture_default_str();
        app->add_flag(flag("mass_scaling"), mass_scaling, "scale the rate with m / m_N instead of N");
    }

    CollapseParams params(const UnitSystem& units) const {
        CollapseParams p;
        p.lambda_si = units.rate_to_si(lambda->resolve());
        p.r_c = rc->resolve();
        p.n_nucleons = n_nucleons;
        p.mass_scaling = mass_scaling;
        p.validate();
        return p;
    }
};

}  // namespace detail

/// Parses argv, runs one subcommand and writes its outputs plus manifest.json
/// into the output directory. Diagnostics go to `err`, results to `out`.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    using detail::flag;
    const auto wall_start = std::chrono::steady_clock::now();
    detail::RunContext ctx;
    detail::Registry reg;

    CLI::App app{"grwlab: spontaneous-collapse quantum trajectory laboratory", "grwlab"};
    app.set_version_flag("--version", std::string("grwlab ") + version);
    app.set_config("--config", "", "INI config file; one [section] per subcommand");
    app.add_option("--seed", ctx.seed, "master seed (unsigned 64-bit)")->capture_default_str();
    app.add_option("--out", ctx.out_dir, "output directory")->capture_default_str();
    app.add_option("--threads", ctx.threads_text, "worker threads: N or auto")
        ->envname("GRWLAB_THREADS")
        ->capture_default_str();
    app.add_option(flag("length_unit_m"), ctx.length_unit_m, "internal length unit in metres")->capture_default_str();
    app.add_option(flag("mass_unit_kg"), ctx.mass_unit_kg, "internal mass unit in kg")
        ->default_str(io::format_shortest(nucleon_mass_kg));
    app.require_subcommand(1);
    app.fallthrough();
    app.failure_message(CLI::FailureMessage::help);

    // evolve ----------------------------------------------------------------
    auto* evolve = app.add_subcommand("evolve", "pure Schroedinger evolution of a Gaussian packet");
    detail::PacketOptions evolve_opts;
    evolve_opts.attach(evolve, reg, ctx);

    // trajectory --------------------------------------------------------------
    auto* trajectory = app.add_subcommand("trajectory", "single GRW trajectory");
    detail::PacketOptions traj_opts;
    traj_opts.attach(trajectory, reg, ctx);
    detail::CollapseOptions traj_collapse;
    traj_collapse.attach(trajectory, reg, ctx, 0.0, 1.0, 1.0);
    std::uint64_t traj_stream = 0;
    trajectory->add_option(flag("stream"), traj_stream, "RNG stream index")->capture_default_str();

    // born ----------------------------------------------------------------------
    auto* born = app.add_subcommand("born", "measurement ensemble: outcome statistics of a collapsing pointer");
    MeasurementConfig born_cfg;
    born_cfg.pointer_n_nucleons = 1e23;
    double born_p_up = 0.5;
    std::size_t born_n = 1000;
    detail::CollapseOptions born_collapse;
    born_collapse.attach(born, reg, ctx, UnitSystem{}.rate_to_internal(1e-16), 1.0, 1.0);
    born->add_option(flag("p_up"), born_p_up, "|c_up|^2")->check(CLI::Range(0.0, 1.0))->capture_default_str();
    born->add_option(flag("n"), born_n, "trajectories")->capture_default_str();
    born->add_option(flag("pointer_nucleons"), born_cfg.pointer_n_nucleons, "pointer nucleon count")
        ->capture_default_str();
    born->add_option(flag("epsilon"), born_cfg.decision_epsilon, "decision threshold on the minority weight")
        ->capture_default_str();
    born->add_option(flag("n_points"), born_cfg.n_points, "grid points")->capture_default_str();
    auto len_c = [&ctx](double m) { return ctx.units().length_to_internal(m); };
    auto time_c = [&ctx](double s) { return ctx.units().time_to_internal(s); };
    auto mass_c = [&ctx](double kg) { return ctx.units().mass_to_internal(kg); };
    auto& born_sep = reg.add(born, "pointer_separation", "m", born_cfg.pointer_separation, len_c, "pointer separation");
    auto& born_sigma = reg.add(born, "pointer_sigma", "m", born_cfg.pointer_sigma, len_c, "pointer packet width");
    auto& born_dx = reg.add(born, "dx", "m", born_cfg.dx, len_c, "grid spacing");
    auto& born_dt = reg.add(born, "dt", "s", born_cfg.dt, time_c, "time step");
    auto& born_budget = reg.add(born, "t_budget", "s", born_cfg.t_budget, time_c, "time budget per trial");

    // decohere --------------------------------------------------------------------
    auto* decohere = app.add_subcommand("decohere", "decoherence-rate scan over path separations");
    DecoherenceConfig deco_cfg;
    std::size_t deco_n = 2000;
    std::vector<double> deco_d_internal{0.5, 2.0, 10.0};
    std::vector<double> deco_d_m;
    detail::CollapseOptions deco_collapse;
    deco_collapse.attach(decohere, reg, ctx, 0.01, 1.0, 100.0);
    auto* deco_d_int_opt = decohere->add_option(flag("separations_internal"), deco_d_internal,
                                                "separations [internal units]")
                               ->delimiter(',');
    auto* deco_d_m_opt = decohere->add_option(flag("separations_m"), deco_d_m, "separations [m]")->delimiter(',');
    decohere->add_option(flag("n"), deco_n, "trajectories per separation")->capture_default_str();
    decohere->add_option(flag("n_points"), deco_cfg.n_points, "grid points")->capture_default_str();
    decohere->add_option(flag("efoldings"), deco_cfg.efoldings, "target Gamma t")->capture_default_str();
    decohere->add_option(flag("n_samples"), deco_cfg.n_samples, "coherence samples")->capture_default_str();
    decohere->add_option(flag("groups"), deco_cfg.groups, "jackknife groups")->capture_default_str();
    auto& deco_dx = reg.add(decohere, "dx", "m", deco_cfg.dx, len_c, "grid spacing");
    auto& deco_sigma = reg.add(decohere, "sigma", "m", deco_cfg.sigma, len_c, "packet width");
    auto& deco_mass = reg.add(decohere, "mass", "si", deco_cfg.mass, mass_c, "particle mass", "kg");
    auto& deco_dt = reg.add(decohere, "dt", "s", deco_cfg.dt, time_c, "time step");
    auto& deco_tmax = reg.add(decohere, "t_max", "s", deco_cfg.t_max, time_c, "cap on the run length");

    // visibility ------------------------------------------------------------------
    auto* visibility = app.add_subcommand("visibility", "two-path fringe visibility under collapse");
    ScreenConfig screen;
    std::size_t vis_n = 4000;
    std::optional<double> vis_gamma_t;
    detail::CollapseOptions vis_collapse;
    vis_collapse.attach(visibility, reg, ctx, 0.0, 1.0, 1.0);
    auto& vis_d = reg.add(visibility, "d", "m", 100.0, len_c, "path separation");
    auto& vis_t = reg.add(visibility, "t_flight", "s", 50.0, time_c, "flight time");
    auto* vis_gamma_opt = visibility->add_option(flag("gamma_t"), vis_gamma_t,
                                                 "choose lambda so that Gamma(d) t_flight equals this value");
    visibility->add_option(flag("n"), vis_n, "trajectories")->capture_default_str();
    visibility->add_option(flag("n_points"), screen.n_points, "grid points")->capture_default_str();
    visibility->add_option(flag("fringes"), screen.fringes, "central fringes used")->capture_default_str();
    visibility->add_option(flag("groups"), screen.groups, "jackknife groups")->capture_default_str();
    auto& vis_dx = reg.add(visibility, "dx", "m", screen.dx, len_c, "grid spacing");
    auto& vis_sigma = reg.add(visibility, "sigma", "m", screen.sigma, len_c, "slit packet width");
    auto& vis_mass = reg.add(visibility, "mass", "si", screen.mass, mass_c, "particle mass", "kg");
    auto& vis_dt = reg.add(visibility, "dt", "s", screen.dt, time_c, "time step");

    // heating ---------------------------------------------------------------------
    auto* heating = app.add_subcommand("heating", "energy gain and momentum random walk");
    HeatingConfig heat_cfg;
    std::size_t heat_n = 10000;
    detail::CollapseOptions heat_collapse;
    heat_collapse.attach(heating, reg, ctx, 1.0, 1.0, 1.0);
    auto& heat_t = reg.add(heating, "t", "s", 20.0, time_c, "total time");
    heating->add_option(flag("n"), heat_n, "trajectories")->capture_default_str();
    heating->add_option(flag("n_points"), heat_cfg.n_points, "grid points")->capture_default_str();
    heating->add_option(flag("n_samples"), heat_cfg.n_samples, "samples")->capture_default_str();
    heating->add_option(flag("groups"), heat_cfg.groups, "jackknife groups")->capture_default_str();
    auto& heat_dx = reg.add(heating, "dx", "m", heat_cfg.dx, len_c, "grid spacing");
    auto& heat_sigma = reg.add(heating, "sigma", "m", heat_cfg.sigma, len_c, "packet width");
    auto& heat_mass = reg.add(heating, "mass", "si", heat_cfg.mass, mass_c, "particle mass", "kg");
    auto& heat_dt = reg.add(heating, "dt", "s", heat_cfg.dt, time_c, "time step");

    // exclusion -------------------------------------------------------------------
    auto* excl = app.add_subcommand("exclusion", "allowed region in the (lambda, r_c) plane");
    std::string bounds_src = "default";
    exclusion::RasterSpec spec;
    std::optional<double> point_lambda, point_rc;
    excl->add_option(flag("bounds"), bounds_src, "'default' or a bounds CSV path")->capture_default_str();
    excl->add_option(flag("log10_lambda_min"), spec.log10_lambda_min, "raster lambda axis")->capture_default_str();
    excl->add_option(flag("log10_lambda_max"), spec.log10_lambda_max, "raster lambda axis")->capture_default_str();
    excl->add_option(flag("log10_rc_min"), spec.log10_rc_min, "raster r_c axis (metres)")->capture_default_str();
    excl->add_option(flag("log10_rc_max"), spec.log10_rc_max, "raster r_c axis (metres)")->capture_default_str();
    excl->add_option(flag("cells_per_decade"), spec.cells_per_decade, "raster resolution")->capture_default_str();
    excl->add_option(flag("point_lambda_si"), point_lambda, "classify this lambda (1/s)");
    excl->add_option(flag("point_rc_m"), point_rc, "classify at this r_c (m)");

    // rates -----------------------------------------------------------------------
    auto* rates_cmd = app.add_subcommand("rates", "closed-form rate table");
    double rates_n = 1.0, rates_lambda = 1e-16, rates_rc = 1e-7, rates_t = 1e-6, rates_d = 1e-6;
    int rates_dims = 1;
    rates_cmd->add_option("--n,--n-nucleons,--n_nucleons", rates_n, "nucleons in the entangled body")
        ->capture_default_str();
    rates_cmd->add_option(flag("lambda_si"), rates_lambda, "collapse rate per nucleon (1/s)")->capture_default_str();
    rates_cmd->add_option(flag("rc_m"), rates_rc, "localization length (m)")->capture_default_str();
    rates_cmd->add_option(flag("t_s"), rates_t, "time for the survival probability (s)")->capture_default_str();
    rates_cmd->add_option(flag("d_m"), rates_d, "separation for the reduction rate (m)")->capture_default_str();
    rates_cmd->add_option(flag("dims"), rates_dims, "1 or 3")->check(CLI::IsMember({1, 3}))->capture_default_str();

    // snapshot --------------------------------------------------------------------
    auto* snap = app.add_subcommand("snapshot", "inspect or convert a QSL1 snapshot");
    std::string snap_in;
    std::string snap_to = "json";
    snap->add_option(flag("input"), snap_in, "QSL1 file")->required();
    snap->add_option(flag("to"), snap_to, "json (header summary) or csv (amplitudes)")
        ->check(CLI::IsMember({"json", "csv"}))
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? ok : config_error;
    }

    try {
        const UnitSystem units = ctx.units();
        const unsigned threads = ctx.threads();
        std::string name;

        if (evolve->parsed()) {
            name = "evolve";
            const auto psi0 = evolve_opts.make_state();
            const auto res = schrodinger_run(psi0, evolve_opts.make_potential(), evolve_opts.t->resolve(),
                                             evolve_opts.dt->resolve(), evolve_opts.sample_every);
            std::vector<double> times;
            std::vector<Observables> obs;
            for (const auto& s : res.samples) {
                times.push_back(s.t);
                obs.push_back(s.obs);
            }
            ctx.bytes("final.qsl", io::encode_snapshot(res.final_state, units));
            ctx.text("observables.csv", detail::observables_csv(times, obs));
            ctx.results = {{"final_observables", io::to_json(obs.back())}};
        } else if (trajectory->parsed()) {
            name = "trajectory";
            const auto psi0 = traj_opts.make_state();
            TrajectoryConfig tc;
            tc.t_total = traj_opts.t->resolve();
            tc.dt = traj_opts.dt->resolve();
            tc.sample_every = traj_opts.sample_every;
            RngStream rng(ctx.seed, traj_stream);
            auto rec = grw_trajectory(psi0, traj_opts.make_potential(), traj_collapse.params(units), units, tc, rng);
            rec.seed = ctx.seed;
            rec.stream = traj_stream;
            io::CsvWriter ev({"t_internal", "center_internal", "branch_weight"});
            for (const auto& e : rec.events) ev.row({e.t, e.center, e.branch_weight});
            ctx.bytes("final.qsl", io::encode_snapshot(rec.final_state, units));
            ctx.text("observables.csv", detail::observables_csv(rec.sample_times, rec.observables_at_samples));
            ctx.text("events.csv", ev.str());
            auto record = io::to_json(rec);
            record["params"] = io::to_json(traj_collapse.params(units), units);
            ctx.text("record.json", io::dump_json(record));
            ctx.results = {{"n_events", rec.events.size()}};
        } else if (born->parsed()) {
            name = "born";
            auto cfg = born_cfg;
            cfg.c_up = std::sqrt(born_p_up);
            cfg.c_down = std::sqrt(1.0 - born_p_up);
            cfg.pointer_separation = born_sep.resolve();
            cfg.pointer_sigma = born_sigma.resolve();
            cfg.dx = born_dx.resolve();
            cfg.dt = born_dt.resolve();
            cfg.t_budget = born_budget.resolve();
            const auto params = born_collapse.params(units);
            const auto ens = born_ensemble(cfg, params, units, born_n, ctx.seed, threads);
            io::CsvWriter w({"index", "outcome_up", "hits", "decision_time_internal"});
            for (std::size_t i = 0; i < ens.trials.size(); ++i) {
                const auto& t = ens.trials[i];
                w.row({static_cast<double>(i), t.outcome == Outcome::Up ? 1.0 : 0.0, static_cast<double>(t.hits),
                       t.decision_time});
            }
            ctx.text("trials.csv", w.str());
            auto report = io::to_json(ens.report);
            report["params"] = io::to_json(params, units);
            ctx.text("born_report.json", io::dump_json(report));
            ctx.results = io::to_json(ens.report);
        } else if (decohere->parsed()) {
            name = "decohere";
            if (deco_d_int_opt->count() > 0 && deco_d_m_opt->count() > 0) {
                throw ConfigurationError("'separations' is given in two unit systems");
            }
            std::vector<double> seps = deco_d_internal;
            if (deco_d_m_opt->count() > 0) {
                seps.clear();
                for (double d : deco_d_m) seps.push_back(units.length_to_internal(d));
            }
            auto cfg = deco_cfg;
            cfg.dx = deco_dx.resolve();
            cfg.sigma = deco_sigma.resolve();
            cfg.mass = deco_mass.resolve();
            cfg.dt = deco_dt.resolve();
            cfg.t_max = deco_tmax.resolve();
            cfg.threads = threads;
            const auto params = deco_collapse.params(units);
            const auto scan = decoherence_scan(seps, params, units, deco_n, ctx.seed, cfg);
            io::CsvWriter table({"separation_internal", "separation_over_rc", "gamma_fit_internal",
                                 "gamma_analytic_internal", "stderr_internal", "relative_error", "r2"});
            io::CsvWriter curves({"separation_internal", "t_internal", "coherence", "coherence_stderr"});
            nlohmann::json reports = nlohmann::json::array();
            for (const auto& r : scan) {
                const auto& f = r.report.fit_diagnostics;
                table.row({r.separation, f.at("separation_over_rc"), r.report.estimate, f.at("gamma_analytic_internal"),
                           r.report.std_error, f.at("relative_error"), f.at("r2")});
                for (std::size_t k = 0; k < r.times.size(); ++k) {
                    curves.row({r.separation, r.times[k], r.coherence[k], r.coherence_stderr[k]});
                }
                reports.push_back(io::to_json(r.report));
            }
            ctx.text("decoherence.csv", table.str());
            ctx.text("coherence_curves.csv", curves.str());
            ctx.text("decoherence_report.json",
                     io::dump_json({{"params", io::to_json(params, units)}, {"reports", reports}}));
            ctx.results = reports;
        } else if (visibility->parsed()) {
            name = "visibility";
            auto sc = screen;
            sc.dx = vis_dx.resolve();
            sc.sigma = vis_sigma.resolve();
            sc.mass = vis_mass.resolve();
            sc.dt = vis_dt.resolve();
            sc.threads = threads;
            const double d = vis_d.resolve();
            const double t_flight = vis_t.resolve();
            auto params = vis_collapse.params(units);
            if (vis_gamma_opt->count() > 0) {
                if (vis_collapse.lambda->si_opt->count() > 0 || vis_collapse.lambda->internal_opt->count() > 0) {
                    throw ConfigurationError("give either --gamma-t or a lambda, not both");
                }
                if (!(*vis_gamma_t >= 0.0)) throw DomainError("--gamma-t must be non-negative");
                CollapseParams unit_rate = params;
                unit_rate.lambda_si = 1.0;
                const double gamma_per_unit =
                    units.rate_to_internal(effective_reduction_rate(d, unit_rate, units.mass_in_nucleons(sc.mass)));
                if (!(gamma_per_unit > 0.0)) throw DomainError("separation too small to decohere");
                params.lambda_si = *vis_gamma_t / (gamma_per_unit * t_flight);
            }
            const auto r = visibility_experiment(d, params, units, t_flight, vis_n, ctx.seed, sc);
            io::CsvWriter w({"x_internal", "intensity", "intensity_ideal"});
            for (std::size_t i = 0; i < r.x.size(); ++i) w.row({r.x[i], r.intensity[i], r.intensity_ideal[i]});
            ctx.text("screen.csv", w.str());
            nlohmann::json j{{"v_measured", io::real(r.v_measured)},   {"v_ideal", io::real(r.v_ideal)},
                             {"ratio", io::real(r.ratio)},             {"ratio_stderr", io::real(r.ratio_stderr)},
                             {"v_analytic", io::real(r.v_analytic)},   {"gamma_t", io::real(r.gamma_t)},
                             {"fringe_spacing", io::real(r.fringe_spacing)}, {"mean_hits", io::real(r.mean_hits)},
                             {"n_trajectories", r.n_trajectories},     {"seed", r.seed},
                             {"params", io::to_json(params, units)}};
            ctx.text("visibility.json", io::dump_json(j));
            ctx.results = j;
        } else if (heating->parsed()) {
            name = "heating";
            auto cfg = heat_cfg;
            cfg.dx = heat_dx.resolve();
            cfg.sigma = heat_sigma.resolve();
            cfg.mass = heat_mass.resolve();
            cfg.dt = heat_dt.resolve();
            cfg.threads = threads;
            const auto params = heat_collapse.params(units);
            const auto r = heating_experiment(params, units, heat_t.resolve(), heat_n, ctx.seed, cfg);
            io::CsvWriter w({"t_internal", "mean_energy", "var_p"});
            for (std::size_t k = 0; k < r.times.size(); ++k) w.row({r.times[k], r.mean_energy[k], r.var_p[k]});
            ctx.text("heating.csv", w.str());
            nlohmann::json j{{"energy_slope", io::real(r.slope_measured)},
                             {"energy_slope_analytic", io::real(r.slope_analytic)},
                             {"energy_slope_stderr", io::real(r.std_error)},
                             {"energy_r2", io::real(r.energy_r2)},
                             {"var_p_slope", io::real(r.var_p_slope)},
                             {"var_p_slope_analytic", io::real(r.var_p_slope_analytic)},
                             {"var_p_slope_stderr", io::real(r.var_p_stderr)},
                             {"var_p_r2", io::real(r.var_p_r2)},
                             {"heating_power_w", io::real(r.slope_measured * units.power_unit_w())},
                             {"expected_hits", io::real(r.expected_hits)},
                             {"mean_hits", io::real(r.mean_hits)},
                             {"n_trajectories", r.n_trajectories},
                             {"seed", r.seed},
                             {"params", io::to_json(params, units)}};
            ctx.text("heating.json", io::dump_json(j));
            ctx.results = j;
        } else if (excl->parsed()) {
            name = "exclusion";
            std::vector<std::string> warnings;
            std::vector<exclusion::BoundCurve> bounds;
            if (bounds_src == "default") {
                bounds = exclusion::default_bounds();
            } else {
                std::ifstream in(bounds_src);
                if (!in) throw ConfigurationError("cannot open bounds file '" + bounds_src + "'");
                bounds = exclusion::load_bounds(in, &warnings);
            }
            const auto raster = exclusion::allowed_region(bounds, spec);
            auto summary = io::summary_json(raster, bounds, warnings);
            if (point_lambda || point_rc) {
                if (!point_lambda || !point_rc) throw ConfigurationError("--point-lambda-si needs --point-rc-m");
                summary["point"] = {{"lambda_si", io::real(*point_lambda)},
                                    {"rc_m", io::real(*point_rc)},
                                    {"allowed", exclusion::point_allowed(bounds, *point_lambda, *point_rc)}};
            }
            ctx.text("raster.csv", io::raster_csv(raster));
            ctx.text("boundary.csv", io::boundary_csv(exclusion::boundary_polyline(raster)));
            ctx.text("summary.json", io::dump_json(summary));
            for (const auto& w : warnings) err << "warning: " << w << "\n";
            summary.erase("curves");
            out << summary.dump(2) << "\n";
            ctx.results = summary;
        } else if (rates_cmd->parsed()) {
            name = "rates";
            CollapseParams p;
            p.lambda_si = rates_lambda;
            p.r_c = units.length_to_internal(rates_rc);
            p.n_nucleons = rates_n;
            p.validate();
            const double total = rates::amplified_rate(rates_n, rates_lambda);
            std::vector<std::pair<std::string, double>> rows{
                {"amplified_rate_s^-1", total},
                {"mean_collapse_time_s", total > 0.0 ? rates::mean_collapse_time(total)
                                                     : std::numeric_limits<double>::infinity()},
                {"survival_probability", rates::survival_probability(total, rates_t)},
                {"product_state_rate_s^-1", rates::product_state_rate(rates_lambda, 1)},
                {"reduction_rate_at_d_s^-1", effective_reduction_rate(units.length_to_internal(rates_d), p)},
                {"momentum_diffusion_si", rates::momentum_diffusion_rate(total, rates_rc)},
                {"heating_power_per_nucleon_w", rates::heating_rate(rates_lambda, 1.0, rates_rc, rates_dims)},
            };
            io::CsvWriter w({"quantity", "value"});
            nlohmann::json j = nlohmann::json::object();
            for (const auto& [k, v] : rows) {
                out << k << " " << io::format_shortest(v) << "\n";
                w.row_strings({k, io::format_real(v)});
                j[k] = io::real(v);
            }
            ctx.text("rates.csv", w.str());
            ctx.results = j;
        } else if (snap->parsed()) {
            name = "snapshot";
            const auto s = io::read_snapshot(snap_in);
            const auto obs = observables(s.psi, Potential::free());
            nlohmann::json j{{"n_points", s.psi.size()},
                             {"x_min", io::real(s.psi.grid().x_min())},
                             {"dx", io::real(s.psi.grid().dx())},
                             {"mass", io::real(s.psi.mass())},
                             {"units", io::to_json(s.units)},
                             {"observables", io::to_json(obs)}};
            if (snap_to == "csv") {
                ctx.text("wavefunction.csv", io::wavefunction_csv(s.psi));
            } else {
                ctx.text("snapshot.json", io::dump_json(j));
            }
            out << j.dump(2) << "\n";
            ctx.results = j;
        }

        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
        ctx.outputs.push_back("manifest.json");
        nlohmann::json manifest{
            {"subcommand", name},
            {"grwlab_version", version},
            {"fftw_version", std::string(fftw_version)},
            {"compiler", std::string(__VERSION__)},
            {"seed", ctx.seed},
            {"threads", threads},
            {"units", io::to_json(units)},
            {"config", {{"global", detail::echo_options(&app)}, {name, detail::echo_options(app.get_subcommand(name))}}},
            {"outputs", ctx.outputs},
            {"results", ctx.results},
            {"wall_time_s", wall},
            {"timestamp", detail::utc_timestamp()},
        };
        io::write_text(ctx.prepare() / "manifest.json", io::dump_json(manifest));
        return ok;
    } catch (const InputError& e) {
        err << "error: " << e.what() << "\n";
        return config_error;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return runtime_error;
    }
}

}  // namespace grwlab::cli
