// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <json.hpp>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "grwlab/cli.hpp"
#include "grwlab/exclusion.hpp"
#include "grwlab/io.hpp"
#include "grwlab/propagator.hpp"
#include "grwlab/stats.hpp"

using namespace grwlab;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path root = fs::temp_directory_path() / "grwlab_acceptance";

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("missing output " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json load_json(const fs::path& p) { return json::parse(slurp(p)); }

struct CliRun {
    int code = 0;
    std::string out;
    std::string err;
};

CliRun cli_run(const fs::path& out_dir, const std::string& threads, std::vector<std::string> args) {
    fs::remove_all(out_dir);
    std::vector<std::string> full{"grwlab", "--out", out_dir.string(), "--seed", "20240601", "--threads", threads};
    full.insert(full.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& a : full) argv.push_back(a.c_str());
    std::ostringstream out, err;
    CliRun r;
    r.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    if (r.code != 0) throw std::runtime_error("grwlab " + args.front() + " failed: " + r.err);
    return r;
}

// Every file except the manifest (which records wall time and thread count).
std::map<std::string, std::string> outputs_of(const fs::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        const auto name = e.path().filename().string();
        if (name != "manifest.json") files[name] = slurp(e.path());
    }
    return files;
}

struct Ensemble {
    std::string label;
    std::vector<std::string> args;
};

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

class Report {
public:
    void add(int id, bool pass, const std::string& what, const std::string& detail) {
        std::cout << (pass ? "PASS" : "FAIL") << " [" << id << "] " << what << ": " << detail << std::endl;
        all_ = all_ && pass;
    }
    bool all() const { return all_; }

private:
    bool all_ = true;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main() {
    Report report;
    const auto t_start = std::chrono::steady_clock::now();
    fs::create_directories(root);

    // The ensembles behind criteria 2-5, all at the subcommand defaults.
    const std::vector<Ensemble> ensembles{
        {"born_p20", {"born", "--p-up", "0.2", "--n", "10000"}},
        {"born_p50", {"born", "--p-up", "0.5", "--n", "10000"}},
        {"born_p80", {"born", "--p-up", "0.8", "--n", "10000"}},
        {"decohere", {"decohere", "--separations-internal", "0.5,2,10", "--n", "2000"}},
        {"heating", {"heating", "--n", "10000"}},
        {"visibility_control", {"visibility", "--lambda-si", "0", "--n", "4000"}},
        {"visibility_gt1", {"visibility", "--gamma-t", "1", "--n", "4000"}},
        {"visibility_gt5", {"visibility", "--gamma-t", "5", "--n", "4000"}},
        {"trajectory", {"trajectory", "--lambda-internal", "0.5", "--t-internal", "20", "--n-points", "512"}},
    };
    std::map<std::string, fs::path> main_dir;
    bool ensembles_ran = true;
    std::string ensemble_error;
    for (const auto& e : ensembles) {
        const auto t0 = std::chrono::steady_clock::now();
        main_dir[e.label] = root / "t4" / e.label;
        try {
            cli_run(main_dir[e.label], "4", e.args);
        } catch (const std::exception& ex) {
            ensembles_ran = false;
            ensemble_error = ex.what();
        }
        std::cout << "  ran " << e.label << " in " << fmt(seconds_since(t0)) << " s" << std::endl;
    }
    if (!ensembles_ran) std::cout << "  ensemble failure: " << ensemble_error << std::endl;

    // 1. Amplification law.
    try {
        const auto deuteron = cli_run(root / "rates2", "1", {"rates", "--n", "2", "--lambda-si", "1e-16"});
        const auto body = cli_run(root / "rates23", "1", {"rates", "--n", "1e23", "--lambda-si", "1e-16"});
        const bool ok = deuteron.out.rfind("amplified_rate_s^-1 2e-16\n", 0) == 0 &&
                        body.out.rfind("amplified_rate_s^-1 1e+07\nmean_collapse_time_s 1e-07\n", 0) == 0;
        report.add(1, ok, "amplification law",
                   "N=2 -> '" + deuteron.out.substr(0, deuteron.out.find('\n')) + "', N=1e23 -> '" +
                       body.out.substr(0, body.out.find('\n')) + "', mean time 1e-07 s < 1e-6 s");
    } catch (const std::exception& ex) {
        report.add(1, false, "amplification law", ex.what());
    }

    // 2. Born rule.
    try {
        bool ok = true;
        std::string detail;
        for (const auto& [label, p] : {std::pair{"born_p20", 0.2}, std::pair{"born_p50", 0.5}, std::pair{"born_p80", 0.8}}) {
            const auto j = load_json(main_dir.at(label) / "born_report.json");
            const double freq = j.at("estimate").get<double>();
            const double n = j.at("n_trajectories").get<double>();
            const double sigma = std::sqrt(p * (1.0 - p) / n);
            const double pval = j.at("fit_diagnostics").at("chi2_p_value").get<double>();
            ok = ok && std::abs(freq - p) <= 3.0 * sigma && pval > 0.001;
            detail += "p=" + fmt(p) + " freq " + fmt(freq) + " (3sigma " + fmt(3.0 * sigma) + ", chi2 p " + fmt(pval) + ") ";
        }
        report.add(2, ok, "Born rule", detail);
    } catch (const std::exception& ex) {
        report.add(2, false, "Born rule", ex.what());
    }

    // 3. Decoherence-rate law.
    try {
        const auto j = load_json(main_dir.at("decohere") / "decoherence_report.json");
        bool ok = j.at("reports").size() == 3;
        std::string detail;
        for (const auto& r : j.at("reports")) {
            const auto& d = r.at("fit_diagnostics");
            const double rel = d.at("relative_error").get<double>();
            const double r2 = d.at("r2").get<double>();
            ok = ok && std::abs(rel) <= 0.10 && r2 > 0.99;
            detail += "d/rc=" + fmt(d.at("separation_over_rc").get<double>()) + " rel " + fmt(rel) + " (se " +
                      fmt(r.at("stderr").get<double>() / d.at("gamma_analytic_internal").get<double>()) + ", R2 " +
                      fmt(r2) + ") ";
        }
        report.add(3, ok, "decoherence-rate law", detail);
    } catch (const std::exception& ex) {
        report.add(3, false, "decoherence-rate law", ex.what());
    }

    // 4. Heating and momentum random walk.
    try {
        const auto j = load_json(main_dir.at("heating") / "heating.json");
        const double re = j.at("energy_slope").get<double>() / j.at("energy_slope_analytic").get<double>();
        const double rp = j.at("var_p_slope").get<double>() / j.at("var_p_slope_analytic").get<double>();
        const bool ok = std::abs(re - 1.0) <= 0.05 && std::abs(rp - 1.0) <= 0.05;
        report.add(4, ok, "heating and random walk",
                   "energy slope ratio " + fmt(re) + ", Var(p) slope ratio " + fmt(rp) + " (n=" +
                       fmt(j.at("n_trajectories").get<double>()) + ")");
    } catch (const std::exception& ex) {
        report.add(4, false, "heating and random walk", ex.what());
    }

    // 5. Visibility suppression.
    try {
        const auto c = load_json(main_dir.at("visibility_control") / "visibility.json");
        const auto g1 = load_json(main_dir.at("visibility_gt1") / "visibility.json");
        const auto g5 = load_json(main_dir.at("visibility_gt5") / "visibility.json");
        const double rc = c.at("ratio").get<double>();
        const double r1 = g1.at("ratio").get<double>();
        const double r5 = g5.at("ratio").get<double>();
        const double s5 = g5.at("ratio_stderr").get<double>();
        const bool ok = std::abs(rc - 1.0) <= 0.02 && std::abs(r1 / std::exp(-1.0) - 1.0) <= 0.10 && r5 <= 0.01 + 3.0 * s5;
        report.add(5, ok, "visibility suppression",
                   "control " + fmt(rc) + ", Gamma t=1 " + fmt(r1) + " +- " + fmt(g1.at("ratio_stderr").get<double>()) +
                       " (e^-1 = 0.367879), Gamma t=5 " + fmt(r5) + " <= " + fmt(0.01 + 3.0 * s5));
    } catch (const std::exception& ex) {
        report.add(5, false, "visibility suppression", ex.what());
    }

    // 6. Quantum-mechanics limit.
    try {
        const std::vector<std::string> common{"--n-points", "1024", "--dx-internal", "0.1", "--t-internal", "4",
                                              "--dt-internal", "1e-3", "--x0-internal", "-2", "--p0-internal", "1.5",
                                              "--sample-every", "250"};
        bool ok = true;
        for (const char* potential : {"free", "harmonic"}) {
            auto ev = std::vector<std::string>{"evolve", "--potential", potential};
            auto tr = std::vector<std::string>{"trajectory", "--lambda-si", "0", "--potential", potential};
            for (auto* args : {&ev, &tr}) {
                args->insert(args->end(), common.begin(), common.end());
                if (std::string(potential) == "harmonic") args->insert(args->end(), {"--omega-internal", "0.2"});
            }
            cli_run(root / "qm_evolve", "1", ev);
            cli_run(root / "qm_trajectory", "1", tr);
            ok = ok && slurp(root / "qm_evolve" / "final.qsl") == slurp(root / "qm_trajectory" / "final.qsl") &&
                 slurp(root / "qm_evolve" / "observables.csv") == slurp(root / "qm_trajectory" / "observables.csv");
        }
        report.add(6, ok, "quantum-mechanics limit", ok ? "final.qsl and observables.csv byte-equal (free, harmonic)"
                                                        : "lambda = 0 trajectory differs from evolve");
    } catch (const std::exception& ex) {
        report.add(6, false, "quantum-mechanics limit", ex.what());
    }

    // 7. Propagator correctness.
    try {
        const auto grid = Grid1D::centered(1024, 0.1);
        const auto psi0 = gaussian_packet(grid, 0.0, 0.0, 1.0, 1.0);
        const auto psi4 = split_step(psi0, Potential::free(), 1e-3, 4000);
        const double var_rel = observables(psi4, Potential::free()).var_x / 5.0 - 1.0;

        // Strang order from a coherent state of the unit oscillator, dt over one decade.
        const auto g = Grid1D::centered(64, 0.25);
        const auto c0 = gaussian_packet(g, 2.0, 0.0, std::sqrt(0.5), 1.0);
        std::vector<cplx> exact(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double x = g.x(i), xc = 2.0 * std::cos(1.0), pc = -2.0 * std::sin(1.0);
            exact[i] = std::pow(std::numbers::pi, -0.25) * std::exp(-0.5 * (x - xc) * (x - xc)) * std::polar(1.0, pc * x);
        }
        std::vector<double> ldt, lerr;
        for (std::int64_t n : {80, 160, 320, 800}) {
            const auto psi = split_step(c0, Potential::harmonic(1.0), 1.0 / static_cast<double>(n), n);
            cplx ov = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) ov += std::conj(exact[i]) * psi.amps()[i];
            const cplx ph = ov / std::abs(ov);
            double s = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) s += std::norm(psi.amps()[i] - ph * exact[i]);
            ldt.push_back(std::log(1.0 / static_cast<double>(n)));
            lerr.push_back(0.5 * std::log(s * g.dx()));
        }
        const double order = stats::linear_fit(ldt, lerr).slope;

        double drift = 0.0;
        const auto g2 = Grid1D::centered(256, 0.1);
        const auto p2 = gaussian_packet(g2, 1.0, 0.5, 1.0, 1.0);
        for (const auto& v : {Potential::free(), Potential::harmonic(0.5)}) {
            drift = std::max(drift, std::abs(split_step(p2, v, 1e-3, 10000).norm2() - p2.norm2()));
        }
        const bool ok = std::abs(var_rel) < 1e-4 && std::abs(order - 2.0) <= 0.2 && drift < 1e-10;
        report.add(7, ok, "propagator correctness",
                   "Var(x) rel err " + fmt(var_rel) + ", Strang order " + fmt(order) + ", norm drift/1e4 steps " +
                       fmt(drift));
    } catch (const std::exception& ex) {
        report.add(7, false, "propagator correctness", ex.what());
    }

    // 8. Exclusion diagram.
    try {
        cli_run(root / "exclusion", "1", {"exclusion", "--bounds", "default"});
        const auto j = load_json(root / "exclusion" / "summary.json");
        const double span = j.at("span_lambda_decades").get<double>();
        const bool closed = j.at("closed").get<bool>();
        const auto b = exclusion::default_bounds();
        bool points = exclusion::point_allowed(b, 1e-12, 1e-7);
        for (double rc : {1e-9, 1e-8, 1e-7, 1e-6, 1e-5}) {
            points = points && !exclusion::point_allowed(b, 1e-6, rc) && !exclusion::point_allowed(b, 1e-17, rc) &&
                     !exclusion::point_allowed(b, 1e-7, rc);
        }
        const bool ok = std::abs(span - 8.0) <= 0.2 && closed && points;
        report.add(8, ok, "exclusion diagram",
                   "span " + fmt(span) + " decades, closed " + (closed ? "yes" : "no") +
                       ", (1e-12, 1e-7 m) allowed, lambda in {1e-6, 1e-7, 1e-17} excluded: " + (points ? "yes" : "no"));
    } catch (const std::exception& ex) {
        report.add(8, false, "exclusion diagram", ex.what());
    }

    // 9. Reproducibility and thread-count independence.
    try {
        bool ok = ensembles_ran;
        std::string detail;
        std::size_t n_files = 0;
        for (const auto& e : ensembles) {
            const auto a = outputs_of(main_dir.at(e.label));
            cli_run(root / "t1" / e.label, "1", e.args);
            const auto b = outputs_of(root / "t1" / e.label);
            cli_run(root / "t4_rerun" / e.label, "4", e.args);
            const auto c = outputs_of(root / "t4_rerun" / e.label);
            const bool same = !a.empty() && a == b && a == c;
            n_files += a.size();
            if (!same) detail += e.label + " differs; ";
            ok = ok && same;
        }
        if (ok) detail = std::to_string(ensembles.size()) + " ensembles, " + std::to_string(n_files) +
                         " output files byte-identical for threads 4, 1 and a rerun";
        report.add(9, ok, "reproducibility and parallel determinism", detail);
    } catch (const std::exception& ex) {
        report.add(9, false, "reproducibility and parallel determinism", ex.what());
    }

    std::cout << (report.all() ? "ALL PASS" : "SOME FAILED") << " in " << fmt(seconds_since(t_start)) << " s"
              << std::endl;
    return report.all() ? 0 : 1;
}
