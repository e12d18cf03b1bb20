#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "grwlab/propagator.hpp"
#include "grwlab/stats.hpp"

using namespace grwlab;

namespace {

// Coherent state of the m = omega = 1 oscillator started at rest at x0, up to a global phase.
WaveFunction coherent_state(const Grid1D& grid, double x0, double t) {
    const double xc = x0 * std::cos(t);
    const double pc = -x0 * std::sin(t);
    std::vector<cplx> amps(grid.size());
    for (std::size_t i = 0; i < amps.size(); ++i) {
        const double x = grid.x(i);
        amps[i] = std::pow(std::numbers::pi, -0.25) * std::exp(-0.5 * (x - xc) * (x - xc)) * std::polar(1.0, pc * x);
    }
    return WaveFunction(grid, std::move(amps), 1.0);
}

cplx inner(const WaveFunction& a, const WaveFunction& b) {
    cplx s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::conj(a.amps()[i]) * b.amps()[i];
    return s * a.grid().dx();
}

// || a - e^{i phi} b || with phi chosen to align the global phase.
double phase_aligned_distance(const WaveFunction& a, const WaveFunction& b) {
    const cplx ov = inner(b, a);
    const cplx ph = ov / std::abs(ov);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::norm(a.amps()[i] - ph * b.amps()[i]);
    return std::sqrt(s * a.grid().dx());
}

}  // namespace

TEST(SpreadAnalytic, Examples) {
    EXPECT_DOUBLE_EQ(spread_analytic(0.7, 3.0, 0.0), 0.7);
    EXPECT_NEAR(spread_analytic(1.0, 1.0, 4.0), std::sqrt(5.0), 1e-12);
    EXPECT_NEAR(spread_analytic(1.0, 2.0, 4.0), std::sqrt(2.0), 1e-12);
    EXPECT_THROW(spread_analytic(0.0, 1.0, 1.0), DomainError);
}

TEST(SplitStep, FreeSpreadingMatchesClosedForm) {
    const auto grid = Grid1D::centered(1024, 0.1);
    const auto psi0 = gaussian_packet(grid, 0.0, 0.0, 1.0, 1.0);
    const auto psi = split_step(psi0, Potential::free(), 1e-3, 4000);
    const double var = observables(psi, Potential::free()).var_x;
    EXPECT_NEAR(var / 5.0 - 1.0, 0.0, 1e-4);
}

TEST(SplitStep, HarmonicCoherentStateRevives) {
    const auto grid = Grid1D::centered(128, 0.125);
    const auto psi0 = gaussian_packet(grid, 2.0, 0.0, std::sqrt(0.5), 1.0);
    const std::int64_t n = 4000;
    const auto psi = split_step(psi0, Potential::harmonic(1.0), 2.0 * std::numbers::pi / n, n);
    EXPECT_GE(std::norm(inner(psi0, psi)), 1.0 - 1e-6);
}

TEST(SplitStep, ZeroStepsIsBitIdentical) {
    const auto grid = Grid1D::centered(64, 0.2);
    const auto psi0 = gaussian_packet(grid, 0.3, 1.0, 0.8, 1.0);
    const auto psi = split_step(psi0, Potential::harmonic(1.0), 1e-3, 0);
    for (std::size_t i = 0; i < psi.size(); ++i) {
        EXPECT_EQ(psi.amps()[i].real(), psi0.amps()[i].real());
        EXPECT_EQ(psi.amps()[i].imag(), psi0.amps()[i].imag());
    }
}

TEST(SplitStep, RequiresNormalizedInput) {
    const auto grid = Grid1D::centered(64, 0.2);
    WaveFunction psi = gaussian_packet(grid, 0.0, 0.0, 1.0, 1.0);
    for (auto& a : psi.data()) a *= 2.0;
    EXPECT_THROW(split_step(psi, Potential::free(), 1e-3, 1), PreconditionError);
}

TEST(SplitStep, UnitarityOver1e4Steps) {
    const auto grid = Grid1D::centered(256, 0.1);
    const auto psi0 = gaussian_packet(grid, 1.0, 0.5, 1.0, 1.0);
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> ud(0.0, 10.0);
    std::vector<double> table(grid.size());
    for (auto& v : table) v = ud(gen);
    for (const auto& v : {Potential::free(), Potential::harmonic(0.5), Potential::tabulated(table)}) {
        const auto psi = split_step(psi0, v, 1e-3, 10000);
        EXPECT_LT(std::abs(psi.norm2() - psi0.norm2()), 1e-10) << v.name();
    }
}

TEST(SplitStep, TimeReversal) {
    const auto grid = Grid1D::centered(256, 0.1);
    const auto psi0 = gaussian_packet(grid, -1.0, 2.0, 0.9, 1.0);
    for (const auto& v : {Potential::free(), Potential::harmonic(0.7)}) {
        const auto fwd = split_step(psi0, v, 2e-3, 1000);
        const auto back = split_step(fwd, v, -2e-3, 1000);
        EXPECT_GE(std::norm(inner(psi0, back)), 1.0 - 1e-8) << v.name();
    }
}

TEST(SplitStep, StrangSecondOrderConvergence) {
    const auto grid = Grid1D::centered(64, 0.25);
    const double t = 1.0, x0 = 2.0;
    const auto psi0 = gaussian_packet(grid, x0, 0.0, std::sqrt(0.5), 1.0);
    const auto exact = coherent_state(grid, x0, t);
    std::vector<double> log_dt, log_err;
    for (std::int64_t n : {80, 160, 320, 800}) {
        const double dt = t / static_cast<double>(n);
        const auto psi = split_step(psi0, Potential::harmonic(1.0), dt, n);
        log_dt.push_back(std::log(dt));
        log_err.push_back(std::log(phase_aligned_distance(psi, exact)));
    }
    const auto fit = stats::linear_fit(log_dt, log_err);
    EXPECT_NEAR(fit.slope, 2.0, 0.2);
}

TEST(SplitStep, SegmentationIsBitIdentical) {
    const auto grid = Grid1D::centered(256, 0.1);
    const auto psi0 = gaussian_packet(grid, 0.5, 0.5, 1.0, 1.0);
    const SplitStepPropagator prop(grid, 1.0, Potential::harmonic(0.8), 1e-3);
    auto a = psi0.data();
    auto b = psi0.data();
    prop.advance(a, 250);
    prop.advance(b, 100);
    prop.advance(b, 150);
    EXPECT_EQ(a, b);
}

TEST(SplitStep, GuardsAreHardPreconditions) {
    const auto grid = Grid1D::centered(128, 0.1);
    // k_max = 31.4, k_max^2 / 2 = 493: dt = 0.01 breaks the phase guard.
    EXPECT_THROW(SplitStepPropagator(grid, 1.0, Potential::free(), 0.01), StepSizeError);
    // max V = 0.5 * 100 * 6.4^2 = 2048: dt = 1e-3 breaks the kick guard.
    EXPECT_THROW(SplitStepPropagator(grid, 1.0, Potential::harmonic(10.0), 1e-3), StepSizeError);
    EXPECT_THROW(SplitStepPropagator(grid, 1.0, Potential::free(), 0.0), StepSizeError);
    EXPECT_NO_THROW(SplitStepPropagator(grid, 1.0, Potential::free(), 1e-3));
}

TEST(Potential, TabulatedLengthMismatch) {
    const auto grid = Grid1D::centered(64, 0.1);
    EXPECT_THROW(Potential::tabulated(std::vector<double>(63, 0.0)).sample(grid, 1.0), ShapeError);
}

TEST(SchrodingerRun, SamplingDoesNotPerturbResult) {
    const auto grid = Grid1D::centered(256, 0.1);
    const auto psi0 = gaussian_packet(grid, 0.0, 1.0, 1.0, 1.0);
    const auto dense = schrodinger_run(psi0, Potential::free(), 1.0, 1e-3, 7);
    const auto sparse = schrodinger_run(psi0, Potential::free(), 1.0, 1e-3, 1000);
    EXPECT_EQ(dense.final_state.data(), sparse.final_state.data());
    EXPECT_EQ(dense.samples.front().t, 0.0);
    EXPECT_DOUBLE_EQ(dense.samples.back().t, 1.0);
    EXPECT_EQ(sparse.samples.size(), 2u);
}

TEST(SchrodingerRun, HarmonicSamplingDoesNotPerturbResult) {
    const auto grid = Grid1D::centered(128, 0.125);
    const auto psi0 = gaussian_packet(grid, 1.0, 0.0, 1.0, 1.0);
    const auto a = schrodinger_run(psi0, Potential::harmonic(1.0), 0.5, 1e-3, 3);
    const auto b = schrodinger_run(psi0, Potential::harmonic(1.0), 0.5, 1e-3, 500);
    EXPECT_EQ(a.final_state.data(), b.final_state.data());
}

TEST(SchrodingerRun, EnergyConserved) {
    const auto grid = Grid1D::centered(128, 0.125);
    const auto psi0 = gaussian_packet(grid, 1.5, 0.3, 0.8, 1.0);
    const auto r = schrodinger_run(psi0, Potential::harmonic(1.0), 2.0, 1e-3, 100);
    for (const auto& s : r.samples) EXPECT_NEAR(s.obs.energy, r.samples.front().obs.energy, 1e-5);
}

TEST(StepCount, RequiresIntegerMultiple) {
    EXPECT_EQ(step_count(1.0, 1e-3), 1000);
    EXPECT_THROW(step_count(1.0, 0.3), StepSizeError);
    EXPECT_THROW(step_count(-1.0, 0.1), DomainError);
}
