#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "grwlab/exclusion.hpp"
#include "grwlab/rates.hpp"

using namespace grwlab;
using namespace grwlab::exclusion;

namespace {

const BoundCurve& find_curve(const std::vector<BoundCurve>& curves, const std::string& name) {
    for (const auto& c : curves) {
        if (c.name == name) return c;
    }
    throw std::runtime_error("missing curve " + name);
}

std::size_t parse_error_row(const std::string& csv) {
    try {
        load_bounds_string(csv);
    } catch (const ParseError& e) {
        return e.row();
    }
    return 0;
}

}  // namespace

TEST(LoadBounds, DefaultTableCurves) {
    const auto curves = default_bounds();
    const auto& upper = find_curve(curves, "current_upper");
    EXPECT_EQ(upper.kind, BoundKind::UpperOnLambda);
    for (double rc : {1e-9, 1e-7, 3e-6, 1e-5}) EXPECT_DOUBLE_EQ(upper.lambda_at(rc), 1e-8);
    const auto& lower = find_curve(curves, "theory_lower");
    EXPECT_EQ(lower.kind, BoundKind::LowerOnLambda);
    for (double rc : {1e-9, 1e-7, 1e-5}) EXPECT_DOUBLE_EQ(lower.lambda_at(rc), 1e-16);
    EXPECT_DOUBLE_EQ(find_curve(curves, "interference_upper").lambda_at(1e-7), 1e-5);
}

TEST(LoadBounds, EmptyFileWarns) {
    std::vector<std::string> warnings;
    EXPECT_TRUE(load_bounds_string("", &warnings).empty());
    ASSERT_EQ(warnings.size(), 1u);
    const auto r = allowed_region({}, RasterSpec{});
    EXPECT_EQ(r.n_allowed, r.allowed.size());
    EXPECT_FALSE(r.closed);
    EXPECT_TRUE(r.open_lower);
    EXPECT_TRUE(r.open_upper);
}

TEST(LoadBounds, ParseErrorsCarryRowNumbers) {
    const std::string head = "name,kind,rc_m,lambda_s\n";
    EXPECT_EQ(parse_error_row("nom,kind,rc_m,lambda_s\n"), 1u);
    EXPECT_EQ(parse_error_row(head + "a,UpperOnLambda,1e-9,1e-8\na,UpperOnLambda,1e-10,1e-8\n"), 3u);
    EXPECT_EQ(parse_error_row(head + "a,UpperOnLambda,1e-9,1e-8\na,UpperOnLambda,1e-9,1e-8\n"), 3u);
    EXPECT_EQ(parse_error_row(head + "a,UpperOnLambda,1e-9,-1e-8\n"), 2u);
    EXPECT_EQ(parse_error_row(head + "a,UpperOnLambda,0,1e-8\n"), 2u);
    EXPECT_EQ(parse_error_row(head + "a,UpperOnLambda,1e-9,1e-8\na,Sideways,1e-8,1e-8\n"), 3u);
    EXPECT_EQ(parse_error_row(head + "a,UpperOnLambda,1e-9,abc\n"), 2u);
    EXPECT_EQ(parse_error_row(head + "a,UpperOnLambda,1e-9\n"), 2u);
    EXPECT_EQ(parse_error_row(head + "a,UpperOnLambda,1e-9,1e-8\na,LowerOnLambda,1e-8,1e-8\n"), 3u);
    EXPECT_EQ(parse_error_row(head + "a,UpperOnLambda,1e-9,1e-8\na,UpperOnLambda,1e-8,1e-8\n"
                                     "b,UpperOnLambda,1e-9,1e-8\nb,UpperOnLambda,1e-8,1e-8\na,UpperOnLambda,1e-7,1e-8\n"),
              6u);
}

TEST(LoadBounds, SinglePointCurveIsRejected) {
    EXPECT_THROW(load_bounds_string("name,kind,rc_m,lambda_s\na,UpperOnLambda,1e-9,1e-8\n"), ParseError);
}

TEST(BoundCurve, InterpolationHitsListedPointsAndIsLogLinear) {
    const auto curves = load_bounds_string(
        "name,kind,rc_m,lambda_s\n"
        "c,UpperOnLambda,1e-9,1e-10\n"
        "c,UpperOnLambda,1e-7,1e-6\n"
        "c,UpperOnLambda,3e-6,2e-5\n");
    const auto& c = curves.front();
    for (const auto& p : c.points) EXPECT_NEAR(c.lambda_at(p.rc_m) / p.lambda_s, 1.0, 1e-12);
    // Midpoint in log r_c between the first two points: geometric mean of lambda.
    EXPECT_NEAR(c.lambda_at(1e-8) / 1e-8, 1.0, 1e-12);
    // Constant beyond the ends.
    EXPECT_DOUBLE_EQ(c.lambda_at(1e-12), 1e-10);
    EXPECT_DOUBLE_EQ(c.lambda_at(1.0), 2e-5);
    EXPECT_TRUE(c.admits(1e-11, 1e-9));
    EXPECT_FALSE(c.admits(1e-9, 1e-9));
}

TEST(InterferenceBound, Examples) {
    EXPECT_NEAR(interference_bound(1e4, 10.0, std::exp(-1.0), 1e3, 1.0) / 1e-5, 1.0, 1e-12);
    EXPECT_EQ(interference_bound(1e4, 10.0, 1.0, 1e3, 1.0), 0.0);
    EXPECT_LT(interference_bound(1e4, 10.0, 1.0 - 1e-12, 1e3, 1.0), 1e-16);
    const double ratio = interference_bound(1e4, 10.0, 0.5, 1.0, 1.0) / interference_bound(1e4, 10.0, 0.5, 2.0, 1.0);
    EXPECT_NEAR(ratio, (1.0 - std::exp(-1.0)) / (1.0 - std::exp(-0.25)), 1e-12);
    EXPECT_NEAR(ratio, 2.86, 0.01);
    EXPECT_TRUE(std::isinf(interference_bound(1e4, 10.0, 0.5, 0.0, 1.0)));
    EXPECT_THROW(interference_bound(1e4, 10.0, 0.0, 1.0, 1.0), DomainError);
}

TEST(HeatingBound, Examples) {
    EXPECT_NEAR(heating_bound(1e-30, 2e-7) / heating_bound(1e-30, 1e-7), 4.0, 1e-12);
    EXPECT_DOUBLE_EQ(heating_bound_internal(0.25, 1.0, 1.0, 1), 1.0);
    for (int dims : {1, 3}) {
        for (double lambda0 : {1e-16, 3.3e-9, 0.7}) {
            const double p = rates::heating_rate(lambda0, 1.0, 1e-7, dims);
            EXPECT_NEAR(heating_bound(p, 1e-7, dims) / lambda0, 1.0, 4.0 * std::numeric_limits<double>::epsilon());
        }
    }
}

TEST(AllowedRegion, DefaultTableIsClosedAndSpansEightDecades) {
    const auto r = allowed_region(default_bounds(), RasterSpec{});
    EXPECT_NEAR(r.span_lambda_decades, 8.0, 0.2);
    EXPECT_NEAR(r.span_rc_decades, 4.0, 0.2);
    EXPECT_TRUE(r.closed);
    EXPECT_FALSE(r.empty);
    EXPECT_FALSE(r.open_lower);
    EXPECT_FALSE(r.open_upper);
    const auto poly = boundary_polyline(r);
    ASSERT_FALSE(poly.empty());
    for (const auto& b : poly) {
        EXPECT_NEAR(b.log10_lambda_low, -16.0, 1e-9);
        EXPECT_NEAR(b.log10_lambda_high, -8.0, 1e-9);
    }
}

TEST(AllowedRegion, PointClassification) {
    const auto b = default_bounds();
    EXPECT_TRUE(point_allowed(b, 1e-12, 1e-7));
    for (double rc : {1e-11, 1e-9, 1e-7, 1e-5, 1e-3}) {
        EXPECT_FALSE(point_allowed(b, 1e-6, rc)) << rc;
        EXPECT_FALSE(point_allowed(b, 1e-17, rc)) << rc;
        EXPECT_FALSE(point_allowed(b, 1e-7, rc)) << rc;
    }
    EXPECT_FALSE(point_allowed(b, 1e-12, 1e-10));
    EXPECT_FALSE(point_allowed(b, 1e-12, 1e-4));
}

TEST(AllowedRegion, AddingCurvesNeverGrowsTheRegion) {
    const auto all = default_bounds();
    RasterSpec spec;
    spec.cells_per_decade = 5;
    std::mt19937_64 gen(3);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<BoundCurve> subset;
        for (const auto& c : all) {
            if (gen() % 2 == 0) subset.push_back(c);
        }
        auto bigger = subset;
        bigger.push_back(all[gen() % all.size()]);
        const auto a = allowed_region(subset, spec);
        const auto b = allowed_region(bigger, spec);
        for (std::size_t k = 0; k < a.allowed.size(); ++k) EXPECT_LE(b.allowed[k], a.allowed[k]);
    }
}

TEST(AllowedRegion, SingleUpperBoundIsOpenBelow) {
    const auto curves = load_bounds_string("name,kind,rc_m,lambda_s\nu,UpperOnLambda,1e-9,1e-8\nu,UpperOnLambda,1e-5,1e-8\n");
    const auto r = allowed_region(curves, RasterSpec{});
    EXPECT_TRUE(r.open_lower);
    EXPECT_FALSE(r.open_upper);
    EXPECT_FALSE(r.closed);
}

TEST(AllowedRegion, ContradictoryBoundsGiveEmptyRegion) {
    const auto curves = load_bounds_string(
        "name,kind,rc_m,lambda_s\n"
        "u,UpperOnLambda,1e-9,1e-12\nu,UpperOnLambda,1e-5,1e-12\n"
        "l,LowerOnLambda,1e-9,1e-10\nl,LowerOnLambda,1e-5,1e-10\n");
    const auto r = allowed_region(curves, RasterSpec{});
    EXPECT_TRUE(r.empty);
    EXPECT_EQ(r.n_allowed, 0u);
    EXPECT_FALSE(r.closed);
    EXPECT_TRUE(boundary_polyline(r).empty());
}

TEST(CurveFromFormula, SkipsInfiniteValues) {
    const auto c = curve_from_formula("interf", BoundKind::UpperOnLambda, {1e-9, 1e-8, 1e-7}, [](double rc) {
        return rc < 5e-9 ? std::numeric_limits<double>::infinity() : 1e-5;
    });
    EXPECT_EQ(c.points.size(), 2u);
    const auto v = log_spaced(1e-9, 1e-5, 5);
    EXPECT_NEAR(v[2], 1e-7, 1e-19);
}
