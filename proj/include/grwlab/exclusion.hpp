#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "grwlab/errors.hpp"
#include "grwlab/units.hpp"

namespace grwlab::exclusion {

enum class BoundKind { UpperOnLambda, LowerOnLambda };

inline const char* to_string(BoundKind k) {
    return k == BoundKind::UpperOnLambda ? "UpperOnLambda" : "LowerOnLambda";
}

struct BoundPoint {
    double rc_m = 0.0;
    double lambda_s = 0.0;
};

/// A bound on lambda as a function of r_c, interpolated linearly in
/// (log10 r_c, log10 lambda) and held constant beyond its end points.
struct BoundCurve {
    std::string name;
    BoundKind kind = BoundKind::UpperOnLambda;
    std::vector<BoundPoint> points;
    std::string source;

    void validate() const {
        if (points.size() < 2) throw DomainError("bound curve '" + name + "' needs at least two points");
        for (std::size_t i = 0; i < points.size(); ++i) {
            const auto& p = points[i];
            if (!(p.rc_m > 0.0) || !(p.lambda_s > 0.0) || !std::isfinite(p.rc_m) || !std::isfinite(p.lambda_s)) {
                throw DomainError("bound curve '" + name + "' has non-positive values");
            }
            if (i > 0 && !(p.rc_m > points[i - 1].rc_m)) {
                throw DomainError("bound curve '" + name + "' must have strictly increasing r_c");
            }
        }
    }

    double lambda_at(double rc_m) const {
        if (rc_m <= points.front().rc_m) return points.front().lambda_s;
        if (rc_m >= points.back().rc_m) return points.back().lambda_s;
        auto it = std::lower_bound(points.begin(), points.end(), rc_m,
                                   [](const BoundPoint& p, double r) { return p.rc_m < r; });
        if (it->rc_m == rc_m) return it->lambda_s;
        const auto& hi = *it;
        const auto& lo = *(it - 1);
        const double t = (std::log10(rc_m) - std::log10(lo.rc_m)) / (std::log10(hi.rc_m) - std::log10(lo.rc_m));
        return std::pow(10.0, std::log10(lo.lambda_s) + t * (std::log10(hi.lambda_s) - std::log10(lo.lambda_s)));
    }

    bool admits(double lambda_s, double rc_m) const {
        const double bound = lambda_at(rc_m);
        return kind == BoundKind::UpperOnLambda ? lambda_s <= bound : lambda_s >= bound;
    }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        const auto b = cell.find_first_not_of(" \t\r");
        const auto e = cell.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline double parse_positive(const std::string& s, std::size_t row, const char* what) {
    double v = 0.0;
    std::size_t used = 0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw ParseError(row, std::string("cannot parse ") + what + " '" + s + "'");
    }
    if (used != s.size()) throw ParseError(row, std::string("trailing characters in ") + what);
    if (!(v > 0.0) || !std::isfinite(v)) throw ParseError(row, std::string(what) + " must be positive");
    return v;
}

}  // namespace detail

/// Parses a bounds CSV with header `name,kind,rc_m,lambda_s` (an optional
/// trailing `source` column is allowed). Rows of one curve must be contiguous.
/// Rows are numbered from 1 with the header as row 1.
inline std::vector<BoundCurve> load_bounds(std::istream& in, std::vector<std::string>* warnings = nullptr) {
    std::vector<BoundCurve> curves;
    std::string line;
    std::size_t row = 0;
    bool have_header = false;
    bool has_source = false;
    std::set<std::string> finished;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        auto cells = detail::split_csv_line(line);
        if (!have_header) {
            if (cells.size() < 4 || cells[0] != "name" || cells[1] != "kind" || cells[2] != "rc_m" ||
                cells[3] != "lambda_s" || (cells.size() == 5 && cells[4] != "source") || cells.size() > 5) {
                throw ParseError(row, "expected header 'name,kind,rc_m,lambda_s[,source]'");
            }
            has_source = cells.size() == 5;
            have_header = true;
            continue;
        }
        const std::size_t want = has_source ? 5 : 4;
        if (cells.size() != want && !(has_source && cells.size() == 4)) {
            throw ParseError(row, "expected " + std::to_string(want) + " columns, got " + std::to_string(cells.size()));
        }
        const std::string& name = cells[0];
        if (name.empty()) throw ParseError(row, "empty curve name");
        BoundKind kind;
        if (cells[1] == "UpperOnLambda") {
            kind = BoundKind::UpperOnLambda;
        } else if (cells[1] == "LowerOnLambda") {
            kind = BoundKind::LowerOnLambda;
        } else {
            throw ParseError(row, "unknown bound kind '" + cells[1] + "'");
        }
        const BoundPoint pt{detail::parse_positive(cells[2], row, "rc_m"),
                            detail::parse_positive(cells[3], row, "lambda_s")};
        if (curves.empty() || curves.back().name != name) {
            if (finished.count(name) != 0) throw ParseError(row, "rows of curve '" + name + "' are not grouped");
            if (!curves.empty()) finished.insert(curves.back().name);
            curves.push_back({name, kind, {}, ""});
        } else if (curves.back().kind != kind) {
            throw ParseError(row, "curve '" + name + "' changes kind");
        }
        auto& c = curves.back();
        if (!c.points.empty() && !(pt.rc_m > c.points.back().rc_m)) {
            throw ParseError(row, "r_c is not strictly increasing within curve '" + name + "'");
        }
        c.points.push_back(pt);
        if (has_source && cells.size() == 5 && !cells[4].empty()) {
            if (!c.source.empty() && c.source != cells[4]) c.source += "; ";
            if (c.source != cells[4]) c.source += cells[4];
        }
    }
    for (const auto& c : curves) {
        if (c.points.size() < 2) throw ParseError(row, "curve '" + c.name + "' has fewer than two points");
    }
    if (curves.empty() && warnings != nullptr) {
        warnings->push_back("bounds table is empty; every (lambda, r_c) cell is allowed");
    }
    return curves;
}

inline std::vector<BoundCurve> load_bounds_string(const std::string& csv, std::vector<std::string>* warnings = nullptr) {
    std::istringstream in(csv);
    return load_bounds(in, warnings);
}

/// Bundled table. It only carries numbers quoted for the model itself: the
/// 1e-16 s^-1 floor, the 1e-8 s^-1 present experimental ceiling and the
/// 1e-5 s^-1 interference ceiling. The r_c window 1e-9..1e-5 m is closed by
/// two step-shaped sentinel curves, which are placeholders rather than data.
inline const char* default_bounds_csv() {
    return "name,kind,rc_m,lambda_s,source\n"
           "theory_lower,LowerOnLambda,1e-9,1e-16,conservative floor that still solves the measurement problem\n"
           "theory_lower,LowerOnLambda,1e-5,1e-16,conservative floor that still solves the measurement problem\n"
           "current_upper,UpperOnLambda,1e-9,1e-8,present experimental upper bound\n"
           "current_upper,UpperOnLambda,1e-5,1e-8,present experimental upper bound\n"
           "interference_upper,UpperOnLambda,1e-9,1e-5,matter-wave interference with ~1e4 nucleons\n"
           "interference_upper,UpperOnLambda,1e-5,1e-5,matter-wave interference with ~1e4 nucleons\n"
           "rc_floor_sentinel,LowerOnLambda,1e-12,1e30,placeholder lower edge of the r_c window\n"
           "rc_floor_sentinel,LowerOnLambda,0.999999e-9,1e30,placeholder lower edge of the r_c window\n"
           "rc_floor_sentinel,LowerOnLambda,1e-9,1e-300,placeholder lower edge of the r_c window\n"
           "rc_ceiling_sentinel,LowerOnLambda,1e-5,1e-300,placeholder upper edge of the r_c window\n"
           "rc_ceiling_sentinel,LowerOnLambda,1.000001e-5,1e30,placeholder upper edge of the r_c window\n"
           "rc_ceiling_sentinel,LowerOnLambda,1e0,1e30,placeholder upper edge of the r_c window\n";
}

inline std::vector<BoundCurve> default_bounds() { return load_bounds_string(default_bounds_csv()); }

/// Largest lambda compatible with observing fringe visibility >= v_min for a
/// body of n nucleons flying t_flight seconds with path separation d:
///   -ln(v_min) / (N t (1 - exp(-d^2 / (4 r_c^2)))).
/// d and r_c share a length unit. Returns +inf for d = 0 (no constraint).
inline double interference_bound(double n_nucleons, double t_flight_s, double v_min, double d, double r_c) {
    if (!(n_nucleons > 0.0) || !(t_flight_s > 0.0) || !(r_c > 0.0) || !(d >= 0.0)) {
        throw DomainError("interference_bound needs positive N, t_flight, r_c and d >= 0");
    }
    if (!(v_min > 0.0 && v_min <= 1.0)) throw DomainError("v_min must lie in (0, 1)");
    const double overlap = -std::expm1(-d * d / (4.0 * r_c * r_c));
    if (overlap == 0.0) return std::numeric_limits<double>::infinity();
    return -std::log(v_min) / (n_nucleons * t_flight_s * overlap);
}

/// Largest lambda whose heating power per nucleon stays below p_max (W):
///   p_max * 4 m_N r_c^2 / (dims hbar^2), r_c in metres.
inline double heating_bound(double p_max_w_per_nucleon, double r_c_m, int dims = 1) {
    if (!(p_max_w_per_nucleon > 0.0) || !(r_c_m > 0.0)) throw DomainError("heating_bound needs positive inputs");
    if (dims != 1 && dims != 3) throw DomainError("dims must be 1 or 3");
    return p_max_w_per_nucleon * 4.0 * nucleon_mass_kg * r_c_m * r_c_m / (dims * hbar_si * hbar_si);
}

/// Same inversion with hbar = 1 and an explicit mass.
inline double heating_bound_internal(double p_max, double r_c, double mass = 1.0, int dims = 1) {
    if (!(p_max > 0.0) || !(r_c > 0.0) || !(mass > 0.0)) throw DomainError("heating_bound needs positive inputs");
    if (dims != 1 && dims != 3) throw DomainError("dims must be 1 or 3");
    return p_max * 4.0 * mass * r_c * r_c / dims;
}

/// Samples a closed-form bound into a curve at the given r_c values (metres).
/// Non-finite values (e.g. d = 0 interference bounds) are skipped.
inline BoundCurve curve_from_formula(std::string name, BoundKind kind, const std::vector<double>& rc_values_m,
                                     const std::function<double(double)>& lambda_of_rc, std::string source = "") {
    BoundCurve c{std::move(name), kind, {}, std::move(source)};
    for (double rc : rc_values_m) {
        const double lam = lambda_of_rc(rc);
        if (std::isfinite(lam) && lam > 0.0) c.points.push_back({rc, lam});
    }
    c.validate();
    return c;
}

inline std::vector<double> log_spaced(double lo, double hi, std::size_t n) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = n == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
        v[i] = std::pow(10.0, std::log10(lo) + t * (std::log10(hi) - std::log10(lo)));
    }
    return v;
}

struct RasterSpec {
    double log10_lambda_min = -20.0;
    double log10_lambda_max = 0.0;
    double log10_rc_min = -11.0;  // metres
    double log10_rc_max = -3.0;
    int cells_per_decade = 20;

    void validate() const {
        if (!(log10_lambda_max > log10_lambda_min) || !(log10_rc_max > log10_rc_min)) {
            throw DomainError("raster ranges must be non-empty");
        }
        if (cells_per_decade < 1) throw DomainError("resolution must be at least one cell per decade");
    }
};

struct BoundaryPoint {
    double log10_rc = 0.0;
    double log10_lambda_low = 0.0;   // lower edge of the lowest allowed cell
    double log10_lambda_high = 0.0;  // upper edge of the highest allowed cell
};

/// Allowed cells on a log-log grid; index as allowed[i_rc * n_lambda + j_lambda].
struct ExclusionRaster {
    std::vector<double> log10_lambda_axis;  // cell centres
    std::vector<double> log10_rc_axis;      // cell centres
    std::vector<std::uint8_t> allowed;
    double cell_decades = 0.0;
    double span_lambda_decades = 0.0;
    double span_rc_decades = 0.0;
    std::size_t n_allowed = 0;
    bool empty = true;
    bool closed = false;
    bool open_lower = true;  // no lower bound supplied
    bool open_upper = true;  // no upper bound supplied

    std::size_t n_lambda() const noexcept { return log10_lambda_axis.size(); }
    std::size_t n_rc() const noexcept { return log10_rc_axis.size(); }
    bool at(std::size_t i_rc, std::size_t j_lambda) const { return allowed[i_rc * n_lambda() + j_lambda] != 0; }
};

inline bool point_allowed(const std::vector<BoundCurve>& bounds, double lambda_s, double rc_m) {
    return std::all_of(bounds.begin(), bounds.end(), [&](const BoundCurve& c) { return c.admits(lambda_s, rc_m); });
}

inline ExclusionRaster allowed_region(const std::vector<BoundCurve>& bounds, const RasterSpec& spec) {
    spec.validate();
    for (const auto& c : bounds) c.validate();
    ExclusionRaster r;
    r.cell_decades = 1.0 / spec.cells_per_decade;
    const auto n_lam = static_cast<std::size_t>(
        std::llround((spec.log10_lambda_max - spec.log10_lambda_min) * spec.cells_per_decade));
    const auto n_rc =
        static_cast<std::size_t>(std::llround((spec.log10_rc_max - spec.log10_rc_min) * spec.cells_per_decade));
    if (n_lam == 0 || n_rc == 0) throw DomainError("raster ranges are narrower than one cell");
    for (std::size_t j = 0; j < n_lam; ++j) {
        r.log10_lambda_axis.push_back(spec.log10_lambda_min + (static_cast<double>(j) + 0.5) * r.cell_decades);
    }
    for (std::size_t i = 0; i < n_rc; ++i) {
        r.log10_rc_axis.push_back(spec.log10_rc_min + (static_cast<double>(i) + 0.5) * r.cell_decades);
    }
    r.allowed.assign(n_rc * n_lam, 0);
    for (std::size_t i = 0; i < n_rc; ++i) {
        const double rc = std::pow(10.0, r.log10_rc_axis[i]);
        for (std::size_t j = 0; j < n_lam; ++j) {
            const double lam = std::pow(10.0, r.log10_lambda_axis[j]);
            r.allowed[i * n_lam + j] = point_allowed(bounds, lam, rc) ? 1 : 0;
        }
    }

    std::size_t i_lo = n_rc, i_hi = 0, j_lo = n_lam, j_hi = 0;
    for (std::size_t i = 0; i < n_rc; ++i) {
        for (std::size_t j = 0; j < n_lam; ++j) {
            if (!r.at(i, j)) continue;
            ++r.n_allowed;
            i_lo = std::min(i_lo, i);
            i_hi = std::max(i_hi, i);
            j_lo = std::min(j_lo, j);
            j_hi = std::max(j_hi, j);
        }
    }
    r.empty = r.n_allowed == 0;
    if (!r.empty) {
        r.span_lambda_decades = static_cast<double>(j_hi - j_lo + 1) * r.cell_decades;
        r.span_rc_decades = static_cast<double>(i_hi - i_lo + 1) * r.cell_decades;
    }
    bool edge_free = true;
    for (std::size_t j = 0; j < n_lam; ++j) edge_free = edge_free && !r.at(0, j) && !r.at(n_rc - 1, j);
    for (std::size_t i = 0; i < n_rc; ++i) edge_free = edge_free && !r.at(i, 0) && !r.at(i, n_lam - 1);
    r.closed = !r.empty && edge_free;
    r.open_lower = std::none_of(bounds.begin(), bounds.end(),
                                [](const BoundCurve& c) { return c.kind == BoundKind::LowerOnLambda; });
    r.open_upper = std::none_of(bounds.begin(), bounds.end(),
                                [](const BoundCurve& c) { return c.kind == BoundKind::UpperOnLambda; });
    return r;
}

/// Lower and upper allowed edges per r_c column that has any allowed cell.
inline std::vector<BoundaryPoint> boundary_polyline(const ExclusionRaster& r) {
    std::vector<BoundaryPoint> out;
    for (std::size_t i = 0; i < r.n_rc(); ++i) {
        std::size_t lo = r.n_lambda(), hi = 0;
        for (std::size_t j = 0; j < r.n_lambda(); ++j) {
            if (r.at(i, j)) {
                lo = std::min(lo, j);
                hi = std::max(hi, j);
            }
        }
        if (lo == r.n_lambda()) continue;
        out.push_back({r.log10_rc_axis[i], r.log10_lambda_axis[lo] - 0.5 * r.cell_decades,
                       r.log10_lambda_axis[hi] + 0.5 * r.cell_decades});
    }
    return out;
}

}  // namespace grwlab::exclusion
