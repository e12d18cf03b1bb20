#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "grwlab/errors.hpp"

namespace grwlab::stats {

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
};

inline double r_squared(std::span<const double> y, std::span<const double> y_fit) {
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(y.size());
    double ss_tot = 0.0, ss_res = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        ss_tot += (y[i] - mean) * (y[i] - mean);
        ss_res += (y[i] - y_fit[i]) * (y[i] - y_fit[i]);
    }
    if (ss_tot <= 0.0) return ss_res <= 0.0 ? 1.0 : 0.0;
    return 1.0 - ss_res / ss_tot;
}

/// Ordinary least squares y = intercept + slope * x.
inline LinearFit linear_fit(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw StatisticsError("linear fit needs >= 2 matching points");
    const auto n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (!(sxx > 0.0)) throw StatisticsError("linear fit needs distinct abscissae");
    LinearFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    std::vector<double> yf(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) yf[i] = f.intercept + f.slope * x[i];
    f.r2 = r_squared(y, yf);
    return f;
}

struct ExpFit {
    double amplitude = 0.0;
    double rate = 0.0;
    double r2 = 0.0;
};

/// Least squares fit of y = A exp(-rate * t) in linear space: a log-linear
/// start (points with y > 0) refined by Gauss-Newton.
inline ExpFit exp_decay_fit(std::span<const double> t, std::span<const double> y) {
    if (t.size() != y.size() || t.size() < 3) throw StatisticsError("exponential fit needs >= 3 points");
    std::vector<double> lt, ly;
    const double y0 = std::abs(y[0]);
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (y[i] > 0.05 * y0) {
            lt.push_back(t[i]);
            ly.push_back(std::log(y[i]));
        }
    }
    double amp = y[0], rate = 0.0;
    if (lt.size() >= 2) {
        const auto start = linear_fit(lt, ly);
        amp = std::exp(start.intercept);
        rate = -start.slope;
    }
    for (int iter = 0; iter < 100; ++iter) {
        // Normal equations for (dA, drate).
        double jaa = 0.0, jar = 0.0, jrr = 0.0, ga = 0.0, gr = 0.0;
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double e = std::exp(-rate * t[i]);
            const double r = y[i] - amp * e;
            const double da = e;
            const double dr = -amp * t[i] * e;
            jaa += da * da;
            jar += da * dr;
            jrr += dr * dr;
            ga += da * r;
            gr += dr * r;
        }
        const double det = jaa * jrr - jar * jar;
        if (!(std::abs(det) > 0.0)) break;
        const double d_amp = (jrr * ga - jar * gr) / det;
        const double d_rate = (jaa * gr - jar * ga) / det;
        amp += d_amp;
        rate += d_rate;
        if (std::abs(d_amp) <= 1e-14 * std::abs(amp) && std::abs(d_rate) <= 1e-14 * (std::abs(rate) + 1e-300)) {
            break;
        }
    }
    std::vector<double> yf(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) yf[i] = amp * std::exp(-rate * t[i]);
    return {amp, rate, r_squared(y, yf)};
}

/// Delete-one-group jackknife standard error of a statistic. `leave_out(g)`
/// must return the statistic computed without group g.
inline double jackknife_stderr(std::size_t n_groups, const std::function<double(std::size_t)>& leave_out) {
    if (n_groups < 2) return 0.0;
    std::vector<double> vals(n_groups);
    double mean = 0.0;
    for (std::size_t g = 0; g < n_groups; ++g) {
        vals[g] = leave_out(g);
        mean += vals[g];
    }
    mean /= static_cast<double>(n_groups);
    double ss = 0.0;
    for (double v : vals) ss += (v - mean) * (v - mean);
    const auto g = static_cast<double>(n_groups);
    return std::sqrt((g - 1.0) / g * ss);
}

/// Upper tail of the chi-square distribution with one degree of freedom.
inline double chi2_sf_1dof(double chi2) {
    if (!(chi2 >= 0.0)) return 1.0;
    return std::erfc(std::sqrt(0.5 * chi2));
}

/// Two-sided p-value of a standard normal statistic.
inline double normal_two_sided_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

/// Two-proportion z statistic with pooled variance.
inline double two_proportion_z(std::size_t k1, std::size_t n1, std::size_t k2, std::size_t n2) {
    const double p1 = static_cast<double>(k1) / static_cast<double>(n1);
    const double p2 = static_cast<double>(k2) / static_cast<double>(n2);
    const double pool = static_cast<double>(k1 + k2) / static_cast<double>(n1 + n2);
    const double se = std::sqrt(pool * (1.0 - pool) * (1.0 / static_cast<double>(n1) + 1.0 / static_cast<double>(n2)));
    if (!(se > 0.0)) return 0.0;
    return (p1 - p2) / se;
}

/// Splits [0, n) into g contiguous, nearly equal index ranges.
inline std::vector<std::size_t> group_bounds(std::size_t n, std::size_t g) {
    std::vector<std::size_t> b(g + 1);
    for (std::size_t i = 0; i <= g; ++i) b[i] = i * n / g;
    return b;
}

}  // namespace grwlab::stats
