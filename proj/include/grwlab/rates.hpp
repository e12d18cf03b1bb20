#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <string>

#include "grwlab/collapse.hpp"
#include "grwlab/errors.hpp"
#include "grwlab/units.hpp"

namespace grwlab::rates {

namespace detail {

// Product of the shortest decimal forms of a and b, rounded once to double.
// 1e23 * 1e-16 gives exactly 1e7 this way; plain binary multiplication does not.
inline double decimal_product(double a, double b) {
    if (a == 0.0 || b == 0.0) return a * b;
    auto split = [](double v, unsigned __int128& mant, int& exp10) {
        char buf[40];
        const auto r = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::scientific);
        mant = 0;
        exp10 = 0;
        int frac_digits = 0;
        bool in_frac = false;
        const char* p = buf;
        for (; p != r.ptr && *p != 'e'; ++p) {
            if (*p == '.') {
                in_frac = true;
            } else if (*p >= '0' && *p <= '9') {
                mant = mant * 10 + static_cast<unsigned>(*p - '0');
                frac_digits += in_frac ? 1 : 0;
            }
        }
        int e = 0;
        std::from_chars(p + 1 + (p[1] == '+' ? 1 : 0), r.ptr, e);
        exp10 = e - frac_digits;
    };
    unsigned __int128 ma = 0, mb = 0;
    int ea = 0, eb = 0;
    split(std::abs(a), ma, ea);
    split(std::abs(b), mb, eb);
    unsigned __int128 m = ma * mb;
    std::string digits;
    while (m > 0) {
        digits.insert(digits.begin(), static_cast<char>('0' + static_cast<int>(m % 10)));
        m /= 10;
    }
    const std::string text = digits + "e" + std::to_string(ea + eb);
    double out = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), out);
    if (res.ec != std::errc{}) return a * b;  // overflow or underflow: binary product saturates the same way
    return (a < 0.0) != (b < 0.0) ? -out : out;
}

}  // namespace detail

/// Collapse rate of a rigid (entangled) body of N nucleons: N * lambda.
inline double amplified_rate(double n_nucleons, double lambda_si) {
    if (!(n_nucleons >= 0.0) || !(lambda_si >= 0.0) || !std::isfinite(n_nucleons) || !std::isfinite(lambda_si)) {
        throw DomainError("amplified_rate needs finite non-negative inputs");
    }
    return detail::decimal_product(n_nucleons, lambda_si);
}

/// Mass-proportional rate (m / m_N) * lambda, with the mass given in nucleon masses.
inline double mass_rate(double mass_in_mn, double lambda_si) {
    if (!(mass_in_mn > 0.0) || !(lambda_si >= 0.0) || !std::isfinite(mass_in_mn) || !std::isfinite(lambda_si)) {
        throw DomainError("mass_rate needs a finite positive mass and non-negative rate");
    }
    return detail::decimal_product(mass_in_mn, lambda_si);
}

/// Reduction rate of each factor of an unentangled product of subsystems. A
/// hit on one factor leaves the others untouched, so there is no amplification.
inline double product_state_rate(double lambda_si, int n_subsystems) {
    if (n_subsystems < 1) throw DomainError("need at least one subsystem");
    if (!(lambda_si >= 0.0)) throw DomainError("rate must be non-negative");
    return lambda_si;
}

/// Probability of no hit up to time t.
inline double survival_probability(double rate_total, double t) {
    if (!(rate_total >= 0.0) || !(t >= 0.0)) throw DomainError("survival_probability needs rate, t >= 0");
    return std::exp(-rate_total * t);
}

inline double mean_collapse_time(double rate_total) {
    if (!(rate_total > 0.0)) throw DomainError("mean collapse time needs a positive rate");
    return 1.0 / rate_total;
}

/// d<p^2>/dt per dimension with hbar = 1: lambda / (2 r_c^2).
inline double momentum_diffusion_rate_internal(double lambda, double r_c) {
    if (!(lambda >= 0.0) || !(r_c > 0.0)) throw DomainError("momentum_diffusion_rate needs lambda >= 0, r_c > 0");
    return lambda / (2.0 * r_c * r_c);
}

/// d<p^2>/dt per dimension in SI (kg^2 m^2 s^-3); r_c in metres.
inline double momentum_diffusion_rate(double lambda_si, double r_c_m) {
    return momentum_diffusion_rate_internal(lambda_si, r_c_m) * hbar_si * hbar_si;
}

/// dE/dt = dims * lambda / (4 m r_c^2) with hbar = 1.
inline double heating_rate_internal(double lambda, double mass, double r_c, int dims = 1) {
    if (dims != 1 && dims != 3) throw DomainError("dims must be 1 or 3");
    if (!(mass > 0.0)) throw DomainError("heating_rate needs a positive mass");
    return dims * momentum_diffusion_rate_internal(lambda, r_c) / (2.0 * mass);
}

/// Heating power in watts per particle: dims * lambda * hbar^2 / (4 m r_c^2),
/// with the mass in nucleon masses and r_c in metres.
inline double heating_rate(double lambda_si, double mass_in_mn, double r_c_m, int dims = 1) {
    if (dims != 1 && dims != 3) throw DomainError("dims must be 1 or 3");
    if (!(mass_in_mn > 0.0) || !(r_c_m > 0.0) || !(lambda_si >= 0.0)) {
        throw DomainError("heating_rate needs positive mass and r_c");
    }
    const double m = mass_in_mn * nucleon_mass_kg;
    return dims * lambda_si * hbar_si * hbar_si / (4.0 * m * r_c_m * r_c_m);
}

/// Fringe-contrast attenuation exp(-Gamma(d) t_flight); t_flight in seconds.
inline double visibility_analytic(double d, const CollapseParams& params, double t_flight_s,
                                  double mass_in_mn = 1.0) {
    if (!(t_flight_s >= 0.0)) throw DomainError("flight time must be non-negative");
    return std::exp(-effective_reduction_rate(d, params, mass_in_mn) * t_flight_s);
}

}  // namespace grwlab::rates
