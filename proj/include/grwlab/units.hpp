#pragma once

#include <cmath>

#include "grwlab/errors.hpp"

namespace grwlab {

inline constexpr double hbar_si = 1.054571817e-34;        // J s
inline constexpr double nucleon_mass_kg = 1.67262192e-27;  // m_N
inline constexpr double electron_nucleon_mass_ratio = 1.0 / 1836.15;

/// Internal unit system with hbar = 1.
///
/// The caller picks a length unit and a mass unit; the time unit follows from
/// hbar = 1, i.e. time_unit = mass_unit * length_unit^2 / hbar_si. The default
/// (1e-7 m, one nucleon mass) keeps the canonical localization length at 1 and
/// nucleon masses at 1, giving a time unit of about 1.586e-7 s.
class UnitSystem {
public:
    UnitSystem() : UnitSystem(1e-7, nucleon_mass_kg) {}

    UnitSystem(double length_unit_m, double mass_unit_kg)
        : length_unit_m_(length_unit_m), mass_unit_kg_(mass_unit_kg) {
        if (!(length_unit_m > 0.0) || !std::isfinite(length_unit_m) || !(mass_unit_kg > 0.0) ||
            !std::isfinite(mass_unit_kg)) {
            throw DomainError("unit scales must be finite and strictly positive");
        }
        time_unit_s_ = mass_unit_kg_ * length_unit_m_ * length_unit_m_ / hbar_si;
    }

    double length_unit_m() const noexcept { return length_unit_m_; }
    double mass_unit_kg() const noexcept { return mass_unit_kg_; }
    double time_unit_s() const noexcept { return time_unit_s_; }
    static constexpr double hbar_internal() noexcept { return 1.0; }

    double energy_unit_j() const noexcept { return hbar_si / time_unit_s_; }
    double power_unit_w() const noexcept { return energy_unit_j() / time_unit_s_; }

    double rate_to_internal(double per_s) const noexcept { return per_s * time_unit_s_; }
    double rate_to_si(double per_internal) const noexcept { return per_internal / time_unit_s_; }
    double length_to_internal(double m) const noexcept { return m / length_unit_m_; }
    double length_to_si(double internal) const noexcept { return internal * length_unit_m_; }
    double mass_to_internal(double kg) const noexcept { return kg / mass_unit_kg_; }
    double mass_to_si(double internal) const noexcept { return internal * mass_unit_kg_; }
    double mass_in_nucleons(double internal) const noexcept { return internal * mass_unit_kg_ / nucleon_mass_kg; }
    double time_to_internal(double s) const noexcept { return s / time_unit_s_; }
    double time_to_si(double internal) const noexcept { return internal * time_unit_s_; }

    friend bool operator==(const UnitSystem&, const UnitSystem&) = default;

private:
    double length_unit_m_;
    double mass_unit_kg_;
    double time_unit_s_;
};

/// Converts a rate given in s^-1 to inverse internal time.
inline double convert_rate(double lambda_si, const UnitSystem& units) {
    if (!(lambda_si >= 0.0)) throw DomainError("collapse rate must be non-negative");
    return units.rate_to_internal(lambda_si);
}

}  // namespace grwlab
