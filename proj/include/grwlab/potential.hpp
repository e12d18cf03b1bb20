#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "grwlab/errors.hpp"
#include "grwlab/grid.hpp"

namespace grwlab {

class Potential {
public:
    enum class Kind { Free, Harmonic, Tabulated };

    static Potential free() { return Potential(Kind::Free, 0.0, {}); }

    /// V(x) = m omega^2 x^2 / 2, with m the mass of the state it acts on.
    static Potential harmonic(double omega) {
        if (!(omega > 0.0) || !std::isfinite(omega)) {
            throw DomainError("harmonic frequency must be finite and positive");
        }
        return Potential(Kind::Harmonic, omega, {});
    }

    static Potential tabulated(std::vector<double> values) {
        if (std::any_of(values.begin(), values.end(), [](double v) { return !std::isfinite(v); })) {
            throw DomainError("tabulated potential contains non-finite values");
        }
        return Potential(Kind::Tabulated, 0.0, std::move(values));
    }

    Kind kind() const noexcept { return kind_; }
    double omega() const noexcept { return omega_; }
    const std::vector<double>& table() const noexcept { return values_; }
    bool is_free() const noexcept { return kind_ == Kind::Free; }

    std::string name() const {
        switch (kind_) {
            case Kind::Free: return "free";
            case Kind::Harmonic: return "harmonic";
            case Kind::Tabulated: return "tabulated";
        }
        return "unknown";
    }

    /// Potential values on the grid points.
    std::vector<double> sample(const Grid1D& grid, double mass) const {
        std::vector<double> v(grid.size(), 0.0);
        switch (kind_) {
            case Kind::Free: break;
            case Kind::Harmonic:
                for (std::size_t i = 0; i < v.size(); ++i) {
                    const double x = grid.x(i);
                    v[i] = 0.5 * mass * omega_ * omega_ * x * x;
                }
                break;
            case Kind::Tabulated:
                if (values_.size() != grid.size()) {
                    throw ShapeError("tabulated potential has " + std::to_string(values_.size()) +
                                     " values, grid has " + std::to_string(grid.size()));
                }
                v = values_;
                break;
        }
        return v;
    }

private:
    Potential(Kind kind, double omega, std::vector<double> values)
        : kind_(kind), omega_(omega), values_(std::move(values)) {}

    Kind kind_;
    double omega_;
    std::vector<double> values_;
};

}  // namespace grwlab
