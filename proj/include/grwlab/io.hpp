#pragma once

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "grwlab/collapse.hpp"
#include "grwlab/errors.hpp"
#include "grwlab/exclusion.hpp"
#include "grwlab/experiments.hpp"
#include "grwlab/qstate.hpp"
#include "grwlab/units.hpp"

namespace grwlab::io {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

inline constexpr std::array<char, 4> snapshot_magic{'Q', 'S', 'L', '1'};
inline constexpr std::uint32_t snapshot_version = 1;
inline constexpr std::size_t snapshot_header_bytes = 4 + 4 + 8 + 5 * 8;

struct Snapshot {
    WaveFunction psi;
    UnitSystem units;
};

namespace detail {

template <class T>
void put_le(std::vector<std::uint8_t>& out, T value) {
    std::uint64_t bits = 0;
    if constexpr (std::is_same_v<T, double>) {
        bits = std::bit_cast<std::uint64_t>(value);
    } else {
        bits = static_cast<std::uint64_t>(value);
    }
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

template <class T>
T get_le(std::span<const std::uint8_t> in, std::size_t& offset, const char* field) {
    if (in.size() < offset + sizeof(T)) {
        throw FormatError(offset, std::string("truncated snapshot while reading ") + field);
    }
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<std::uint64_t>(in[offset + i]) << (8 * i);
    offset += sizeof(T);
    if constexpr (std::is_same_v<T, double>) {
        return std::bit_cast<double>(bits);
    } else {
        return static_cast<T>(bits);
    }
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_snapshot(const WaveFunction& psi, const UnitSystem& units) {
    std::vector<std::uint8_t> out;
    out.reserve(snapshot_header_bytes + psi.size() * 16);
    for (char c : snapshot_magic) out.push_back(static_cast<std::uint8_t>(c));
    detail::put_le<std::uint32_t>(out, snapshot_version);
    detail::put_le<std::uint64_t>(out, psi.size());
    detail::put_le(out, psi.grid().x_min());
    detail::put_le(out, psi.grid().dx());
    detail::put_le(out, psi.mass());
    detail::put_le(out, units.length_unit_m());
    detail::put_le(out, units.mass_unit_kg());
    for (const auto& a : psi.amps()) {
        detail::put_le(out, a.real());
        detail::put_le(out, a.imag());
    }
    return out;
}

inline Snapshot decode_snapshot(std::span<const std::uint8_t> bytes) {
    std::size_t off = 0;
    if (bytes.size() < 4) throw FormatError(0, "truncated snapshot: missing magic");
    if (std::memcmp(bytes.data(), snapshot_magic.data(), 4) != 0) throw FormatError(0, "bad magic, expected QSL1");
    off = 4;
    const auto version_at = off;
    const auto version = detail::get_le<std::uint32_t>(bytes, off, "version");
    if (version != snapshot_version) throw FormatError(version_at, "unsupported snapshot version " + std::to_string(version));
    const auto n_at = off;
    const auto n = detail::get_le<std::uint64_t>(bytes, off, "n_points");
    if (n < 2 || (n & (n - 1)) != 0) throw FormatError(n_at, "n_points must be a power of two >= 2");
    const auto x_min = detail::get_le<double>(bytes, off, "x_min");
    const auto dx = detail::get_le<double>(bytes, off, "dx");
    const auto mass = detail::get_le<double>(bytes, off, "mass");
    const auto length_unit = detail::get_le<double>(bytes, off, "length_unit_m");
    const auto mass_unit = detail::get_le<double>(bytes, off, "mass_unit_kg");
    const std::size_t payload = off;
    if ((bytes.size() - payload) / 16 < n) {
        throw FormatError(payload + ((bytes.size() - payload) / 16) * 16, "truncated snapshot amplitudes");
    }
    if (bytes.size() != payload + n * 16) throw FormatError(payload + n * 16, "trailing bytes after amplitudes");
    std::vector<cplx> amps(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double re = detail::get_le<double>(bytes, off, "amplitude");
        const double im = detail::get_le<double>(bytes, off, "amplitude");
        amps[i] = {re, im};
    }
    try {
        return {WaveFunction(Grid1D(n, x_min, dx), std::move(amps), mass), UnitSystem(length_unit, mass_unit)};
    } catch (const InputError& e) {
        throw FormatError(8, std::string("invalid snapshot header: ") + e.what());
    }
}

inline void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigurationError("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw NumericError("write failed for '" + path.string() + "'");
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigurationError("cannot open '" + path.string() + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_snapshot(const WaveFunction& psi, const std::filesystem::path& path,
                           const UnitSystem& units = UnitSystem{}) {
    write_bytes(path, encode_snapshot(psi, units));
}

inline Snapshot read_snapshot(const std::filesystem::path& path) { return decode_snapshot(read_bytes(path)); }

// ---------------------------------------------------------------------------
// Text formats. Floats use 17 significant digits; CSV rows end in LF.
// ---------------------------------------------------------------------------

inline std::string format_real(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

/// Shortest representation that round-trips (e.g. 2e-16).
inline std::string format_shortest(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header) : width_(header.size()) {
        if (header.empty()) throw DomainError("CSV needs a header row");
        row_strings(header);
    }

    CsvWriter& row(std::initializer_list<double> values) { return row(std::vector<double>(values)); }

    CsvWriter& row(const std::vector<double>& values) {
        std::vector<std::string> cells;
        cells.reserve(values.size());
        for (double v : values) cells.push_back(format_real(v));
        return row_strings(cells);
    }

    CsvWriter& row_strings(const std::vector<std::string>& cells) {
        if (cells.size() != width_) throw ShapeError("CSV row width does not match the header");
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) text_ += ',';
            text_ += cells[i];
        }
        text_ += '\n';
        return *this;
    }

    const std::string& str() const noexcept { return text_; }

private:
    std::size_t width_;
    std::string text_;
};

inline void write_text(const std::filesystem::path& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigurationError("cannot open '" + path.string() + "' for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw NumericError("write failed for '" + path.string() + "'");
}

/// Doubles are emitted with 17 significant digits so JSON output is stable
/// across runs; non-finite values become strings.
inline nlohmann::json real(double v) {
    if (std::isfinite(v)) return nlohmann::json::parse(format_real(v));
    return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
}

inline std::string dump_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

inline nlohmann::json to_json(const UnitSystem& u) {
    return {{"length_unit_m", real(u.length_unit_m())},
            {"mass_unit_kg", real(u.mass_unit_kg())},
            {"time_unit_s", real(u.time_unit_s())}};
}

inline nlohmann::json to_json(const CollapseParams& p, const UnitSystem& u) {
    return {{"lambda_si", real(p.lambda_si)},
            {"r_c_internal", real(p.r_c)},
            {"r_c_m", real(u.length_to_si(p.r_c))},
            {"n_nucleons", real(p.n_nucleons)},
            {"mass_scaling", p.mass_scaling}};
}

inline nlohmann::json to_json(const Observables& o) {
    return {{"norm2", real(o.norm2)}, {"mean_x", real(o.mean_x)}, {"var_x", real(o.var_x)},
            {"mean_p", real(o.mean_p)}, {"var_p", real(o.var_p)}, {"energy", real(o.energy)}};
}

inline nlohmann::json to_json(const TrajectoryRecord& r) {
    nlohmann::json events = nlohmann::json::array();
    for (const auto& e : r.events) {
        events.push_back({{"t", real(e.t)}, {"center", real(e.center)}, {"branch_weight", real(e.branch_weight)}});
    }
    nlohmann::json samples = nlohmann::json::array();
    for (std::size_t k = 0; k < r.sample_times.size(); ++k) {
        nlohmann::json s{{"t", real(r.sample_times[k])}};
        if (k < r.observables_at_samples.size()) s["observables"] = to_json(r.observables_at_samples[k]);
        samples.push_back(std::move(s));
    }
    return {{"seed", r.seed}, {"stream", r.stream}, {"n_events", r.events.size()}, {"events", events},
            {"samples", samples}};
}

inline nlohmann::json to_json(const EnsembleReport& r) {
    nlohmann::json counts = nlohmann::json::object();
    for (const auto& [k, v] : r.outcome_counts) counts[k] = v;
    nlohmann::json diag = nlohmann::json::object();
    for (const auto& [k, v] : r.fit_diagnostics) diag[k] = real(v);
    return {{"n_trajectories", r.n_trajectories}, {"outcome_counts", counts}, {"estimate", real(r.estimate)},
            {"stderr", real(r.std_error)}, {"fit_diagnostics", diag}, {"seed", r.seed}};
}

inline nlohmann::json to_json(const exclusion::BoundCurve& c) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : c.points) pts.push_back({real(p.rc_m), real(p.lambda_s)});
    return {{"name", c.name}, {"kind", exclusion::to_string(c.kind)}, {"points", pts}, {"source", c.source}};
}

inline nlohmann::json summary_json(const exclusion::ExclusionRaster& r, const std::vector<exclusion::BoundCurve>& bounds,
                                   const std::vector<std::string>& warnings) {
    nlohmann::json curves = nlohmann::json::array();
    for (const auto& c : bounds) curves.push_back(to_json(c));
    return {{"span_lambda_decades", real(r.span_lambda_decades)},
            {"span_rc_decades", real(r.span_rc_decades)},
            {"closed", r.closed},
            {"empty", r.empty},
            {"open_flags", {{"lower", r.open_lower}, {"upper", r.open_upper}}},
            {"n_allowed_cells", r.n_allowed},
            {"cells_per_decade", real(1.0 / r.cell_decades)},
            {"curves", curves},
            {"warnings", warnings}};
}

inline std::string raster_csv(const exclusion::ExclusionRaster& r) {
    CsvWriter w({"log10_rc", "log10_lambda", "allowed"});
    for (std::size_t i = 0; i < r.n_rc(); ++i) {
        for (std::size_t j = 0; j < r.n_lambda(); ++j) {
            w.row({r.log10_rc_axis[i], r.log10_lambda_axis[j], r.at(i, j) ? 1.0 : 0.0});
        }
    }
    return w.str();
}

inline std::string boundary_csv(const std::vector<exclusion::BoundaryPoint>& poly) {
    CsvWriter w({"log10_rc", "log10_lambda_low", "log10_lambda_high"});
    for (const auto& p : poly) w.row({p.log10_rc, p.log10_lambda_low, p.log10_lambda_high});
    return w.str();
}

inline std::string wavefunction_csv(const WaveFunction& psi) {
    CsvWriter w({"x", "re", "im", "density"});
    for (std::size_t i = 0; i < psi.size(); ++i) {
        const auto a = psi.amps()[i];
        w.row({psi.grid().x(i), a.real(), a.imag(), std::norm(a)});
    }
    return w.str();
}

}  // namespace grwlab::io
