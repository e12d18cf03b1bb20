#pragma once

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <map>
#include <mutex>
#include <span>
#include <utility>
#include <vector>

#include "grwlab/errors.hpp"

namespace grwlab {

namespace detail {

struct FftPlanPair {
    fftw_plan forward;
    fftw_plan backward;
};

// FFTW planning is not thread safe, execution through the new-array interface
// is. Plans are created once per size and live for the rest of the process.
inline FftPlanPair fft_plans_for(std::size_t n) {
    static std::mutex mutex;
    static std::map<std::size_t, FftPlanPair> cache;
    std::lock_guard lock(mutex);
    if (auto it = cache.find(n); it != cache.end()) return it->second;

    auto* buf = fftw_alloc_complex(n);
    const int ni = static_cast<int>(n);
    // FFTW_UNALIGNED keeps results independent of the runtime alignment of
    // std::vector storage, which bit-exact reproducibility relies on.
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    FftPlanPair plans{fftw_plan_dft_1d(ni, buf, buf, FFTW_FORWARD, flags),
                      fftw_plan_dft_1d(ni, buf, buf, FFTW_BACKWARD, flags)};
    fftw_free(buf);
    if (plans.forward == nullptr || plans.backward == nullptr) {
        throw NumericError("FFTW failed to create a plan");
    }
    cache.emplace(n, plans);
    return plans;
}

inline fftw_complex* as_fftw(std::span<std::complex<double>> data) {
    return reinterpret_cast<fftw_complex*>(data.data());
}

}  // namespace detail

/// In-place complex DFT of fixed size. Forward is unnormalized; inverse
/// applies the 1/n factor unless told otherwise.
class Fft {
public:
    explicit Fft(std::size_t n) : n_(n), plans_(detail::fft_plans_for(n)) {}

    std::size_t size() const noexcept { return n_; }

    void forward(std::span<std::complex<double>> data) const {
        check(data);
        fftw_execute_dft(plans_.forward, detail::as_fftw(data), detail::as_fftw(data));
    }

    void inverse(std::span<std::complex<double>> data) const {
        inverse_unscaled(data);
        const double scale = 1.0 / static_cast<double>(n_);
        for (auto& c : data) c *= scale;
    }

    void inverse_unscaled(std::span<std::complex<double>> data) const {
        check(data);
        fftw_execute_dft(plans_.backward, detail::as_fftw(data), detail::as_fftw(data));
    }

private:
    void check(std::span<std::complex<double>> data) const {
        if (data.size() != n_) throw ShapeError("FFT buffer size does not match plan size");
    }

    std::size_t n_;
    detail::FftPlanPair plans_;
};

}  // namespace grwlab
