#pragma once

// Thin FFTW wrapper. Plans are cached per (rows, cols, direction) behind a
// mutex because the FFTW planner is not thread-safe; fftw_execute_dft on a
// cached plan is. FFTW_ESTIMATE keeps plan choice independent of timing, so
// results are bit-reproducible run to run.

#include <complex>
#include <cstddef>
#include <map>
#include <mutex>
#include <span>
#include <tuple>
#include <vector>

#include <fftw3.h>

namespace cdpsr::fft {

namespace detail {

class PlanCache {
public:
    static PlanCache& instance() {
        static PlanCache cache;
        return cache;
    }

    fftw_plan get(std::size_t rows, std::size_t cols, int sign) {
        std::lock_guard lock(mutex_);
        auto key = std::make_tuple(rows, cols, sign);
        auto it = plans_.find(key);
        if (it != plans_.end()) return it->second;
        std::vector<std::complex<double>> scratch(rows * cols);
        auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
        fftw_plan plan = fftw_plan_dft_2d(static_cast<int>(rows), static_cast<int>(cols), buf, buf,
                                          sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
        plans_.emplace(key, plan);
        return plan;
    }

    PlanCache(const PlanCache&) = delete;
    PlanCache& operator=(const PlanCache&) = delete;

private:
    PlanCache() = default;
    ~PlanCache() {
        for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
    }

    std::mutex mutex_;
    std::map<std::tuple<std::size_t, std::size_t, int>, fftw_plan> plans_;
};

}  // namespace detail

/// In-place unnormalised forward 2-D DFT of a row-major rows×cols array.
inline void forward(std::span<std::complex<double>> data, std::size_t rows, std::size_t cols) {
    auto plan = detail::PlanCache::instance().get(rows, cols, FFTW_FORWARD);
    auto* buf = reinterpret_cast<fftw_complex*>(data.data());
    fftw_execute_dft(plan, buf, buf);
}

/// In-place inverse 2-D DFT, normalised by 1/(rows·cols).
inline void inverse(std::span<std::complex<double>> data, std::size_t rows, std::size_t cols) {
    auto plan = detail::PlanCache::instance().get(rows, cols, FFTW_BACKWARD);
    auto* buf = reinterpret_cast<fftw_complex*>(data.data());
    fftw_execute_dft(plan, buf, buf);
    const double scale = 1.0 / static_cast<double>(rows * cols);
    for (auto& v : data) v *= scale;
}

}  // namespace cdpsr::fft
