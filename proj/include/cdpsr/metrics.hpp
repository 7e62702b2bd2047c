#pragma once

// Image-quality metrics (PSNR, SSIM) and their complex-field wrappers.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "cdpsr/field.hpp"
#include "cdpsr/io.hpp"

namespace cdpsr {

/// Returned when the two images are identical (MSE = 0).
constexpr double kPsnrCap = 100.0;

inline double mse(const RealGrid& reference, const RealGrid& test) {
    require_same_shape(reference, test, "mse");
    double s = 0.0;
    for (std::size_t i = 0; i < reference.size(); ++i) {
        const double d = reference[i] - test[i];
        s += d * d;
    }
    return s / static_cast<double>(reference.size());
}

/// 10·log10(peak² / MSE), capped at 100 dB.
inline double psnr(const RealGrid& reference, const RealGrid& test, double peak) {
    if (!(peak > 0.0)) throw ConfigError("PSNR peak must be positive");
    const double e = mse(reference, test);
    if (e == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / e));
}

/// PSNR with the reference maximum as peak.
inline double psnr(const RealGrid& reference, const RealGrid& test) {
    const double peak = *std::max_element(reference.values().begin(), reference.values().end());
    return psnr(reference, test, peak);
}

struct SsimParams {
    std::size_t window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
};

namespace detail {

inline std::vector<double> gaussian_kernel(std::size_t window, double sigma) {
    std::vector<double> k(window);
    const double c = static_cast<double>(window / 2);
    double s = 0.0;
    for (std::size_t i = 0; i < window; ++i) {
        const double d = static_cast<double>(i) - c;
        k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
        s += k[i];
    }
    for (auto& v : k) v /= s;
    return k;
}

// Separable "valid" filtering: output is (h − win + 1) × (w − win + 1).
inline std::vector<double> filter_valid(const std::vector<double>& img, std::size_t w, std::size_t h,
                                        const std::vector<double>& k) {
    const std::size_t win = k.size(), ow = w - win + 1, oh = h - win + 1;
    std::vector<double> tmp(h * ow);
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < ow; ++c) {
            double s = 0.0;
            for (std::size_t j = 0; j < win; ++j) s += k[j] * img[r * w + c + j];
            tmp[r * ow + c] = s;
        }
    std::vector<double> out(oh * ow);
    for (std::size_t r = 0; r < oh; ++r)
        for (std::size_t c = 0; c < ow; ++c) {
            double s = 0.0;
            for (std::size_t j = 0; j < win; ++j) s += k[j] * tmp[(r + j) * ow + c];
            out[r * ow + c] = s;
        }
    return out;
}

}  // namespace detail

/// Mean SSIM over all fully-contained Gaussian windows.
inline double ssim(const RealGrid& reference, const RealGrid& test, double peak,
                   const SsimParams& params = {}) {
    require_same_shape(reference, test, "ssim");
    if (params.window % 2 == 0 || params.window == 0) throw ConfigError("SSIM window must be odd");
    if (params.window > reference.width() || params.window > reference.height())
        throw ShapeError("SSIM window larger than image");
    if (!(peak > 0.0)) throw ConfigError("SSIM peak must be positive");
    const std::size_t w = reference.width(), h = reference.height();
    const auto k = detail::gaussian_kernel(params.window, params.sigma);
    const auto& x = reference.storage();
    const auto& y = test.storage();
    std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
    }
    const auto mx = detail::filter_valid(x, w, h, k);
    const auto my = detail::filter_valid(y, w, h, k);
    const auto exx = detail::filter_valid(xx, w, h, k);
    const auto eyy = detail::filter_valid(yy, w, h, k);
    const auto exy = detail::filter_valid(xy, w, h, k);
    const double c1 = (params.k1 * peak) * (params.k1 * peak);
    const double c2 = (params.k2 * peak) * (params.k2 * peak);
    double acc = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
        const double vx = exx[i] - mx[i] * mx[i];
        const double vy = eyy[i] - my[i] * my[i];
        const double cxy = exy[i] - mx[i] * my[i];
        const double num = (2.0 * (mx[i] * my[i]) + c1) * (2.0 * cxy + c2);
        const double den = (mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2);
        acc += num / den;
    }
    return std::clamp(acc / static_cast<double>(mx.size()), -1.0, 1.0);
}

inline double ssim(const RealGrid& reference, const RealGrid& test) {
    const double peak = *std::max_element(reference.values().begin(), reference.values().end());
    return ssim(reference, test, peak > 0 ? peak : 1.0);
}

// ---------------------------------------------------------------------------
// Complex-field evaluation. Intensity measurements cannot determine a global
// phase, so the estimate is rotated by the constant phase that best aligns it
// with the truth before phase metrics are taken.

inline ComplexField align_global_phase(const ComplexField& estimate, const ComplexField& truth) {
    require_same_shape(estimate, truth, "align_global_phase");
    cplx corr{};
    for (std::size_t i = 0; i < truth.size(); ++i) corr += estimate[i] * std::conj(truth[i]);
    const cplx rot = std::abs(corr) > 0 ? std::conj(corr) / std::abs(corr) : cplx{1.0, 0.0};
    ComplexField out = estimate;
    for (auto& v : out.values()) v *= rot;
    return out;
}

/// Wrapped phase in [−π, π).
inline RealGrid wrapped_phase(const ComplexField& field) {
    RealGrid out(field.width(), field.height(), field.pitch());
    for (std::size_t i = 0; i < field.size(); ++i) out[i] = wrap_phase(std::arg(field[i]));
    return out;
}

inline double psnr_amplitude(const ComplexField& estimate, const ComplexField& truth) {
    return psnr(amplitude(truth), amplitude(estimate));
}

inline double psnr_phase(const ComplexField& estimate, const ComplexField& truth) {
    return psnr(wrapped_phase(truth), wrapped_phase(align_global_phase(estimate, truth)),
                2.0 * std::numbers::pi);
}

struct MetricsReport {
    double psnr_amplitude = 0.0;
    double psnr_phase = 0.0;
    double ssim_amplitude = 0.0;
    double ssim_phase = 0.0;
    std::optional<long> cell_count;
    std::optional<double> counting_error;  ///< percent vs a reference count

    KeyValue to_key_value() const {
        KeyValue kv;
        kv.set("psnr_amplitude", psnr_amplitude);
        kv.set("psnr_phase", psnr_phase);
        kv.set("ssim_amplitude", ssim_amplitude);
        kv.set("ssim_phase", ssim_phase);
        if (cell_count) kv.set("cell_count", *cell_count);
        if (counting_error) kv.set("counting_error", *counting_error);
        return kv;
    }

    static std::string csv_header() {
        return "psnr_amplitude,psnr_phase,ssim_amplitude,ssim_phase,cell_count,counting_error";
    }

    std::string csv_row() const {
        auto f = KeyValue::format_double;
        return f(psnr_amplitude) + "," + f(psnr_phase) + "," + f(ssim_amplitude) + "," +
               f(ssim_phase) + "," + (cell_count ? std::to_string(*cell_count) : "") + "," +
               (counting_error ? f(*counting_error) : "");
    }
};

inline MetricsReport evaluate_field(const ComplexField& estimate, const ComplexField& truth) {
    MetricsReport rep;
    const auto amp_t = amplitude(truth), amp_e = amplitude(estimate);
    const auto aligned = align_global_phase(estimate, truth);
    const auto ph_t = wrapped_phase(truth), ph_e = wrapped_phase(aligned);
    const double amp_peak = *std::max_element(amp_t.values().begin(), amp_t.values().end());
    const double ph_peak = 2.0 * std::numbers::pi;
    rep.psnr_amplitude = psnr(amp_t, amp_e, amp_peak > 0 ? amp_peak : 1.0);
    rep.psnr_phase = psnr(ph_t, ph_e, ph_peak);
    rep.ssim_amplitude = ssim(amp_t, amp_e, amp_peak > 0 ? amp_peak : 1.0);
    rep.ssim_phase = ssim(ph_t, ph_e, ph_peak);
    return rep;
}

/// |count − reference| / reference in percent.
inline double counting_error_percent(long count, long reference) {
    if (reference <= 0) throw ConfigError("reference count must be positive");
    return 100.0 * std::abs(static_cast<double>(count - reference)) / static_cast<double>(reference);
}

}  // namespace cdpsr
