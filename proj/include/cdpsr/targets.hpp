#pragma once

// Ground-truth complex targets for simulation runs.
//
//   builtin:camera, builtin:moon   bundled 128×128 grayscale PNGs
//   synthetic:cells                disk-shaped phase objects on a flat background
//   any other string               path to a grayscale PNG

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "cdpsr/field.hpp"
#include "cdpsr/io.hpp"
#include "cdpsr/rng.hpp"

#ifndef CDPSR_DATA_DIR
#define CDPSR_DATA_DIR "data"
#endif

namespace cdpsr {

inline fs::path data_dir() {
    if (const char* env = std::getenv("CDPSR_DATA_DIR"); env && *env) return env;
    return CDPSR_DATA_DIR;
}

inline bool is_builtin_image(const std::string& source) { return source.rfind("builtin:", 0) == 0; }
inline bool is_synthetic(const std::string& source) { return source.rfind("synthetic:", 0) == 0; }

/// File backing an image source ("builtin:camera" → <data>/camera_128.png).
inline fs::path image_source_path(const std::string& source) {
    if (is_builtin_image(source)) return data_dir() / (source.substr(8) + "_128.png");
    return source;
}

/// Bilinear resampling with pixel-centre alignment and clamped borders.
inline RealGrid resize_bilinear(const RealGrid& img, std::size_t width, std::size_t height) {
    if (img.empty() || width == 0 || height == 0) throw ShapeError("resize: empty image");
    if (img.width() == width && img.height() == height) return img;
    RealGrid out(width, height, img.pitch());
    const double sx = static_cast<double>(img.width()) / static_cast<double>(width);
    const double sy = static_cast<double>(img.height()) / static_cast<double>(height);
    const auto clampi = [](double v, std::size_t n) {
        return static_cast<std::size_t>(std::clamp(v, 0.0, static_cast<double>(n - 1)));
    };
    for (std::size_t r = 0; r < height; ++r) {
        const double y = std::clamp((r + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.height() - 1));
        const std::size_t y0 = clampi(std::floor(y), img.height()), y1 = std::min(y0 + 1, img.height() - 1);
        const double fy = y - static_cast<double>(y0);
        for (std::size_t c = 0; c < width; ++c) {
            const double x = std::clamp((c + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.width() - 1));
            const std::size_t x0 = clampi(std::floor(x), img.width()), x1 = std::min(x0 + 1, img.width() - 1);
            const double fx = x - static_cast<double>(x0);
            const double top = img(y0, x0) * (1 - fx) + img(y0, x1) * fx;
            const double bot = img(y1, x0) * (1 - fx) + img(y1, x1) * fx;
            out(r, c) = top * (1 - fy) + bot * fy;
        }
    }
    return out;
}

/// Linear map of img onto [lo, hi]; a flat image maps to lo.
inline RealGrid rescale(const RealGrid& img, double lo, double hi) {
    auto [mn, mx] = std::minmax_element(img.values().begin(), img.values().end());
    const double span = *mx - *mn;
    RealGrid out = img;
    for (auto& v : out.values()) v = span > 0 ? lo + (hi - lo) * (v - *mn) / span : lo;
    return out;
}

struct CellPhantom {
    RealGrid amplitude;
    RealGrid phase;
    std::size_t interior_count = 0;  ///< disks not touching the border
};

/// Round cells on a jittered lattice. Cells are phase objects (1 rad) with
/// slight absorption; none overlap.
inline CellPhantom cell_phantom(std::size_t size, double pitch, std::uint64_t seed) {
    CellPhantom ph{RealGrid(size, size, pitch, 1.0), RealGrid(size, size, pitch, 0.0), 0};
    const double radius = std::max(3.0, size / 24.0);
    const double spacing = 3.2 * radius;
    rng::CounterEngine eng(rng::derive_key(seed, {21}));
    const std::size_t per_row = static_cast<std::size_t>(size / spacing);
    for (std::size_t i = 0; i < per_row; ++i)
        for (std::size_t j = 0; j < per_row; ++j) {
            const double cy = (i + 0.5) * spacing + (rng::to_unit(eng()) - 0.5) * 0.6 * radius;
            const double cx = (j + 0.5) * spacing + (rng::to_unit(eng()) - 0.5) * 0.6 * radius;
            bool touches = false;
            for (std::size_t r = 0; r < size; ++r)
                for (std::size_t c = 0; c < size; ++c) {
                    const double dy = r - cy, dx = c - cx;
                    if (dy * dy + dx * dx > radius * radius) continue;
                    ph.phase(r, c) = 1.0;
                    ph.amplitude(r, c) = 0.9;
                    if (r == 0 || c == 0 || r + 1 == size || c + 1 == size) touches = true;
                }
            if (!touches) ++ph.interior_count;
        }
    return ph;
}

/// Amplitude and phase channels of a test target on a size×size grid.
/// Image sources are resized and mapped to amplitude ∈ [amp_min, 1] and
/// phase ∈ [−phase_max, phase_max].
struct TargetSpec {
    std::string amplitude = "builtin:camera";
    std::string phase = "builtin:moon";
    std::size_t size = 128;
    double amp_min = 0.2;
    double phase_max = std::numbers::pi / 2;
};

struct Target {
    ComplexField field;
    std::optional<std::size_t> reference_count;  ///< known object count (synthetic only)
};

inline Target make_target(const TargetSpec& spec, double pitch, std::uint64_t seed) {
    if (spec.size == 0) throw ConfigError("target size must be positive");
    if (is_synthetic(spec.amplitude) || is_synthetic(spec.phase)) {
        if (spec.amplitude != "synthetic:cells" || spec.phase != "synthetic:cells")
            throw ConfigError("synthetic:cells must be used for both amplitude and phase");
        auto ph = cell_phantom(spec.size, pitch, seed);
        return {from_amplitude_phase(ph.amplitude, ph.phase), ph.interior_count};
    }
    auto load = [&](const std::string& src) {
        auto img = load_png_unit(image_source_path(src), pitch);
        return resize_bilinear(img, spec.size, spec.size);
    };
    auto amp = rescale(load(spec.amplitude), spec.amp_min, 1.0);
    auto ph = rescale(load(spec.phase), -spec.phase_max, spec.phase_max);
    return {from_amplitude_phase(amp, ph), std::nullopt};
}

}  // namespace cdpsr
