#pragma once

// Measurement synthesis: phase-mask generation, the intensity forward model
// y_ℓ = bin(|propagate(d_ℓ ⊙ u)|²) and the two noise injectors.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "cdpsr/field.hpp"
#include "cdpsr/io.hpp"
#include "cdpsr/parallel.hpp"
#include "cdpsr/propagation.hpp"
#include "cdpsr/rng.hpp"

namespace cdpsr {

enum class MaskKind { IidPhase, ShiftedDiffuser };

inline const char* to_string(MaskKind k) {
    return k == MaskKind::IidPhase ? "iid-phase" : "shifted-diffuser";
}

inline MaskKind parse_mask_kind(const std::string& s) {
    if (s == "iid-phase") return MaskKind::IidPhase;
    if (s == "shifted-diffuser") return MaskKind::ShiftedDiffuser;
    throw ConfigError("unknown mask kind '" + s + "'");
}

struct ShiftOffset {
    std::size_t dx = 0;
    std::size_t dy = 0;
    friend bool operator==(const ShiftOffset&, const ShiftOffset&) = default;
};

/// Parameters that fully determine a mask set.
struct MaskSpec {
    MaskKind kind = MaskKind::IidPhase;
    std::size_t count = 1;
    std::size_t width = 0;
    std::size_t height = 0;
    double pitch = 1.0;
    std::uint64_t seed = 0;
    std::size_t feature_scale = 1;
    /// Raster step between diffuser positions (shifted-diffuser only); 0 = feature_scale.
    std::size_t shift_step = 0;
    /// Explicit diffuser positions; when empty a √count × √count raster is used.
    std::vector<ShiftOffset> offsets;
};

struct MaskSet {
    MaskSpec spec;
    std::vector<ComplexField> masks;
    std::vector<ShiftOffset> shift_offsets;  ///< shifted-diffuser only

    std::size_t size() const noexcept { return masks.size(); }
};

namespace detail {

/// Unit phasors with iid uniform phase, box-smoothed (periodic boundary)
/// over feature_scale² pixels and renormalised to unit modulus.
inline std::vector<cplx> smoothed_phase_screen(std::size_t width, std::size_t height,
                                               std::uint64_t key, std::size_t feature_scale) {
    std::vector<cplx> raw(width * height);
    rng::CounterEngine eng(key);
    for (auto& v : raw) v = std::polar(1.0, 2.0 * std::numbers::pi * rng::to_unit(eng()));
    if (feature_scale <= 1) return raw;

    const auto fs = static_cast<std::ptrdiff_t>(feature_scale);
    const std::ptrdiff_t lo = -(fs / 2);
    const auto w = static_cast<std::ptrdiff_t>(width), h = static_cast<std::ptrdiff_t>(height);
    auto wrap = [](std::ptrdiff_t i, std::ptrdiff_t n) { return ((i % n) + n) % n; };

    // separable box sum: rows then columns
    std::vector<cplx> tmp(raw.size());
    for (std::ptrdiff_t r = 0; r < h; ++r)
        for (std::ptrdiff_t c = 0; c < w; ++c) {
            cplx s{};
            for (std::ptrdiff_t k = lo; k < lo + fs; ++k) s += raw[r * w + wrap(c + k, w)];
            tmp[r * w + c] = s;
        }
    std::vector<cplx> out(raw.size());
    for (std::ptrdiff_t r = 0; r < h; ++r)
        for (std::ptrdiff_t c = 0; c < w; ++c) {
            cplx s{};
            for (std::ptrdiff_t k = lo; k < lo + fs; ++k) s += tmp[wrap(r + k, h) * w + c];
            const double m = std::abs(s);
            const std::size_t i = static_cast<std::size_t>(r * w + c);
            out[i] = m > 1e-300 ? s / m : raw[i];
        }
    return out;
}

}  // namespace detail

/// Raster of diffuser positions: ℓ → (col·step, row·step) on a side×side grid.
inline std::vector<ShiftOffset> raster_offsets(std::size_t count, std::size_t step) {
    const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(count))));
    if (side * side != count)
        throw ConfigError("shifted-diffuser needs a square mask count (got " + std::to_string(count) +
                          ") or explicit offsets");
    std::vector<ShiftOffset> offs;
    offs.reserve(count);
    for (std::size_t r = 0; r < side; ++r)
        for (std::size_t c = 0; c < side; ++c) offs.push_back({c * step, r * step});
    return offs;
}

inline MaskSet generate_mask_set(const MaskSpec& spec) {
    if (spec.count == 0) throw ConfigError("mask count must be >= 1");
    if (spec.width == 0 || spec.height == 0) throw ShapeError("mask dimensions must be nonzero");
    if (spec.feature_scale == 0) throw ConfigError("feature_scale must be >= 1");
    MaskSet set;
    set.spec = spec;
    set.masks.reserve(spec.count);

    if (spec.kind == MaskKind::IidPhase) {
        for (std::size_t l = 0; l < spec.count; ++l) {
            auto key = rng::derive_key(spec.seed, {1, l});
            set.masks.emplace_back(spec.width, spec.height, spec.pitch,
                                   detail::smoothed_phase_screen(spec.width, spec.height, key,
                                                                 spec.feature_scale));
        }
        return set;
    }

    const std::size_t step = spec.shift_step ? spec.shift_step : spec.feature_scale;
    set.spec.shift_step = step;
    if (spec.offsets.empty()) {
        set.shift_offsets = raster_offsets(spec.count, step);
    } else {
        if (spec.offsets.size() != spec.count)
            throw ConfigError("explicit offsets must match the mask count");
        set.shift_offsets = spec.offsets;
    }
    std::size_t max_dx = 0, max_dy = 0;
    for (const auto& o : set.shift_offsets) {
        max_dx = std::max(max_dx, o.dx);
        max_dy = std::max(max_dy, o.dy);
    }
    const std::size_t mw = spec.width + max_dx, mh = spec.height + max_dy;
    const auto master =
        detail::smoothed_phase_screen(mw, mh, rng::derive_key(spec.seed, {2}), spec.feature_scale);
    for (const auto& o : set.shift_offsets) {
        ComplexField m(spec.width, spec.height, spec.pitch);
        for (std::size_t r = 0; r < spec.height; ++r)
            for (std::size_t c = 0; c < spec.width; ++c) m(r, c) = master[(r + o.dy) * mw + c + o.dx];
        set.masks.push_back(std::move(m));
    }
    return set;
}

// ---------------------------------------------------------------------------

enum class NoiseKind { None, Poisson, Gaussian };

inline const char* to_string(NoiseKind k) {
    switch (k) {
        case NoiseKind::None: return "none";
        case NoiseKind::Poisson: return "poisson";
        case NoiseKind::Gaussian: return "gaussian";
    }
    return "none";
}

inline NoiseKind parse_noise_kind(const std::string& s) {
    if (s == "none") return NoiseKind::None;
    if (s == "poisson") return NoiseKind::Poisson;
    if (s == "gaussian") return NoiseKind::Gaussian;
    throw ConfigError("unknown noise kind '" + s + "'");
}

struct MeasurementStack {
    std::vector<IntensityImage> frames;
    NoiseKind noise_kind = NoiseKind::None;
    double noise_param = 0.0;  ///< photon level (poisson) or SNR in dB (gaussian)
    std::uint64_t seed = 0;
    bool clamped = false;

    std::size_t size() const noexcept { return frames.size(); }
};

inline void check_consistent(const ComplexField& u, const MaskSet& masks, const OpticalConfig& optics) {
    optics.validate();
    if (masks.masks.empty()) throw ConfigError("mask set is empty");
    for (const auto& m : masks.masks) {
        require_same_shape(u, m, "mask vs field");
        if (m.pitch() != u.pitch()) throw ShapeError("mask pitch differs from field pitch");
    }
    const double rel = std::abs(optics.geometry.hr_pitch - u.pitch()) / u.pitch();
    if (rel > 1e-12) throw ShapeError("field pitch does not match the HR pitch of the geometry");
    optics.geometry.check_hr_dims(u.width(), u.height());
}

/// One noiseless frame: bin(|propagate(mask ⊙ u)|², θ).
inline IntensityImage simulate_frame(const ComplexField& u, const ComplexField& mask,
                                     const Propagator& prop, const SamplingGeometry& geom) {
    return bin_intensity(intensity(prop.propagate(hadamard_modulate(u, mask))), geom);
}

inline MeasurementStack simulate_measurements(const ComplexField& u, const MaskSet& masks,
                                              const OpticalConfig& optics, std::size_t threads = 1) {
    check_consistent(u, masks, optics);
    Propagator prop(u.width(), u.height(), u.pitch(), optics);
    MeasurementStack stack;
    stack.frames.resize(masks.size());
    parallel_for(masks.size(), threads, [&](std::size_t l) {
        stack.frames[l] = simulate_frame(u, masks.masks[l], prop, optics.geometry);
    });
    return stack;
}

inline MeasurementStack add_poisson_noise(const MeasurementStack& stack, double photon_level,
                                          std::uint64_t seed) {
    if (!(photon_level > 0.0) || !std::isfinite(photon_level))
        throw ConfigError("photon level must be positive and finite");
    if (stack.noise_kind != NoiseKind::None) throw ConfigError("stack already carries noise");
    MeasurementStack out = stack;
    out.noise_kind = NoiseKind::Poisson;
    out.noise_param = photon_level;
    out.seed = seed;
    for (std::size_t l = 0; l < out.frames.size(); ++l) {
        const auto frame_key = rng::derive_key(seed, {3, l});
        auto& f = out.frames[l];
        for (std::size_t i = 0; i < f.size(); ++i) {
            const double mean = std::max(0.0, f[i]) * photon_level;
            if (mean == 0.0) {
                f[i] = 0.0;
                continue;
            }
            rng::CounterEngine eng(rng::derive_key(frame_key, {i}));
            std::poisson_distribution<long long> dist(mean);
            f[i] = static_cast<double>(dist(eng)) / photon_level;
        }
    }
    return out;
}

/// Additive white Gaussian noise at a power SNR measured over the whole
/// stack: σ² = mean(y²) / 10^(snr_db/10). snr_db = +inf leaves the stack as is.
inline MeasurementStack add_gaussian_noise(const MeasurementStack& stack, double snr_db,
                                           std::uint64_t seed, bool clamp = false) {
    if (stack.noise_kind != NoiseKind::None) throw ConfigError("stack already carries noise");
    if (std::isinf(snr_db) && snr_db > 0) return stack;
    if (std::isnan(snr_db)) throw ConfigError("SNR must not be NaN");
    double power = 0.0;
    std::size_t n = 0;
    for (const auto& f : stack.frames) {
        for (double v : f.values()) power += v * v;
        n += f.size();
    }
    if (n == 0) throw ConfigError("empty stack");
    power /= static_cast<double>(n);
    const double sigma = std::sqrt(power / std::pow(10.0, snr_db / 10.0));

    MeasurementStack out = stack;
    out.noise_kind = NoiseKind::Gaussian;
    out.noise_param = snr_db;
    out.seed = seed;
    out.clamped = clamp;
    for (std::size_t l = 0; l < out.frames.size(); ++l) {
        const auto frame_key = rng::derive_key(seed, {4, l});
        auto& f = out.frames[l];
        for (std::size_t i = 0; i < f.size(); ++i) {
            rng::CounterEngine eng(rng::derive_key(frame_key, {i}));
            std::normal_distribution<double> dist(0.0, 1.0);
            f[i] += sigma * dist(eng);
            if (clamp && f[i] < 0.0) f[i] = 0.0;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Persistence. A directory holds `stack.meta` + `frame_NNNN.f64/.meta`, or
// `masks.meta` + `mask_NNNN.f64/.meta`.

inline std::string indexed_name(const char* prefix, std::size_t i) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%04zu.f64", prefix, i);
    return buf;
}

inline void save_stack(const fs::path& dir, const MeasurementStack& stack) {
    fs::create_directories(dir);
    KeyValue meta;
    meta.set("count", stack.frames.size());
    if (!stack.frames.empty()) {
        meta.set("width", stack.frames.front().width());
        meta.set("height", stack.frames.front().height());
        meta.set("pitch", stack.frames.front().pitch());
    }
    meta.set("noise_kind", to_string(stack.noise_kind));
    meta.set("noise_param", stack.noise_param);
    meta.set("seed", stack.seed);
    meta.set("clamped", stack.clamped);
    meta.save(dir / "stack.meta");
    for (std::size_t l = 0; l < stack.frames.size(); ++l)
        save_grid(dir / indexed_name("frame", l), stack.frames[l]);
}

inline MeasurementStack load_stack(const fs::path& dir) {
    auto meta = KeyValue::load(dir / "stack.meta");
    MeasurementStack stack;
    const auto count = static_cast<std::size_t>(meta.get_uint("count"));
    stack.noise_kind = parse_noise_kind(meta.get("noise_kind"));
    stack.noise_param = meta.get_double("noise_param");
    stack.seed = meta.get_uint("seed");
    stack.clamped = meta.get_bool_or("clamped", false);
    for (std::size_t l = 0; l < count; ++l) {
        stack.frames.push_back(load_real(dir / indexed_name("frame", l)));
        require_same_shape(stack.frames.front(), stack.frames.back(), "stack frames");
    }
    return stack;
}

inline KeyValue mask_metadata(const MaskSet& set) {
    KeyValue meta;
    meta.set("kind", to_string(set.spec.kind));
    meta.set("count", set.spec.count);
    meta.set("width", set.spec.width);
    meta.set("height", set.spec.height);
    meta.set("pitch", set.spec.pitch);
    meta.set("seed", set.spec.seed);
    meta.set("feature_scale", set.spec.feature_scale);
    if (set.spec.kind == MaskKind::ShiftedDiffuser) {
        meta.set("shift_step", set.spec.shift_step);
        std::string offs;
        for (const auto& o : set.shift_offsets) {
            if (!offs.empty()) offs += ',';
            offs += std::to_string(o.dx) + ":" + std::to_string(o.dy);
        }
        meta.set("offsets", offs);
    }
    return meta;
}

/// Reconstructs the generating parameters from mask metadata.
inline MaskSpec mask_spec_from_metadata(const KeyValue& meta) {
    MaskSpec spec;
    spec.kind = parse_mask_kind(meta.get("kind"));
    spec.count = static_cast<std::size_t>(meta.get_uint("count"));
    spec.width = static_cast<std::size_t>(meta.get_uint("width"));
    spec.height = static_cast<std::size_t>(meta.get_uint("height"));
    spec.pitch = meta.get_double("pitch");
    spec.seed = meta.get_uint("seed");
    spec.feature_scale = static_cast<std::size_t>(meta.get_uint("feature_scale"));
    if (spec.kind == MaskKind::ShiftedDiffuser) {
        spec.shift_step = static_cast<std::size_t>(meta.get_uint("shift_step"));
        std::string offs = meta.get_or("offsets", "");
        std::size_t pos = 0;
        while (pos < offs.size()) {
            auto comma = offs.find(',', pos);
            auto item = offs.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
            auto colon = item.find(':');
            if (colon == std::string::npos) throw ConfigError("malformed offset '" + item + "'");
            spec.offsets.push_back({static_cast<std::size_t>(std::stoull(item.substr(0, colon))),
                                    static_cast<std::size_t>(std::stoull(item.substr(colon + 1)))});
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
    }
    return spec;
}

inline void save_masks(const fs::path& dir, const MaskSet& set, bool with_data = true) {
    fs::create_directories(dir);
    mask_metadata(set).save(dir / "masks.meta");
    if (with_data)
        for (std::size_t l = 0; l < set.size(); ++l) save_grid(dir / indexed_name("mask", l), set.masks[l]);
}

/// Loads stored mask grids when present, otherwise regenerates from metadata.
inline MaskSet load_masks(const fs::path& dir) {
    auto spec = mask_spec_from_metadata(KeyValue::load(dir / "masks.meta"));
    if (!fs::exists(dir / indexed_name("mask", 0))) return generate_mask_set(spec);
    MaskSet set;
    set.spec = spec;
    set.shift_offsets = spec.offsets;
    for (std::size_t l = 0; l < spec.count; ++l) set.masks.push_back(load_complex(dir / indexed_name("mask", l)));
    return set;
}

}  // namespace cdpsr
