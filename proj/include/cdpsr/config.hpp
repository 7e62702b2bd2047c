#pragma once

// Experiment configuration as a flat key=value file with section prefixes:
//
//   seed, threads, out
//   target.*    amplitude/phase sources, size, dynamic ranges
//   optics.*    wavelength, distance, detector pitch, theta (list), padding
//   masks.*     kind, count, feature scale, diffuser raster step
//   noise.*     kind, param (list), clamp
//   solver.*    ReconConfig fields
//   denoiser.*  TV weights, schedule, external executable
//   bench.*     algorithms to run
//   analysis.*  segmentation of the reconstructions
//   output.*    previews, timing
//
// List-valued keys (optics.theta, noise.param) span a sweep: one cell per
// (theta, param) pair, theta-major.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "cdpsr/forward_model.hpp"
#include "cdpsr/io.hpp"
#include "cdpsr/priors.hpp"
#include "cdpsr/rng.hpp"
#include "cdpsr/segmentation.hpp"
#include "cdpsr/solver.hpp"
#include "cdpsr/targets.hpp"

namespace cdpsr {

enum class Algorithm { Conv, DoTv, DoExt };

inline const char* to_string(Algorithm a) {
    switch (a) {
        case Algorithm::Conv: return "conv";
        case Algorithm::DoTv: return "do-tv";
        case Algorithm::DoExt: return "do-ext";
    }
    return "conv";
}

inline Algorithm parse_algorithm(const std::string& s) {
    if (s == "conv") return Algorithm::Conv;
    if (s == "do-tv") return Algorithm::DoTv;
    if (s == "do-ext") return Algorithm::DoExt;
    throw ConfigError("unknown algorithm '" + s + "' (expected conv, do-tv or do-ext)");
}

namespace detail {

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = KeyValue::trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

template <typename T, typename Fmt>
std::string join_list(const std::vector<T>& v, Fmt&& fmt) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt(v[i]);
    return out;
}

}  // namespace detail

inline KeyValue optics_metadata(const OpticalConfig& o) {
    KeyValue kv;
    kv.set("wavelength", o.wavelength);
    kv.set("distance", o.distance);
    kv.set("theta", o.geometry.theta);
    kv.set("hr_pitch", o.geometry.hr_pitch);
    kv.set("pad_factor", o.pad_factor);
    return kv;
}

inline OpticalConfig optics_from_metadata(const KeyValue& kv) {
    OpticalConfig o;
    o.wavelength = kv.get_double("wavelength");
    o.distance = kv.get_double("distance");
    o.geometry.theta = static_cast<std::size_t>(kv.get_uint("theta"));
    o.geometry.hr_pitch = kv.get_double("hr_pitch");
    o.pad_factor = static_cast<std::size_t>(kv.get_uint_or("pad_factor", 1));
    o.validate();
    return o;
}

/// One point of a sweep.
struct SweepCell {
    std::size_t index = 0;
    std::size_t theta = 1;
    double noise_param = 0.0;
};

struct ExperimentConfig {
    std::uint64_t seed = 1;
    std::size_t threads = 1;
    fs::path out = "out";

    TargetSpec target;

    double wavelength = 0.532;
    double distance = 21550.0;
    double detector_pitch = 1.4;
    std::vector<std::size_t> thetas = {2};
    std::size_t pad_factor = 1;

    MaskKind mask_kind = MaskKind::IidPhase;
    std::size_t mask_count = 60;
    std::size_t feature_scale = 2;
    std::size_t shift_step = 0;

    NoiseKind noise_kind = NoiseKind::Gaussian;
    std::vector<double> noise_params = {10.0};
    bool noise_clamp = false;

    ReconConfig solver = [] {
        ReconConfig c;
        c.eta = 0.3;
        return c;
    }();

    double tv_amplitude = 0.3;
    double tv_phase = 0.5;
    std::size_t tv_iters = tv::kDefaultIters;
    std::vector<double> schedule;
    fs::path ext_executable;
    fs::path ext_workdir;
    std::int64_t ext_timeout_ms = 60000;
    double ext_amplitude = 1.0;
    double ext_phase = 1.0;

    std::vector<Algorithm> algos = {Algorithm::Conv, Algorithm::DoTv};

    bool segment = false;
    std::string segment_channel = "phase";
    SegmentParams segment_params;
    bool exclude_margin = true;

    bool previews = true;
    bool timing = false;

    // Derived RNG streams; every random draw of a run descends from `seed`.
    std::uint64_t mask_seed() const { return rng::derive_key(seed, {101}); }
    std::uint64_t noise_seed() const { return rng::derive_key(seed, {102}); }
    std::uint64_t solver_seed() const { return rng::derive_key(seed, {103}); }
    std::uint64_t target_seed() const { return rng::derive_key(seed, {104}); }

    std::vector<SweepCell> cells() const {
        std::vector<SweepCell> out_cells;
        const std::vector<double> params =
            noise_kind == NoiseKind::None ? std::vector<double>{0.0} : noise_params;
        for (auto t : thetas)
            for (double p : params) out_cells.push_back({out_cells.size(), t, p});
        return out_cells;
    }

    OpticalConfig optics(std::size_t theta) const {
        OpticalConfig o;
        o.wavelength = wavelength;
        o.distance = distance;
        o.geometry = SamplingGeometry::from_detector(theta, detector_pitch);
        o.pad_factor = pad_factor;
        return o;
    }

    MaskSpec mask_spec(std::size_t theta) const {
        MaskSpec m;
        m.kind = mask_kind;
        m.count = mask_count;
        m.width = m.height = target.size;
        m.pitch = optics(theta).geometry.hr_pitch;
        m.seed = mask_seed();
        m.feature_scale = feature_scale;
        m.shift_step = shift_step;
        return m;
    }

    ReconConfig recon() const {
        ReconConfig c = solver;
        c.rng_seed = solver_seed();
        c.threads = threads;
        return c;
    }

    DenoiserHandle denoiser(Algorithm a) const {
        DenoiserHandle h;
        switch (a) {
            case Algorithm::Conv: return DenoiserHandle::identity();
            case Algorithm::DoTv:
                h = DenoiserHandle::total_variation(tv_amplitude, tv_phase);
                h.tv_iters = tv_iters;
                break;
            case Algorithm::DoExt:
                h.kind = DenoiserKind::External;
                h.strength = ext_amplitude;
                h.phase_strength = ext_phase;
                h.external = {ext_executable, ext_workdir, std::chrono::milliseconds(ext_timeout_ms)};
                break;
        }
        h.schedule = schedule;
        return h;
    }

    /// Checks ranges and that every referenced file exists.
    void validate() const {
        if (threads == 0) throw ConfigError("threads must be >= 1");
        if (target.size == 0) throw ConfigError("target.size must be positive");
        if (!(target.amp_min >= 0.0 && target.amp_min <= 1.0)) throw ConfigError("target.amp_min must lie in [0, 1]");
        if (!(target.phase_max > 0.0 && target.phase_max < std::numbers::pi))
            throw ConfigError("target.phase_max must lie in (0, pi)");
        for (const auto* src : {&target.amplitude, &target.phase})
            if (!is_synthetic(*src) && !fs::is_regular_file(image_source_path(*src)))
                throw ConfigError("target image not found: " + image_source_path(*src).string());
        if (thetas.empty()) throw ConfigError("optics.theta needs at least one value");
        for (auto t : thetas) {
            if (t == 0) throw ConfigError("optics.theta values must be >= 1");
            if (target.size % t != 0)
                throw ConfigError("target.size " + std::to_string(target.size) +
                                  " is not a multiple of theta=" + std::to_string(t));
            optics(t).validate();
        }
        if (noise_kind != NoiseKind::None && noise_params.empty())
            throw ConfigError("noise.param needs at least one value");
        for (double p : noise_params) {
            if (noise_kind == NoiseKind::Poisson && !(p > 0.0 && std::isfinite(p)))
                throw ConfigError("poisson photon level must be positive");
            if (std::isnan(p)) throw ConfigError("noise.param must not be NaN");
        }
        if (mask_count == 0) throw ConfigError("masks.count must be >= 1");
        if (feature_scale == 0) throw ConfigError("masks.feature_scale must be >= 1");
        recon().validate();
        if (algos.empty()) throw ConfigError("bench.algos needs at least one algorithm");
        for (auto a : algos) {
            denoiser(a).validate();
            if (a == Algorithm::DoExt) {
                if (ext_executable.empty() || !fs::is_regular_file(ext_executable))
                    throw ConfigError("external denoiser not found: " + ext_executable.string());
                if (ext_workdir.empty()) throw ConfigError("denoiser.ext_workdir is required for do-ext");
                if (ext_timeout_ms <= 0) throw ConfigError("denoiser.ext_timeout_ms must be positive");
            }
        }
        if (segment_channel != "amplitude" && segment_channel != "phase")
            throw ConfigError("analysis.channel must be amplitude or phase");
        if (!(segment_params.min_distance >= 0.0)) throw ConfigError("analysis.min_distance must be >= 0");
    }

    KeyValue to_key_value() const {
        const auto f = KeyValue::format_double;
        const auto z = [](std::size_t v) { return std::to_string(v); };
        KeyValue kv;
        kv.set("seed", seed);
        kv.set("threads", threads);
        kv.set("out", out.string());
        kv.set("target.amplitude", target.amplitude);
        kv.set("target.phase", target.phase);
        kv.set("target.size", target.size);
        kv.set("target.amp_min", target.amp_min);
        kv.set("target.phase_max", target.phase_max);
        kv.set("optics.wavelength", wavelength);
        kv.set("optics.distance", distance);
        kv.set("optics.detector_pitch", detector_pitch);
        kv.set("optics.theta", detail::join_list(thetas, z));
        kv.set("optics.pad_factor", pad_factor);
        kv.set("masks.kind", to_string(mask_kind));
        kv.set("masks.count", mask_count);
        kv.set("masks.feature_scale", feature_scale);
        kv.set("masks.shift_step", shift_step);
        kv.set("noise.kind", to_string(noise_kind));
        kv.set("noise.param", detail::join_list(noise_params, f));
        kv.set("noise.clamp", noise_clamp);
        kv.set("solver.eta", solver.eta);
        kv.set("solver.beta", solver.beta);
        kv.set("solver.iters", solver.outer_iters);
        kv.set("solver.init", to_string(solver.init));
        kv.set("solver.epsilon", solver.epsilon);
        kv.set("solver.tol", solver.convergence_tol);
        kv.set("solver.ordering", to_string(solver.ordering));
        kv.set("solver.patch_update", to_string(solver.patch_update));
        kv.set("solver.checkpoint_every", solver.checkpoint_every);
        kv.set("denoiser.tv_amplitude", tv_amplitude);
        kv.set("denoiser.tv_phase", tv_phase);
        kv.set("denoiser.tv_iters", tv_iters);
        kv.set("denoiser.schedule", detail::join_list(schedule, f));
        kv.set("denoiser.ext_executable", ext_executable.string());
        kv.set("denoiser.ext_workdir", ext_workdir.string());
        kv.set("denoiser.ext_timeout_ms", ext_timeout_ms);
        kv.set("denoiser.ext_amplitude", ext_amplitude);
        kv.set("denoiser.ext_phase", ext_phase);
        kv.set("bench.algos", detail::join_list(algos, [](Algorithm a) { return std::string(to_string(a)); }));
        kv.set("analysis.segment", segment);
        kv.set("analysis.channel", segment_channel);
        kv.set("analysis.method", to_string(segment_params.method));
        kv.set("analysis.threshold", segment_params.fixed_threshold);
        kv.set("analysis.min_distance", segment_params.min_distance);
        kv.set("analysis.exclude_margin", exclude_margin);
        kv.set("output.previews", previews);
        kv.set("output.timing", timing);
        return kv;
    }

    /// Keys absent from kv keep their defaults; unknown keys are rejected.
    static ExperimentConfig from_key_value(const KeyValue& kv) {
        ExperimentConfig c;
        const auto known = c.to_key_value();
        for (const auto& [k, v] : kv.entries())
            if (!known.has(k)) throw ConfigError("unknown config key '" + k + "'");
        auto size = [&](const std::string& k, std::size_t d) {
            if (!kv.has(k)) return d;
            return static_cast<std::size_t>(kv.get_uint(k));
        };
        auto num = [&](const std::string& k, double d) { return kv.get_double_or(k, d); };

        if (kv.has("seed")) c.seed = kv.get_uint("seed");
        c.threads = size("threads", c.threads);
        c.out = kv.get_or("out", c.out.string());
        c.target.amplitude = kv.get_or("target.amplitude", c.target.amplitude);
        c.target.phase = kv.get_or("target.phase", c.target.phase);
        c.target.size = size("target.size", c.target.size);
        c.target.amp_min = num("target.amp_min", c.target.amp_min);
        c.target.phase_max = num("target.phase_max", c.target.phase_max);
        c.wavelength = num("optics.wavelength", c.wavelength);
        c.distance = num("optics.distance", c.distance);
        c.detector_pitch = num("optics.detector_pitch", c.detector_pitch);
        if (kv.has("optics.theta")) {
            c.thetas.clear();
            for (const auto& s : detail::split_list(kv.get("optics.theta")))
                c.thetas.push_back(static_cast<std::size_t>(KeyValue::parse_uint("optics.theta", s)));
        }
        c.pad_factor = size("optics.pad_factor", c.pad_factor);
        if (kv.has("masks.kind")) c.mask_kind = parse_mask_kind(kv.get("masks.kind"));
        c.mask_count = size("masks.count", c.mask_count);
        c.feature_scale = size("masks.feature_scale", c.feature_scale);
        c.shift_step = size("masks.shift_step", c.shift_step);
        if (kv.has("noise.kind")) c.noise_kind = parse_noise_kind(kv.get("noise.kind"));
        if (kv.has("noise.param")) {
            c.noise_params.clear();
            for (const auto& s : detail::split_list(kv.get("noise.param")))
                c.noise_params.push_back(KeyValue::parse_double("noise.param", s));
        }
        c.noise_clamp = kv.get_bool_or("noise.clamp", c.noise_clamp);
        c.solver.eta = num("solver.eta", c.solver.eta);
        c.solver.beta = num("solver.beta", c.solver.beta);
        c.solver.outer_iters = size("solver.iters", c.solver.outer_iters);
        if (kv.has("solver.init")) c.solver.init = parse_init_kind(kv.get("solver.init"));
        c.solver.epsilon = num("solver.epsilon", c.solver.epsilon);
        c.solver.convergence_tol = num("solver.tol", c.solver.convergence_tol);
        if (kv.has("solver.ordering")) c.solver.ordering = parse_mask_ordering(kv.get("solver.ordering"));
        if (kv.has("solver.patch_update"))
            c.solver.patch_update = parse_patch_update(kv.get("solver.patch_update"));
        c.solver.checkpoint_every = size("solver.checkpoint_every", c.solver.checkpoint_every);
        c.tv_amplitude = num("denoiser.tv_amplitude", c.tv_amplitude);
        c.tv_phase = num("denoiser.tv_phase", c.tv_phase);
        c.tv_iters = size("denoiser.tv_iters", c.tv_iters);
        if (kv.has("denoiser.schedule")) {
            c.schedule.clear();
            for (const auto& s : detail::split_list(kv.get("denoiser.schedule")))
                c.schedule.push_back(KeyValue::parse_double("denoiser.schedule", s));
        }
        c.ext_executable = kv.get_or("denoiser.ext_executable", "");
        c.ext_workdir = kv.get_or("denoiser.ext_workdir", "");
        c.ext_timeout_ms = kv.get_int_or("denoiser.ext_timeout_ms", c.ext_timeout_ms);
        c.ext_amplitude = num("denoiser.ext_amplitude", c.ext_amplitude);
        c.ext_phase = num("denoiser.ext_phase", c.ext_phase);
        if (kv.has("bench.algos")) {
            c.algos.clear();
            for (const auto& s : detail::split_list(kv.get("bench.algos"))) c.algos.push_back(parse_algorithm(s));
        }
        c.segment = kv.get_bool_or("analysis.segment", c.segment);
        c.segment_channel = kv.get_or("analysis.channel", c.segment_channel);
        if (kv.has("analysis.method"))
            c.segment_params.method = parse_threshold_method(kv.get("analysis.method"));
        c.segment_params.fixed_threshold = num("analysis.threshold", c.segment_params.fixed_threshold);
        c.segment_params.min_distance = num("analysis.min_distance", c.segment_params.min_distance);
        c.exclude_margin = kv.get_bool_or("analysis.exclude_margin", c.exclude_margin);
        c.previews = kv.get_bool_or("output.previews", c.previews);
        c.timing = kv.get_bool_or("output.timing", c.timing);
        return c;
    }

    static ExperimentConfig load(const fs::path& path) {
        auto c = from_key_value(KeyValue::load(path));
        c.validate();
        return c;
    }

    void save(const fs::path& path) const { to_key_value().save(path); }
};

}  // namespace cdpsr
