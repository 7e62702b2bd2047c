#pragma once

// Pixel super-resolution phase retrieval by generalized alternating
// projection. Each outer iteration runs
//
//   u ← fidelity epoch: one measurement-consistency projection per mask
//   v ← prior step:     denoise_complex(u)
//
// With the identity prior this is the conventional alternating-projection
// PSR baseline.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "cdpsr/field.hpp"
#include "cdpsr/forward_model.hpp"
#include "cdpsr/io.hpp"
#include "cdpsr/metrics.hpp"
#include "cdpsr/parallel.hpp"
#include "cdpsr/priors.hpp"
#include "cdpsr/propagation.hpp"
#include "cdpsr/rng.hpp"

namespace cdpsr {

enum class InitKind { Random, Flat, BackpropMean };

inline const char* to_string(InitKind k) {
    switch (k) {
        case InitKind::Random: return "random";
        case InitKind::Flat: return "flat";
        case InitKind::BackpropMean: return "backprop-mean";
    }
    return "backprop-mean";
}

inline InitKind parse_init_kind(const std::string& s) {
    if (s == "random") return InitKind::Random;
    if (s == "flat") return InitKind::Flat;
    if (s == "backprop-mean") return InitKind::BackpropMean;
    throw ConfigError("unknown init '" + s + "'");
}

enum class MaskOrdering { Sequential, ParallelAverage };

inline const char* to_string(MaskOrdering o) {
    return o == MaskOrdering::Sequential ? "sequential" : "parallel-average";
}

inline MaskOrdering parse_mask_ordering(const std::string& s) {
    if (s == "sequential") return MaskOrdering::Sequential;
    if (s == "parallel-average") return MaskOrdering::ParallelAverage;
    throw ConfigError("unknown mask ordering '" + s + "'");
}

/// How a detector pixel's corrected total intensity is spread over its θ×θ
/// HR patch. Proportional rescales every pixel of the patch by the same
/// factor (the nearest point on the patch-sum constraint); Additive adds the
/// same intensity offset to every pixel.
enum class PatchUpdate { Proportional, Additive };

inline const char* to_string(PatchUpdate p) {
    return p == PatchUpdate::Proportional ? "proportional" : "additive";
}

inline PatchUpdate parse_patch_update(const std::string& s) {
    if (s == "proportional") return PatchUpdate::Proportional;
    if (s == "additive") return PatchUpdate::Additive;
    throw ConfigError("unknown patch update '" + s + "'");
}

struct ReconConfig {
    double eta = 1.0;
    double beta = 1.0;
    std::size_t outer_iters = 100;
    InitKind init = InitKind::BackpropMean;
    std::uint64_t rng_seed = 0;
    double epsilon = 1e-9;
    double convergence_tol = 1e-6;
    MaskOrdering ordering = MaskOrdering::Sequential;
    PatchUpdate patch_update = PatchUpdate::Proportional;
    /// Worker count for parallel-average mode; never changes results.
    std::size_t threads = 1;
    /// Dump the iterate every K iterations into checkpoint_dir (0 = off).
    std::size_t checkpoint_every = 0;
    fs::path checkpoint_dir;

    void validate() const {
        if (!(eta > 0.0 && eta <= 2.0)) throw ConfigError("eta must lie in (0, 2]");
        if (!(beta > 0.0 && beta <= 2.0)) throw ConfigError("beta must lie in (0, 2]");
        if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
        if (!(convergence_tol >= 0.0)) throw ConfigError("convergence_tol must be >= 0");
        if (checkpoint_every > 0 && checkpoint_dir.empty())
            throw ConfigError("checkpointing needs a directory");
    }
};

struct IterationRecord {
    std::size_t iteration = 0;
    double residual = 0.0;
    std::optional<double> psnr_amplitude;
    std::optional<double> psnr_phase;
    double elapsed_seconds = 0.0;
};

struct ReconResult {
    ComplexField field;
    std::vector<IterationRecord> per_iteration;
    double wall_time = 0.0;
    bool converged = false;
};

/// A solver-stage failure annotated with the iteration it happened in.
class SolverError : public std::runtime_error {
public:
    SolverError(const std::string& msg, std::size_t iteration)
        : std::runtime_error(msg), iteration_(iteration) {}
    std::size_t iteration() const noexcept { return iteration_; }

private:
    std::size_t iteration_;
};

namespace detail {

/// Window of the computational detector plane that the sensor covers.
struct DetectorWindow {
    std::size_t row0 = 0, col0 = 0, width = 0, height = 0;
};

inline DetectorWindow detector_window(const Propagator& prop) {
    const std::size_t f = prop.optics().pad_factor;
    const std::size_t pw = prop.width() * f, ph = prop.height() * f;
    return {(ph - prop.height()) / 2, (pw - prop.width()) / 2, prop.width(), prop.height()};
}

inline IntensityImage window_intensity(const ComplexField& plane, const DetectorWindow& win) {
    IntensityImage out(win.width, win.height, plane.pitch());
    for (std::size_t r = 0; r < win.height; ++r)
        for (std::size_t c = 0; c < win.width; ++c) out(r, c) = std::norm(plane(win.row0 + r, win.col0 + c));
    return out;
}

inline void check_frame(const IntensityImage& frame, const ComplexField& v, const SamplingGeometry& g) {
    g.check_hr_dims(v.width(), v.height());
    if (frame.width() * g.theta != v.width() || frame.height() * g.theta != v.height())
        throw ShapeError("frame shape does not match field / theta");
}

}  // namespace detail

/// One measurement-fidelity update of v against a single frame and mask:
///   w  = propagate(mask ⊙ v)
///   r  = frame − β·bin(|w|²)                    (per detector pixel)
///   patch total moves from bin(|w|²) to bin(|w|²) + η·r:
///     proportional: I' = |w|² · (bin + η·r) / bin
///     additive:     I' = |w|² + η·r/θ²
///   I' clamped at 0;  w' = sqrt(I')·e^{i·arg w}
///   v' = conj(mask) ⊙ propagate⁻¹(w') / max(|mask|², ε)
/// Patches with zero intensity always use the additive rule.
inline ComplexField psr_project(const ComplexField& v, const IntensityImage& frame,
                                const ComplexField& mask, const Propagator& prop,
                                const ReconConfig& cfg) {
    const auto& geom = prop.optics().geometry;
    detail::check_frame(frame, v, geom);
    auto plane = prop.to_detector(hadamard_modulate(v, mask));
    const auto win = detail::detector_window(prop);
    const auto hr_int = detail::window_intensity(plane, win);
    const auto binned = bin_intensity(hr_int, geom);

    IntensityImage resid(frame.width(), frame.height(), frame.pitch());
    for (std::size_t i = 0; i < resid.size(); ++i) resid[i] = frame[i] - cfg.beta * binned[i];
    const auto update = upsample_replicate(resid, geom, true);
    const std::size_t t = geom.theta;

    for (std::size_t r = 0; r < win.height; ++r)
        for (std::size_t c = 0; c < win.width; ++c) {
            auto& w = plane(win.row0 + r, win.col0 + c);
            const double i_old = hr_int(r, c);
            double i_new;
            if (cfg.patch_update == PatchUpdate::Proportional && binned(r / t, c / t) > 0.0) {
                const double b = binned(r / t, c / t);
                const double target = b + cfg.eta * resid(r / t, c / t);
                i_new = std::max(0.0, i_old * target / b);
            } else {
                i_new = std::max(0.0, i_old + cfg.eta * update(r, c));
            }
            if (i_old > 0.0)
                w *= std::sqrt(i_new / i_old);
            else
                w = cplx{std::sqrt(i_new), 0.0};
        }

    auto back = prop.to_object(plane);
    ComplexField out(v.width(), v.height(), v.pitch());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = std::conj(mask[i]) * back[i] / std::max(std::norm(mask[i]), cfg.epsilon);
    return out;
}

inline ComplexField psr_project(const ComplexField& v, const IntensityImage& frame,
                                const ComplexField& mask, const OpticalConfig& optics,
                                const ReconConfig& cfg) {
    return psr_project(v, frame, mask, Propagator(v.width(), v.height(), v.pitch(), optics), cfg);
}

/// ‖y − |Av|²‖₂ accumulated over all frames.
inline double data_residual(const ComplexField& v, const MeasurementStack& stack, const MaskSet& masks,
                            const Propagator& prop) {
    const auto& geom = prop.optics().geometry;
    double acc = 0.0;
    for (std::size_t l = 0; l < stack.size(); ++l) {
        const auto sim = simulate_frame(v, masks.masks[l], prop, geom);
        for (std::size_t i = 0; i < sim.size(); ++i) {
            const double d = stack.frames[l][i] - sim[i];
            acc += d * d;
        }
    }
    return std::sqrt(acc);
}

/// Starting point of the iteration.
inline ComplexField initial_estimate(const MeasurementStack& stack, const MaskSet& masks,
                                     const Propagator& prop, const ReconConfig& cfg) {
    const auto& geom = prop.optics().geometry;
    const std::size_t w = prop.width(), h = prop.height();
    const double pitch = geom.hr_pitch;
    double mean_frame = 0.0;
    std::size_t n = 0;
    for (const auto& f : stack.frames) {
        for (double v : f.values()) mean_frame += v;
        n += f.size();
    }
    mean_frame /= static_cast<double>(n);
    const double level = std::sqrt(std::max(0.0, mean_frame) / static_cast<double>(geom.theta * geom.theta));

    switch (cfg.init) {
        case InitKind::Flat: return ComplexField(w, h, pitch, cplx{level, 0.0});
        case InitKind::Random: {
            ComplexField out(w, h, pitch);
            rng::CounterEngine eng(rng::derive_key(cfg.rng_seed, {5}));
            for (auto& v : out.values()) {
                const double a = level * rng::to_unit(eng());
                v = std::polar(a, 2.0 * std::numbers::pi * rng::to_unit(eng()));
            }
            return out;
        }
        case InitKind::BackpropMean: break;
    }

    const auto win = detail::detector_window(prop);
    const std::size_t f = prop.optics().pad_factor;
    ComplexField acc(w, h, pitch);
    for (std::size_t l = 0; l < stack.size(); ++l) {
        auto up = upsample_replicate(stack.frames[l], geom, true);
        ComplexField plane(w * f, h * f, pitch);
        for (std::size_t r = 0; r < h; ++r)
            for (std::size_t c = 0; c < w; ++c)
                plane(win.row0 + r, win.col0 + c) = std::sqrt(std::max(0.0, up(r, c)));
        auto back = prop.to_object(plane);
        const auto& mask = masks.masks[l];
        for (std::size_t i = 0; i < acc.size(); ++i)
            acc[i] += std::conj(mask[i]) * back[i] / std::max(std::norm(mask[i]), cfg.epsilon);
    }
    const double inv = 1.0 / static_cast<double>(stack.size());
    for (auto& v : acc.values()) v *= inv;
    return acc;
}

inline void check_problem(const MeasurementStack& stack, const MaskSet& masks, const OpticalConfig& optics) {
    if (stack.frames.empty()) throw ConfigError("measurement stack is empty");
    if (stack.size() != masks.size())
        throw ConfigError("stack has " + std::to_string(stack.size()) + " frames but mask set has " +
                          std::to_string(masks.size()));
    optics.validate();
    const auto& first = masks.masks.front();
    const auto& g = optics.geometry;
    g.check_hr_dims(first.width(), first.height());
    if (std::abs(first.pitch() - g.hr_pitch) > 1e-12 * g.hr_pitch)
        throw ShapeError("mask pitch does not match the HR pitch of the geometry");
    for (const auto& m : masks.masks) require_same_shape(first, m, "mask set");
    for (const auto& fr : stack.frames)
        if (fr.width() * g.theta != first.width() || fr.height() * g.theta != first.height())
            throw ShapeError("frame shape does not match masks / theta");
}

inline ReconResult reconstruct_do_psr(const MeasurementStack& stack, const MaskSet& masks,
                                      const OpticalConfig& optics, const ReconConfig& cfg,
                                      const DenoiserHandle& denoiser,
                                      const ComplexField* truth = nullptr) {
    cfg.validate();
    denoiser.validate();
    check_problem(stack, masks, optics);
    const auto t0 = std::chrono::steady_clock::now();
    const auto& first = masks.masks.front();
    Propagator prop(first.width(), first.height(), first.pitch(), optics);

    ReconResult result;
    ComplexField v = initial_estimate(stack, masks, prop, cfg);

    for (std::size_t j = 0; j < cfg.outer_iters; ++j) {
        ComplexField u;
        if (cfg.ordering == MaskOrdering::Sequential) {
            u = v;
            for (std::size_t l = 0; l < stack.size(); ++l)
                u = psr_project(u, stack.frames[l], masks.masks[l], prop, cfg);
        } else {
            std::vector<ComplexField> parts(stack.size());
            parallel_for(stack.size(), cfg.threads, [&](std::size_t l) {
                parts[l] = psr_project(v, stack.frames[l], masks.masks[l], prop, cfg);
            });
            u = ComplexField(v.width(), v.height(), v.pitch());
            for (const auto& p : parts)
                for (std::size_t i = 0; i < u.size(); ++i) u[i] += p[i];
            const double inv = 1.0 / static_cast<double>(parts.size());
            for (auto& x : u.values()) x *= inv;
        }

        ComplexField next;
        try {
            next = denoise_complex(u, denoiser, j);
        } catch (const std::exception& e) {
            throw SolverError("prior step failed at iteration " + std::to_string(j) + ": " + e.what(), j);
        }

        double diff = 0.0, norm = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            diff += std::norm(next[i] - v[i]);
            norm += std::norm(v[i]);
        }
        v = std::move(next);

        IterationRecord rec;
        rec.iteration = j;
        rec.residual = data_residual(v, stack, masks, prop);
        if (truth) {
            rec.psnr_amplitude = psnr_amplitude(v, *truth);
            rec.psnr_phase = psnr_phase(v, *truth);
        }
        rec.elapsed_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.per_iteration.push_back(rec);

        if (cfg.checkpoint_every > 0 && (j + 1) % cfg.checkpoint_every == 0) {
            fs::create_directories(cfg.checkpoint_dir);
            char name[64];
            std::snprintf(name, sizeof name, "iterate_%04zu.f64", j + 1);
            save_grid(cfg.checkpoint_dir / name, v);
        }

        const double rel = norm > 0 ? std::sqrt(diff / norm) : std::sqrt(diff);
        if (rel < cfg.convergence_tol) {
            result.converged = true;
            break;
        }
    }
    result.field = std::move(v);
    result.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

/// Fidelity-only baseline: the same iteration with the identity prior.
inline ReconResult reconstruct_conv_psr(const MeasurementStack& stack, const MaskSet& masks,
                                        const OpticalConfig& optics, const ReconConfig& cfg,
                                        const ComplexField* truth = nullptr) {
    return reconstruct_do_psr(stack, masks, optics, cfg, DenoiserHandle::identity(), truth);
}

/// Per-iteration log. Without timing the elapsed column reads NA so that the
/// file is a pure function of the inputs.
inline void write_iteration_csv(const fs::path& path, const ReconResult& result, bool with_timing) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    auto f = KeyValue::format_double;
    out << "iteration,residual,psnr_amplitude,psnr_phase,elapsed_seconds\n";
    for (const auto& r : result.per_iteration) {
        out << r.iteration << ',' << f(r.residual) << ','
            << (r.psnr_amplitude ? f(*r.psnr_amplitude) : "") << ','
            << (r.psnr_phase ? f(*r.psnr_phase) : "") << ','
            << (with_timing ? f(r.elapsed_seconds) : "NA") << '\n';
    }
}

}  // namespace cdpsr
