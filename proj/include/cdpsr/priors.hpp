#pragma once

// Enhancing regularizers for the prior step of the solver: total-variation
// denoising and an adapter that hands a real image to an external process
// (e.g. a neural denoiser) through files. Complex fields are denoised as an
// amplitude channel and a phase channel.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include "cdpsr/field.hpp"
#include "cdpsr/io.hpp"

namespace cdpsr {

// ---------------------------------------------------------------------------
// Total variation
//
// Isotropic TV symmetrised over the four forward/backward difference pairs
// (Dx±, Dy±), each weighted 1/4, with Neumann boundaries. The symmetrised
// functional is invariant under 90° rotations and flips, which plain forward
// differences are not. The minimiser of ½‖x − f‖² + w·TV(x) is found by
// projected gradient on the dual: p_k ← Π(p_k + τ/w · K_k x), x = f − w/4 Σ K_kᵀ p_k,
// with τ = 1/4 (the stability bound for this operator).

namespace tv {

struct DualField {
    std::vector<double> px, py;
};

namespace detail {

// Difference along x at (r, c); forward uses c+1, backward uses c−1. Zero at the
// Neumann boundary.
inline double dx(const RealGrid& x, std::size_t r, std::size_t c, bool fwd) {
    const std::size_t w = x.width();
    if (fwd) return c + 1 < w ? x(r, c + 1) - x(r, c) : 0.0;
    return c > 0 ? x(r, c) - x(r, c - 1) : 0.0;
}

inline double dy(const RealGrid& x, std::size_t r, std::size_t c, bool fwd) {
    const std::size_t h = x.height();
    if (fwd) return r + 1 < h ? x(r + 1, c) - x(r, c) : 0.0;
    return r > 0 ? x(r, c) - x(r - 1, c) : 0.0;
}

constexpr bool kFwdX[4] = {true, false, true, false};
constexpr bool kFwdY[4] = {true, true, false, false};

}  // namespace detail

/// Symmetrised isotropic total variation.
inline double total_variation(const RealGrid& x) {
    double tv = 0.0;
    for (int k = 0; k < 4; ++k)
        for (std::size_t r = 0; r < x.height(); ++r)
            for (std::size_t c = 0; c < x.width(); ++c)
                tv += std::hypot(detail::dx(x, r, c, detail::kFwdX[k]),
                                 detail::dy(x, r, c, detail::kFwdY[k]));
    return 0.25 * tv;
}

/// ½‖x − f‖² + weight·TV(x).
inline double rof_objective(const RealGrid& x, const RealGrid& f, double weight) {
    require_same_shape(x, f, "rof_objective");
    double fid = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) fid += (x[i] - f[i]) * (x[i] - f[i]);
    return 0.5 * fid + weight * total_variation(x);
}

constexpr double kDualStep = 0.25;
constexpr std::size_t kDefaultIters = 50;

}  // namespace tv

/// ROF / TV denoising of a real grid. weight = 0 returns the input unchanged.
/// The result is clamped to [min(img), max(img)], which the exact minimiser
/// satisfies anyway and which can only lower the objective.
inline RealGrid tv_denoise(const RealGrid& img, double weight,
                           std::size_t max_iters = tv::kDefaultIters) {
    if (!(weight >= 0.0) || !std::isfinite(weight)) throw ConfigError("TV weight must be >= 0");
    if (weight == 0.0 || max_iters == 0 || img.empty()) return img;
    const std::size_t w = img.width(), h = img.height(), n = img.size();
    std::array<tv::DualField, 4> p;
    for (auto& pk : p) {
        pk.px.assign(n, 0.0);
        pk.py.assign(n, 0.0);
    }
    RealGrid x = img;
    const double step = tv::kDualStep / weight;
    const double quarter_w = 0.25 * weight;
    // Forward differences; the backward difference at (r, c) is the forward
    // one at (r, c−1) / (r−1, c). Boundary entries are zero, so dual entries
    // sitting on a Neumann boundary never leave 0.
    std::vector<double> gx(n), gy(n), ax(n), bx(n), ay(n), by(n);
    for (std::size_t it = 0; it < max_iters; ++it) {
        for (std::size_t r = 0; r < h; ++r)
            for (std::size_t c = 0; c < w; ++c) {
                const std::size_t i = r * w + c;
                gx[i] = c + 1 < w ? x[i + 1] - x[i] : 0.0;
                gy[i] = r + 1 < h ? x[i + w] - x[i] : 0.0;
            }
        for (int k = 0; k < 4; ++k) {
            auto& pk = p[k];
            const bool fx = tv::detail::kFwdX[k], fy = tv::detail::kFwdY[k];
            for (std::size_t r = 0; r < h; ++r)
                for (std::size_t c = 0; c < w; ++c) {
                    const std::size_t i = r * w + c;
                    const double dxv = fx ? gx[i] : (c > 0 ? gx[i - 1] : 0.0);
                    const double dyv = fy ? gy[i] : (r > 0 ? gy[i - w] : 0.0);
                    const double qx = pk.px[i] + step * dxv;
                    const double qy = pk.py[i] + step * dyv;
                    const double norm = std::max(1.0, std::sqrt(qx * qx + qy * qy));
                    pk.px[i] = qx / norm;
                    pk.py[i] = qy / norm;
                }
        }
        // x = f − w/4 Σ K_kᵀ p_k, grouping duals that share a difference direction
        for (std::size_t i = 0; i < n; ++i) {
            ax[i] = p[0].px[i] + p[2].px[i];
            bx[i] = p[1].px[i] + p[3].px[i];
            ay[i] = p[0].py[i] + p[1].py[i];
            by[i] = p[2].py[i] + p[3].py[i];
        }
        for (std::size_t r = 0; r < h; ++r)
            for (std::size_t c = 0; c < w; ++c) {
                const std::size_t i = r * w + c;
                double acc = bx[i] - ax[i] + by[i] - ay[i];
                if (c > 0) acc += ax[i - 1];
                if (c + 1 < w) acc -= bx[i + 1];
                if (r > 0) acc += ay[i - w];
                if (r + 1 < h) acc -= by[i + w];
                x[i] = img[i] - quarter_w * acc;
            }
    }
    auto [mn, mx] = std::minmax_element(img.values().begin(), img.values().end());
    for (auto& v : x.values()) v = std::clamp(v, *mn, *mx);
    return x;
}

// ---------------------------------------------------------------------------
// Gaussian smoothing

/// Separable Gaussian blur, σ in pixels, kernel radius ceil(3σ), replicated
/// borders. σ <= 0 returns the input.
inline RealGrid gaussian_blur(const RealGrid& img, double sigma) {
    if (!(sigma > 0.0) || img.empty()) return img;
    const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * radius + 1);
    for (std::ptrdiff_t i = -radius; i <= radius; ++i)
        k[i + radius] = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    const double norm = std::accumulate(k.begin(), k.end(), 0.0);
    for (auto& v : k) v /= norm;

    const auto w = static_cast<std::ptrdiff_t>(img.width()), h = static_cast<std::ptrdiff_t>(img.height());
    auto clampi = [](std::ptrdiff_t v, std::ptrdiff_t n) { return std::clamp<std::ptrdiff_t>(v, 0, n - 1); };
    RealGrid tmp(img.width(), img.height(), img.pitch());
    for (std::ptrdiff_t r = 0; r < h; ++r)
        for (std::ptrdiff_t c = 0; c < w; ++c) {
            double acc = 0.0;
            for (std::ptrdiff_t i = -radius; i <= radius; ++i) acc += k[i + radius] * img[r * w + clampi(c + i, w)];
            tmp[r * w + c] = acc;
        }
    RealGrid out(img.width(), img.height(), img.pitch());
    for (std::ptrdiff_t r = 0; r < h; ++r)
        for (std::ptrdiff_t c = 0; c < w; ++c) {
            double acc = 0.0;
            for (std::ptrdiff_t i = -radius; i <= radius; ++i) acc += k[i + radius] * tmp[clampi(r + i, h) * w + c];
            out[r * w + c] = acc;
        }
    return out;
}

// ---------------------------------------------------------------------------
// External denoiser adapter
//
// Protocol (version 1), all files in the working directory:
//   in.f64   input grid, little-endian doubles, row-major
//   req.txt  key=value: width, height, strength, version=1
//   out.f64  written by the executable, same shape as in.f64
// The executable is started with the working directory as cwd and as argv[1];
// exit status 0 means success.

class ExternalDenoiserError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
/// Executable missing or not runnable; nothing was written.
class ExternalSpecError : public ExternalDenoiserError {
public:
    using ExternalDenoiserError::ExternalDenoiserError;
};
class ExternalExitError : public ExternalDenoiserError {
public:
    ExternalExitError(const std::string& msg, int status) : ExternalDenoiserError(msg), status_(status) {}
    int status() const noexcept { return status_; }

private:
    int status_;
};
class ExternalShapeError : public ExternalDenoiserError {
public:
    using ExternalDenoiserError::ExternalDenoiserError;
};
class ExternalTimeoutError : public ExternalDenoiserError {
public:
    using ExternalDenoiserError::ExternalDenoiserError;
};

struct ExternalSpec {
    fs::path executable;
    fs::path workdir;
    std::chrono::milliseconds timeout{60000};
};

namespace detail {

inline std::mutex& workdir_mutex(const fs::path& dir) {
    static std::mutex registry_mutex;
    static std::map<std::string, std::unique_ptr<std::mutex>> registry;
    std::lock_guard lock(registry_mutex);
    auto key = fs::weakly_canonical(dir).string();
    auto& slot = registry[key];
    if (!slot) slot = std::make_unique<std::mutex>();
    return *slot;
}

struct ExchangeFiles {
    fs::path in, req, out, log;
    ~ExchangeFiles() {
        std::error_code ec;
        for (const auto* p : {&in, &req, &out, &log})
            if (!p->empty()) fs::remove(*p, ec);
    }
};

inline std::string read_tail(const fs::path& p, std::size_t max_bytes = 2000) {
    std::ifstream in(p);
    if (!in) return {};
    std::stringstream ss;
    ss << in.rdbuf();
    auto s = ss.str();
    return s.size() > max_bytes ? s.substr(s.size() - max_bytes) : s;
}

}  // namespace detail

inline RealGrid external_denoise(const RealGrid& img, const ExternalSpec& spec, double strength) {
    if (spec.executable.empty() || !fs::is_regular_file(spec.executable) ||
        ::access(spec.executable.c_str(), X_OK) != 0)
        throw ExternalSpecError("external denoiser not executable: " + spec.executable.string());
    if (spec.workdir.empty()) throw ExternalSpecError("external denoiser needs a working directory");

    fs::create_directories(spec.workdir);
    std::lock_guard serial(detail::workdir_mutex(spec.workdir));
    const fs::path dir = fs::absolute(spec.workdir);
    detail::ExchangeFiles files{dir / "in.f64", dir / "req.txt", dir / "out.f64", dir / "denoiser.log"};
    std::error_code ec;
    fs::remove(files.out, ec);

    write_raw(files.in, img);
    KeyValue req;
    req.set("width", img.width());
    req.set("height", img.height());
    req.set("strength", strength);
    req.set("version", 1);
    req.save(files.req);

    const std::string exe = fs::absolute(spec.executable).string();
    const std::string dir_str = dir.string();
    const std::string log_str = files.log.string();
    pid_t pid = ::fork();
    if (pid < 0) throw ExternalDenoiserError("fork failed");
    if (pid == 0) {
        if (::chdir(dir_str.c_str()) != 0) ::_exit(126);
        int fd = ::open(log_str.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
        if (fd >= 0) {
            ::dup2(fd, STDOUT_FILENO);
            ::dup2(fd, STDERR_FILENO);
            ::close(fd);
        }
        ::execl(exe.c_str(), exe.c_str(), dir_str.c_str(), static_cast<char*>(nullptr));
        ::_exit(127);
    }

    const auto deadline = std::chrono::steady_clock::now() + spec.timeout;
    int status = 0;
    auto pause = std::chrono::microseconds(200);
    for (;;) {
        pid_t r = ::waitpid(pid, &status, WNOHANG);
        if (r == pid) break;
        if (r < 0) throw ExternalDenoiserError("waitpid failed");
        if (std::chrono::steady_clock::now() >= deadline) {
            ::kill(pid, SIGKILL);
            ::waitpid(pid, &status, 0);
            throw ExternalTimeoutError("external denoiser timed out after " +
                                       std::to_string(spec.timeout.count()) + " ms; log: " +
                                       detail::read_tail(files.log));
        }
        std::this_thread::sleep_for(pause);
        pause = std::min(pause * 2, std::chrono::microseconds(20000));
    }
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
        const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -WTERMSIG(status);
        throw ExternalExitError("external denoiser exited with status " + std::to_string(code) +
                                    "; log: " + detail::read_tail(files.log),
                                code);
    }
    if (!fs::exists(files.out)) throw ExternalShapeError("external denoiser produced no out.f64");
    const auto bytes = fs::file_size(files.out);
    if (bytes != img.size() * sizeof(double))
        throw ExternalShapeError("external denoiser output has " + std::to_string(bytes) +
                                 " bytes, expected " + std::to_string(img.size() * sizeof(double)));
    auto out = read_raw(files.out, img.width(), img.height(), img.pitch());
    if (!out.all_finite()) throw ExternalShapeError("external denoiser output contains non-finite values");
    return out;
}

// ---------------------------------------------------------------------------
// Complex-field prior step

enum class DenoiserKind { Identity, Tv, External };

inline const char* to_string(DenoiserKind k) {
    switch (k) {
        case DenoiserKind::Identity: return "identity";
        case DenoiserKind::Tv: return "tv";
        case DenoiserKind::External: return "external";
    }
    return "identity";
}

inline DenoiserKind parse_denoiser_kind(const std::string& s) {
    if (s == "identity") return DenoiserKind::Identity;
    if (s == "tv") return DenoiserKind::Tv;
    if (s == "external") return DenoiserKind::External;
    throw ConfigError("unknown denoiser kind '" + s + "'");
}

struct DenoiserHandle {
    DenoiserKind kind = DenoiserKind::Identity;
    double strength = 0.02;        ///< amplitude channel (TV weight or noise-level hint)
    double phase_strength = 0.01;  ///< phase channel
    /// Per-iteration multiplier; iterations past the end reuse the last entry.
    std::vector<double> schedule;
    std::size_t tv_iters = tv::kDefaultIters;
    ExternalSpec external;

    static DenoiserHandle identity() { return {}; }
    static DenoiserHandle total_variation(double amp, double ph) {
        DenoiserHandle h;
        h.kind = DenoiserKind::Tv;
        h.strength = amp;
        h.phase_strength = ph;
        return h;
    }

    double multiplier(std::size_t iteration) const {
        if (schedule.empty()) return 1.0;
        return schedule[std::min(iteration, schedule.size() - 1)];
    }

    void validate() const {
        if (!(strength >= 0.0) || !(phase_strength >= 0.0))
            throw ConfigError("denoiser strength must be >= 0");
        for (double s : schedule)
            if (!(s >= 0.0)) throw ConfigError("denoiser schedule values must be >= 0");
    }
};

/// Prior step on a complex field. Amplitude and phase are denoised
/// independently and recomposed as a·e^{iφ}. The phase channel is taken
/// relative to the field's circular-mean phase so that an arbitrary global
/// phase does not push values across the ±π wrap.
inline ComplexField denoise_complex(const ComplexField& field, const DenoiserHandle& handle,
                                    std::size_t iteration) {
    handle.validate();
    if (handle.kind == DenoiserKind::Identity) return field;
    const double m = handle.multiplier(iteration);
    const double amp_w = handle.strength * m;
    const double ph_w = handle.phase_strength * m;
    if (amp_w == 0.0 && ph_w == 0.0) return field;

    cplx mean{};
    for (const auto& v : field.values()) mean += v;
    const cplx rot = std::abs(mean) > 0 ? std::conj(mean) / std::abs(mean) : cplx{1.0, 0.0};

    RealGrid amp(field.width(), field.height(), field.pitch());
    RealGrid ph(field.width(), field.height(), field.pitch());
    for (std::size_t i = 0; i < field.size(); ++i) {
        amp[i] = std::abs(field[i]);
        ph[i] = std::arg(field[i] * rot);
    }

    RealGrid amp_d, ph_d;
    if (handle.kind == DenoiserKind::Tv) {
        amp_d = tv_denoise(amp, amp_w, handle.tv_iters);
        ph_d = tv_denoise(ph, ph_w, handle.tv_iters);
    } else {
        amp_d = amp_w > 0 ? external_denoise(amp, handle.external, amp_w) : amp;
        ph_d = ph_w > 0 ? external_denoise(ph, handle.external, ph_w) : ph;
        require_same_shape(amp_d, amp, "external denoiser output");
        require_same_shape(ph_d, ph, "external denoiser output");
    }

    const cplx unrot = std::conj(rot);
    ComplexField out(field.width(), field.height(), field.pitch());
    for (std::size_t i = 0; i < field.size(); ++i)
        out[i] = std::polar(std::max(0.0, amp_d[i]), ph_d[i]) * unrot;
    return out;
}

}  // namespace cdpsr
