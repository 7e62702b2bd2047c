#pragma once

// Test-only generators, fixtures and reference implementations. Nothing here
// calls into the library's transforms, so it can serve as an oracle for them.

#include <cmath>
#include <complex>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "cdpsr/field.hpp"

namespace cdpsr::test {

namespace fs = std::filesystem;
using cplx = std::complex<double>;

inline ComplexField random_field(std::size_t w, std::size_t h, double pitch, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> amp(0.5, 1.5), ph(-std::numbers::pi, std::numbers::pi);
    ComplexField f(w, h, pitch);
    for (auto& v : f.values()) v = std::polar(amp(gen), ph(gen));
    return f;
}

inline ComplexField random_phase_mask(std::size_t w, std::size_t h, double pitch, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> ph(-std::numbers::pi, std::numbers::pi);
    ComplexField m(w, h, pitch);
    for (auto& v : m.values()) v = std::polar(1.0, ph(gen));
    return m;
}

inline RealGrid random_image(std::size_t w, std::size_t h, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> d(lo, hi);
    RealGrid g(w, h, 1.0);
    for (auto& v : g.values()) v = d(gen);
    return g;
}

/// Sum of `terms` periodic plane waves with integer frequencies |k| <= kmax:
/// exactly band-limited on the w×h DFT grid.
inline ComplexField bandlimited_field(std::size_t w, std::size_t h, double pitch, std::uint64_t seed,
                                      int kmax = 8, int terms = 24) {
    std::mt19937_64 gen(seed);
    std::uniform_int_distribution<int> k(-kmax, kmax);
    std::normal_distribution<double> n(0.0, 1.0);
    ComplexField f(w, h, pitch);
    for (int t = 0; t < terms; ++t) {
        const int kx = k(gen), ky = k(gen);
        const cplx a{n(gen), n(gen)};
        for (std::size_t r = 0; r < h; ++r)
            for (std::size_t c = 0; c < w; ++c) {
                const double arg = 2.0 * std::numbers::pi *
                                   (static_cast<double>(kx) * c / static_cast<double>(w) +
                                    static_cast<double>(ky) * r / static_cast<double>(h));
                f(r, c) += a * std::polar(1.0, arg);
            }
    }
    return f;
}

/// Direct O(N²) two-dimensional DFT; twiddle indices are reduced mod n so
/// the angles stay small.
inline std::vector<cplx> naive_dft2(const std::vector<cplx>& in, std::size_t rows, std::size_t cols, bool inverse) {
    const double sign = inverse ? 1.0 : -1.0;
    auto dft1 = [&](const std::vector<cplx>& x, std::size_t n) {
        std::vector<cplx> y(n);
        for (std::size_t k = 0; k < n; ++k) {
            cplx acc{};
            for (std::size_t j = 0; j < n; ++j) {
                const auto m = (k * j) % n;
                acc += x[j] * std::polar(1.0, sign * 2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(n));
            }
            y[k] = inverse ? acc / static_cast<double>(n) : acc;
        }
        return y;
    };
    std::vector<cplx> out = in;
    for (std::size_t r = 0; r < rows; ++r) {
        std::vector<cplx> row(out.begin() + r * cols, out.begin() + (r + 1) * cols);
        auto t = dft1(row, cols);
        std::copy(t.begin(), t.end(), out.begin() + r * cols);
    }
    for (std::size_t c = 0; c < cols; ++c) {
        std::vector<cplx> col(rows);
        for (std::size_t r = 0; r < rows; ++r) col[r] = out[r * cols + c];
        auto t = dft1(col, rows);
        for (std::size_t r = 0; r < rows; ++r) out[r * cols + c] = t[r];
    }
    return out;
}

/// Random field with no spectral content outside 0.95/λ (nothing evanescent).
inline ComplexField propagating_field(std::size_t w, std::size_t h, double pitch, double wavelength,
                                      std::uint64_t seed) {
    auto spec = naive_dft2(random_field(w, h, pitch, seed).storage(), h, w, false);
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) {
            const double kr = r <= h / 2 ? double(r) : double(r) - double(h);
            const double kc = c <= w / 2 ? double(c) : double(c) - double(w);
            const double fy = kr / (h * pitch), fx = kc / (w * pitch);
            if ((fx * fx + fy * fy) * wavelength * wavelength > 0.95 * 0.95) spec[r * w + c] = 0.0;
        }
    return ComplexField(w, h, pitch, naive_dft2(spec, h, w, true));
}

/// A field v and phase mask such that mask ⊙ v propagates without loss.
inline std::pair<ComplexField, ComplexField> consistent_instance(std::size_t n, double pitch, double wavelength,
                                                                 std::uint64_t seed) {
    const auto mask = random_phase_mask(n, n, pitch, seed ^ 0x9e3779b97f4a7c15ULL);
    auto v = propagating_field(n, n, pitch, wavelength, seed);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] *= std::conj(mask[i]);
    return {v, mask};
}

/// Angular-spectrum propagation on a periodic grid via the direct DFT.
inline std::vector<cplx> oracle_propagate(const std::vector<cplx>& u, std::size_t rows, std::size_t cols,
                                          double pitch, double z, double wavelength) {
    auto spec = naive_dft2(u, rows, cols, false);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            const double kr = r <= rows / 2 ? double(r) : double(r) - double(rows);
            const double kc = c <= cols / 2 ? double(c) : double(c) - double(cols);
            const double fy = kr / (rows * pitch), fx = kc / (cols * pitch);
            // kz·z reaches ~1e5 rad, so the phase is written in the canonical
            // form (2π/λ)·√(1 − λ²f²)·z; other algebraic forms differ by ulps.
            const double f2 = fx * fx + fy * fy;
            const double kz = 2.0 * std::numbers::pi / wavelength * std::sqrt(1.0 - wavelength * wavelength * f2);
            spec[r * cols + c] *= f2 <= 1.0 / (wavelength * wavelength) ? std::polar(1.0, kz * z) : cplx{};
        }
    return naive_dft2(spec, rows, cols, true);
}

/// One noiseless frame written out step by step: modulate, propagate,
/// square, sum θ×θ patches.
inline std::vector<double> oracle_frame(const ComplexField& u, const ComplexField& mask, double z, double wavelength,
                                        std::size_t theta) {
    const std::size_t w = u.width(), h = u.height();
    std::vector<cplx> m(w * h);
    for (std::size_t i = 0; i < w * h; ++i) m[i] = u[i] * mask[i];
    const auto p = oracle_propagate(m, h, w, u.pitch(), z, wavelength);
    const std::size_t lw = w / theta, lh = h / theta;
    std::vector<double> out(lw * lh, 0.0);
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) out[(r / theta) * lw + c / theta] += std::norm(p[r * w + c]);
    return out;
}

inline void draw_disk(RealGrid& img, double cy, double cx, double radius, double value = 1.0) {
    for (std::size_t r = 0; r < img.height(); ++r)
        for (std::size_t c = 0; c < img.width(); ++c) {
            const double dy = r - cy, dx = c - cx;
            if (dy * dy + dx * dx <= radius * radius) img(r, c) = value;
        }
}

/// 10×7 lattice of radius-6 disks, 20 px apart, none touching the border.
inline RealGrid seventy_disks() {
    RealGrid img(210, 150, 1.0);
    for (int i = 0; i < 7; ++i)
        for (int j = 0; j < 10; ++j) draw_disk(img, 15.0 + 20.0 * i, 15.0 + 20.0 * j, 6.0);
    return img;
}

/// Two radius-10 disks whose centres are 15 px apart.
inline RealGrid overlapping_pair() {
    RealGrid img(64, 48, 1.0);
    draw_disk(img, 24.0, 24.5, 10.0);
    draw_disk(img, 24.0, 39.5, 10.0);
    return img;
}

/// Three interior disks plus two clipped by the image border.
inline RealGrid interior_and_border() {
    RealGrid img(80, 60, 1.0);
    draw_disk(img, 20, 20, 7);
    draw_disk(img, 40, 40, 7);
    draw_disk(img, 20, 60, 7);
    draw_disk(img, 2, 40, 6);
    draw_disk(img, 50, 78, 6);
    return img;
}

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = fs::temp_directory_path() / ("cdpsr_" + tag + "_" + std::to_string(rd()));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& s) const { return path_ / s; }
    operator const fs::path&() const { return path_; }

private:
    fs::path path_;
};

inline std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace cdpsr::test
