#pragma once

// Angular-spectrum free-space propagation.
//
// A field is transformed to the spatial-frequency domain, multiplied by the
// band-limited transfer function
//
//     H(fx, fy; z) = exp(i·2π/λ·z·sqrt(1 − λ²(fx² + fy²)))   if fx² + fy² ≤ 1/λ²
//                  = 0                                       otherwise
//
// and transformed back. The default boundary is periodic (plain DFT). With
// `pad_factor = 2` the field is embedded in a zero-padded grid of twice the
// size; the detector sees the central window of that grid.

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <vector>

#include "cdpsr/fft.hpp"
#include "cdpsr/field.hpp"

namespace cdpsr {

struct OpticalConfig {
    double wavelength = 0.532;  ///< µm
    double distance = 21550.0;  ///< µm, negative = back-propagation
    SamplingGeometry geometry{2, 0.7};
    std::size_t pad_factor = 1;  ///< 1 = periodic, 2 = zero-padded

    void validate() const {
        if (!(wavelength > 0.0) || !std::isfinite(wavelength))
            throw ConfigError("wavelength must be positive");
        if (!std::isfinite(distance)) throw ConfigError("propagation distance must be finite");
        if (pad_factor != 1 && pad_factor != 2) throw ConfigError("pad_factor must be 1 or 2");
        geometry.validate();
    }

    OpticalConfig reversed() const {
        OpticalConfig c = *this;
        c.distance = -distance;
        return c;
    }
};

/// Band-limited angular-spectrum transfer function. Frequencies in cycles/µm.
inline cplx transfer_function(double fx, double fy, double z, double wavelength) {
    const double f2 = fx * fx + fy * fy;
    const double cutoff = 1.0 / (wavelength * wavelength);
    if (f2 > cutoff) return {0.0, 0.0};
    const double arg = 1.0 - wavelength * wavelength * f2;
    const double kz = 2.0 * std::numbers::pi / wavelength * std::sqrt(arg < 0.0 ? 0.0 : arg);
    return std::polar(1.0, kz * z);
}

/// DFT frequency of index k on an n-point grid with the given pitch.
inline double dft_frequency(std::size_t k, std::size_t n, double pitch) {
    const double nk = k < (n + 1) / 2 ? static_cast<double>(k)
                                      : static_cast<double>(k) - static_cast<double>(n);
    return nk / (static_cast<double>(n) * pitch);
}

/// Transfer function sampled on the DFT grid of a rows×cols field.
inline std::vector<cplx> transfer_grid(std::size_t rows, std::size_t cols, double pitch,
                                       double z, double wavelength) {
    std::vector<cplx> h(rows * cols);
    for (std::size_t r = 0; r < rows; ++r) {
        const double fy = dft_frequency(r, rows, pitch);
        for (std::size_t c = 0; c < cols; ++c)
            h[r * cols + c] = transfer_function(dft_frequency(c, cols, pitch), fy, z, wavelength);
    }
    return h;
}

namespace detail {

inline void apply_transfer(std::vector<cplx>& data, const std::vector<cplx>& h, std::size_t rows,
                           std::size_t cols) {
    fft::forward(data, rows, cols);
    for (std::size_t i = 0; i < data.size(); ++i) data[i] *= h[i];
    fft::inverse(data, rows, cols);
}

inline std::size_t pad_offset(std::size_t n, std::size_t padded) { return (padded - n) / 2; }

}  // namespace detail

/// Embeds `field` in the centre of a zero grid `factor` times larger.
inline ComplexField pad_center(const ComplexField& field, std::size_t factor) {
    const std::size_t w = field.width() * factor, h = field.height() * factor;
    ComplexField out(w, h, field.pitch());
    const std::size_t r0 = detail::pad_offset(field.height(), h);
    const std::size_t c0 = detail::pad_offset(field.width(), w);
    for (std::size_t r = 0; r < field.height(); ++r)
        for (std::size_t c = 0; c < field.width(); ++c) out(r0 + r, c0 + c) = field(r, c);
    return out;
}

/// Central width×height window of `field`.
inline ComplexField crop_center(const ComplexField& field, std::size_t width, std::size_t height) {
    if (width > field.width() || height > field.height())
        throw ShapeError("crop_center: window larger than field");
    ComplexField out(width, height, field.pitch());
    const std::size_t r0 = detail::pad_offset(height, field.height());
    const std::size_t c0 = detail::pad_offset(width, field.width());
    for (std::size_t r = 0; r < height; ++r)
        for (std::size_t c = 0; c < width; ++c) out(r, c) = field(r0 + r, c0 + c);
    return out;
}

/// Caches forward and backward transfer grids for one field size so the
/// iterative solver does not recompute them every call.
class Propagator {
public:
    Propagator(std::size_t width, std::size_t height, double pitch, const OpticalConfig& optics)
        : width_(width), height_(height), pitch_(pitch), optics_(optics) {
        optics_.validate();
        if (width < 2 || height < 2) throw ShapeError("propagation needs at least a 2x2 field");
        const std::size_t pw = width * optics_.pad_factor, ph = height * optics_.pad_factor;
        forward_ = transfer_grid(ph, pw, pitch, optics_.distance, optics_.wavelength);
        backward_ = transfer_grid(ph, pw, pitch, -optics_.distance, optics_.wavelength);
    }

    std::size_t width() const noexcept { return width_; }
    std::size_t height() const noexcept { return height_; }
    bool padded() const noexcept { return optics_.pad_factor > 1; }
    const OpticalConfig& optics() const noexcept { return optics_; }

    /// Propagates by +z (or −z with `backward`) on the computational grid.
    /// The input must already have the computational (possibly padded) size.
    ComplexField apply(const ComplexField& grid, bool backward = false) const {
        const std::size_t pw = width_ * optics_.pad_factor, ph = height_ * optics_.pad_factor;
        if (grid.width() != pw || grid.height() != ph)
            throw ShapeError("Propagator::apply: unexpected grid shape");
        ComplexField out = grid;
        detail::apply_transfer(out.storage(), backward ? backward_ : forward_, ph, pw);
        return out;
    }

    /// Object plane (width×height) → full computational detector plane.
    ComplexField to_detector(const ComplexField& field) const {
        check(field);
        return apply(padded() ? pad_center(field, optics_.pad_factor) : field, false);
    }

    /// Full computational detector plane → object plane (width×height).
    ComplexField to_object(const ComplexField& detector) const {
        auto back = apply(detector, true);
        return padded() ? crop_center(back, width_, height_) : back;
    }

    /// Same-size propagation: the detector plane is cropped to the field window.
    ComplexField propagate(const ComplexField& field) const {
        auto det = to_detector(field);
        return padded() ? crop_center(det, width_, height_) : det;
    }

private:
    void check(const ComplexField& field) const {
        if (field.width() != width_ || field.height() != height_)
            throw ShapeError("Propagator: field shape differs from plan");
        if (field.pitch() != pitch_) throw ShapeError("Propagator: field pitch differs from plan");
    }

    std::size_t width_;
    std::size_t height_;
    double pitch_;
    OpticalConfig optics_;
    std::vector<cplx> forward_;
    std::vector<cplx> backward_;
};

/// One-shot propagation by `config.distance`, same output size as input.
inline ComplexField propagate(const ComplexField& field, const OpticalConfig& config) {
    return Propagator(field.width(), field.height(), field.pitch(), config).propagate(field);
}

/// Padded propagation returning the whole (pad_factor × size) plane; this is
/// an isometry for band-limited input. Inverse: `back_propagate_padded`.
inline ComplexField propagate_padded(const ComplexField& field, const OpticalConfig& config) {
    OpticalConfig c = config;
    if (c.pad_factor == 1) c.pad_factor = 2;
    return Propagator(field.width(), field.height(), field.pitch(), c).to_detector(field);
}

/// Back-propagates a padded plane by −config.distance and crops the object window.
inline ComplexField back_propagate_padded(const ComplexField& plane, const OpticalConfig& config) {
    OpticalConfig c = config;
    if (c.pad_factor == 1) c.pad_factor = 2;
    if (plane.width() % c.pad_factor != 0 || plane.height() % c.pad_factor != 0)
        throw ShapeError("back_propagate_padded: plane is not a padded grid");
    return Propagator(plane.width() / c.pad_factor, plane.height() / c.pad_factor, plane.pitch(), c)
        .to_object(plane);
}

}  // namespace cdpsr
