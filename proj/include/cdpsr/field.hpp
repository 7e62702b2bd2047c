#pragma once

// Grid types shared by every stage of the pipeline: complex wavefronts,
// nonnegative intensity images and the HR/LR sampling geometry that links
// them. All grids are row-major, indexed (row, col).

#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

namespace cdpsr {

using cplx = std::complex<double>;

/// Thrown whenever two grids (or a grid and a geometry) disagree on shape.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Thrown for invalid parameter values that are not shape problems.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

namespace detail {

inline void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) throw ConfigError(std::string(what) + ": non-finite value");
}

}  // namespace detail

/// Row-major 2-D grid with a physical pixel pitch in micrometers.
/// ComplexField and RealGrid are the two instantiations used project-wide.
template <typename T>
class Grid {
public:
    using value_type = T;

    Grid() = default;

    Grid(std::size_t width, std::size_t height, double pitch, T fill = T{})
        : width_(width), height_(height), pitch_(pitch), data_(width * height, fill) {
        check_header();
    }

    Grid(std::size_t width, std::size_t height, double pitch, std::vector<T> data)
        : width_(width), height_(height), pitch_(pitch), data_(std::move(data)) {
        check_header();
        if (data_.size() != width_ * height_)
            throw ShapeError("grid data length " + std::to_string(data_.size()) +
                             " != width*height " + std::to_string(width_ * height_));
    }

    std::size_t width() const noexcept { return width_; }
    std::size_t height() const noexcept { return height_; }
    std::size_t size() const noexcept { return data_.size(); }
    double pitch() const noexcept { return pitch_; }
    bool empty() const noexcept { return data_.empty(); }

    T& operator()(std::size_t row, std::size_t col) noexcept { return data_[row * width_ + col]; }
    const T& operator()(std::size_t row, std::size_t col) const noexcept {
        return data_[row * width_ + col];
    }
    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }
    std::vector<T>& storage() noexcept { return data_; }
    const std::vector<T>& storage() const noexcept { return data_; }

    bool same_shape(const Grid& o) const noexcept {
        return width_ == o.width_ && height_ == o.height_;
    }

    template <typename U>
    bool same_shape(const Grid<U>& o) const noexcept {
        return width_ == o.width() && height_ == o.height();
    }

    /// True when every sample is finite.
    bool all_finite() const noexcept {
        for (const auto& v : data_) {
            if constexpr (std::is_same_v<T, cplx>) {
                if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
            } else {
                if (!std::isfinite(static_cast<double>(v))) return false;
            }
        }
        return true;
    }

    friend bool operator==(const Grid& a, const Grid& b) {
        return a.width_ == b.width_ && a.height_ == b.height_ && a.pitch_ == b.pitch_ &&
               a.data_ == b.data_;
    }

private:
    void check_header() const {
        if (!(pitch_ > 0.0) || !std::isfinite(pitch_))
            throw ConfigError("grid pitch must be positive and finite");
    }

    std::size_t width_ = 0;
    std::size_t height_ = 0;
    double pitch_ = 1.0;
    std::vector<T> data_;
};

using ComplexField = Grid<cplx>;
/// Real-valued grid. IntensityImage is the nonnegative specialisation by
/// convention; noisy Gaussian frames may legitimately go negative.
using RealGrid = Grid<double>;
using IntensityImage = RealGrid;

template <typename A, typename B>
void require_same_shape(const Grid<A>& a, const Grid<B>& b, const char* what) {
    if (a.width() != b.width() || a.height() != b.height())
        throw ShapeError(std::string(what) + ": shape mismatch " + std::to_string(a.width()) +
                         "x" + std::to_string(a.height()) + " vs " + std::to_string(b.width()) +
                         "x" + std::to_string(b.height()));
}

/// Relation between the high-resolution target grid and the detector grid.
struct SamplingGeometry {
    std::size_t theta = 1;  ///< integer undersampling factor
    double hr_pitch = 1.0;  ///< target pitch, micrometers

    double lr_pitch() const noexcept { return hr_pitch * static_cast<double>(theta); }

    /// Geometry whose detector pitch is given; the HR pitch follows from it.
    static SamplingGeometry from_detector(std::size_t theta, double lr_pitch) {
        if (theta == 0) throw ConfigError("undersampling factor must be >= 1");
        return SamplingGeometry{theta, lr_pitch / static_cast<double>(theta)};
    }

    void validate() const {
        if (theta == 0) throw ConfigError("undersampling factor must be >= 1");
        if (!(hr_pitch > 0.0)) throw ConfigError("HR pitch must be positive");
    }

    void check_hr_dims(std::size_t width, std::size_t height) const {
        validate();
        if (width % theta != 0 || height % theta != 0)
            throw ShapeError("HR grid " + std::to_string(width) + "x" + std::to_string(height) +
                             " is not a multiple of theta=" + std::to_string(theta));
    }
};

/// Elementwise product field ⊙ mask.
inline ComplexField hadamard_modulate(const ComplexField& field, const ComplexField& mask) {
    require_same_shape(field, mask, "hadamard_modulate");
    if (field.pitch() != mask.pitch()) throw ShapeError("hadamard_modulate: pitch mismatch");
    ComplexField out(field.width(), field.height(), field.pitch());
    for (std::size_t i = 0; i < field.size(); ++i) out[i] = field[i] * mask[i];
    return out;
}

/// |field|² per sample.
inline IntensityImage intensity(const ComplexField& field) {
    IntensityImage out(field.width(), field.height(), field.pitch());
    for (std::size_t i = 0; i < field.size(); ++i) out[i] = std::norm(field[i]);
    return out;
}

inline RealGrid amplitude(const ComplexField& field) {
    RealGrid out(field.width(), field.height(), field.pitch());
    for (std::size_t i = 0; i < field.size(); ++i) out[i] = std::abs(field[i]);
    return out;
}

/// arg(field) in (−π, π].
inline RealGrid phase(const ComplexField& field) {
    RealGrid out(field.width(), field.height(), field.pitch());
    for (std::size_t i = 0; i < field.size(); ++i) out[i] = std::arg(field[i]);
    return out;
}

inline ComplexField from_amplitude_phase(const RealGrid& amp, const RealGrid& ph) {
    require_same_shape(amp, ph, "from_amplitude_phase");
    ComplexField out(amp.width(), amp.height(), amp.pitch());
    for (std::size_t i = 0; i < amp.size(); ++i) out[i] = std::polar(amp[i], ph[i]);
    return out;
}

/// Sums every θ×θ patch into one detector pixel (a detector integrates photons).
inline IntensityImage bin_intensity(const IntensityImage& hr, const SamplingGeometry& geom) {
    geom.check_hr_dims(hr.width(), hr.height());
    const std::size_t t = geom.theta;
    const std::size_t w = hr.width() / t;
    const std::size_t h = hr.height() / t;
    IntensityImage lr(w, h, hr.pitch() * static_cast<double>(t));
    for (std::size_t r = 0; r < hr.height(); ++r) {
        const std::size_t lr_row = r / t;
        for (std::size_t c = 0; c < hr.width(); ++c) lr(lr_row, c / t) += hr(r, c);
    }
    return lr;
}

/// Replicates each detector pixel over its θ×θ patch. With `normalize` the
/// value is divided by θ² so that binning undoes the replication.
inline IntensityImage upsample_replicate(const IntensityImage& lr, const SamplingGeometry& geom,
                                         bool normalize) {
    geom.validate();
    const std::size_t t = geom.theta;
    const double scale = normalize ? 1.0 / static_cast<double>(t * t) : 1.0;
    IntensityImage hr(lr.width() * t, lr.height() * t, lr.pitch() / static_cast<double>(t));
    for (std::size_t r = 0; r < hr.height(); ++r)
        for (std::size_t c = 0; c < hr.width(); ++c) hr(r, c) = lr(r / t, c / t) * scale;
    return hr;
}

inline double energy(const ComplexField& field) {
    double s = 0.0;
    for (const auto& v : field.values()) s += std::norm(v);
    return s;
}

inline double sum(const RealGrid& img) {
    double s = 0.0;
    for (double v : img.values()) s += v;
    return s;
}

}  // namespace cdpsr
