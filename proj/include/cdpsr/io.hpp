#pragma once

// On-disk formats.
//
//   <name>.f64   little-endian IEEE-754 doubles, row-major; complex grids are
//                stored interleaved (re, im).
//   <name>.meta  key=value text: width, height, pitch, kind (real|complex).
//
// Key-value records (`KeyValue`) are also used for stack/mask metadata,
// solver logs and metrics reports. PNG export is for visualisation only.

#include <algorithm>
#include <bit>
#include <concepts>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <png.h>

#include "cdpsr/field.hpp"

namespace cdpsr {

namespace fs = std::filesystem;

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Ordered string map with typed accessors; serialised as `key=value` lines.
class KeyValue {
public:
    void set(const std::string& key, const std::string& value) { entries_[key] = value; }
    void set(const std::string& key, const char* value) { entries_[key] = value; }
    void set(const std::string& key, double value) { entries_[key] = format_double(value); }
    template <std::integral I>
        requires(!std::same_as<I, bool>)
    void set(const std::string& key, I value) {
        entries_[key] = std::to_string(value);
    }
    void set(const std::string& key, bool value) { entries_[key] = value ? "true" : "false"; }

    bool has(const std::string& key) const { return entries_.count(key) != 0; }
    void erase(const std::string& key) { entries_.erase(key); }

    const std::string& get(const std::string& key) const {
        auto it = entries_.find(key);
        if (it == entries_.end()) throw ConfigError("missing key '" + key + "'");
        return it->second;
    }
    std::string get_or(const std::string& key, const std::string& fallback) const {
        auto it = entries_.find(key);
        return it == entries_.end() ? fallback : it->second;
    }
    double get_double(const std::string& key) const { return parse_double(key, get(key)); }
    double get_double_or(const std::string& key, double fallback) const {
        return has(key) ? get_double(key) : fallback;
    }
    std::int64_t get_int(const std::string& key) const { return parse_int(key, get(key)); }
    std::int64_t get_int_or(const std::string& key, std::int64_t fallback) const {
        return has(key) ? get_int(key) : fallback;
    }
    std::uint64_t get_uint(const std::string& key) const { return parse_uint(key, get(key)); }
    std::uint64_t get_uint_or(const std::string& key, std::uint64_t fallback) const {
        return has(key) ? get_uint(key) : fallback;
    }
    bool get_bool(const std::string& key) const {
        const std::string& s = get(key);
        if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
        if (s == "false" || s == "0" || s == "no" || s == "off") return false;
        throw ConfigError("key '" + key + "': expected boolean, got '" + s + "'");
    }
    bool get_bool_or(const std::string& key, bool fallback) const {
        return has(key) ? get_bool(key) : fallback;
    }

    const std::map<std::string, std::string>& entries() const noexcept { return entries_; }

    std::string to_string() const {
        std::string out;
        for (const auto& [k, v] : entries_) out += k + "=" + v + "\n";
        return out;
    }

    /// Accepts `key=value` or `key = value`; `#` starts a comment line.
    static KeyValue parse(const std::string& text) {
        KeyValue kv;
        std::istringstream in(text);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            auto trimmed = trim(line);
            if (trimmed.empty() || trimmed[0] == '#') continue;
            auto eq = trimmed.find('=');
            if (eq == std::string::npos)
                throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
            auto key = trim(trimmed.substr(0, eq));
            if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
            kv.entries_[key] = trim(trimmed.substr(eq + 1));
        }
        return kv;
    }

    static KeyValue load(const fs::path& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open " + path.string());
        std::stringstream ss;
        ss << in.rdbuf();
        return parse(ss.str());
    }

    void save(const fs::path& path) const {
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw IoError("cannot write " + path.string());
        out << to_string();
    }

    /// Shortest decimal that round-trips to the same double.
    static std::string format_double(double v) {
        if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
        if (std::isnan(v)) return "nan";
        char buf[64];
        for (int prec = 1; prec <= 17; ++prec) {
            std::snprintf(buf, sizeof buf, "%.*g", prec, v);
            if (std::strtod(buf, nullptr) == v) break;
        }
        return buf;
    }

    static double parse_double(const std::string& key, const std::string& s) {
        if (s == "inf" || s == "+inf") return INFINITY;
        if (s == "-inf") return -INFINITY;
        char* end = nullptr;
        double v = std::strtod(s.c_str(), &end);
        if (s.empty() || end != s.c_str() + s.size())
            throw ConfigError("key '" + key + "': expected number, got '" + s + "'");
        return v;
    }

    static std::int64_t parse_int(const std::string& key, const std::string& s) {
        try {
            std::size_t pos = 0;
            auto v = std::stoll(s, &pos, 10);
            if (pos != s.size()) throw std::invalid_argument("trailing");
            return v;
        } catch (const std::exception&) {
            throw ConfigError("key '" + key + "': expected integer, got '" + s + "'");
        }
    }

    static std::uint64_t parse_uint(const std::string& key, const std::string& s) {
        try {
            std::size_t pos = 0;
            if (!s.empty() && s[0] == '-') throw std::invalid_argument("negative");
            auto v = std::stoull(s, &pos, 10);
            if (pos != s.size()) throw std::invalid_argument("trailing");
            return v;
        } catch (const std::exception&) {
            throw ConfigError("key '" + key + "': expected unsigned integer, got '" + s + "'");
        }
    }

    static std::string trim(const std::string& s) {
        const char* ws = " \t\r\n";
        auto b = s.find_first_not_of(ws);
        if (b == std::string::npos) return {};
        auto e = s.find_last_not_of(ws);
        return s.substr(b, e - b + 1);
    }

private:
    std::map<std::string, std::string> entries_;
};

namespace detail {

inline void write_le_doubles(std::ofstream& out, std::span<const double> values) {
    static_assert(sizeof(double) == 8);
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(values.data()),
                  static_cast<std::streamsize>(values.size() * sizeof(double)));
    } else {
        for (double v : values) {
            auto bits = std::bit_cast<std::uint64_t>(v);
            char bytes[8];
            for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
            out.write(bytes, 8);
        }
    }
}

inline std::vector<double> read_le_doubles(const fs::path& path, std::size_t count) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    in.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::size_t>(in.tellg());
    if (bytes != count * sizeof(double))
        throw ShapeError(path.string() + ": expected " + std::to_string(count * 8) + " bytes, found " +
                         std::to_string(bytes));
    in.seekg(0);
    std::vector<double> v(count);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(bytes));
    if constexpr (std::endian::native != std::endian::little) {
        for (auto& d : v) {
            auto bits = std::bit_cast<std::uint64_t>(d);
            std::uint64_t swapped = 0;
            for (int i = 0; i < 8; ++i) swapped = (swapped << 8) | ((bits >> (8 * i)) & 0xff);
            d = std::bit_cast<double>(swapped);
        }
    }
    return v;
}

inline fs::path meta_path(const fs::path& f64) {
    auto p = f64;
    p.replace_extension(".meta");
    return p;
}

}  // namespace detail

/// Writes only the raw `.f64` payload (no sidecar).
inline void write_raw(const fs::path& path, const RealGrid& grid) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    detail::write_le_doubles(out, grid.values());
    if (!out) throw IoError("write failed: " + path.string());
}

inline RealGrid read_raw(const fs::path& path, std::size_t width, std::size_t height,
                         double pitch) {
    return RealGrid(width, height, pitch, detail::read_le_doubles(path, width * height));
}

inline void save_grid(const fs::path& f64, const RealGrid& grid) {
    write_raw(f64, grid);
    KeyValue meta;
    meta.set("width", grid.width());
    meta.set("height", grid.height());
    meta.set("pitch", grid.pitch());
    meta.set("kind", "real");
    meta.save(detail::meta_path(f64));
}

inline void save_grid(const fs::path& f64, const ComplexField& grid) {
    std::ofstream out(f64, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + f64.string());
    std::span<const double> interleaved(reinterpret_cast<const double*>(grid.values().data()),
                                        grid.size() * 2);
    detail::write_le_doubles(out, interleaved);
    if (!out) throw IoError("write failed: " + f64.string());
    KeyValue meta;
    meta.set("width", grid.width());
    meta.set("height", grid.height());
    meta.set("pitch", grid.pitch());
    meta.set("kind", "complex");
    meta.save(detail::meta_path(f64));
}

struct GridHeader {
    std::size_t width = 0;
    std::size_t height = 0;
    double pitch = 1.0;
    bool complex = false;
};

inline GridHeader load_header(const fs::path& f64) {
    auto meta = KeyValue::load(detail::meta_path(f64));
    GridHeader h;
    h.width = static_cast<std::size_t>(meta.get_uint("width"));
    h.height = static_cast<std::size_t>(meta.get_uint("height"));
    h.pitch = meta.get_double("pitch");
    const auto& kind = meta.get("kind");
    if (kind != "real" && kind != "complex") throw IoError("unknown grid kind '" + kind + "'");
    h.complex = kind == "complex";
    return h;
}

inline RealGrid load_real(const fs::path& f64) {
    auto h = load_header(f64);
    if (h.complex) throw IoError(f64.string() + ": expected a real grid");
    return read_raw(f64, h.width, h.height, h.pitch);
}

inline ComplexField load_complex(const fs::path& f64) {
    auto h = load_header(f64);
    if (!h.complex) throw IoError(f64.string() + ": expected a complex grid");
    auto raw = detail::read_le_doubles(f64, h.width * h.height * 2);
    std::vector<cplx> data(h.width * h.height);
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = {raw[2 * i], raw[2 * i + 1]};
    return ComplexField(h.width, h.height, h.pitch, std::move(data));
}

// ---------------------------------------------------------------------------
// PNG

/// Grayscale PNG, 8 or 16 bits per sample, row-major samples.
struct GrayPng {
    std::size_t width = 0;
    std::size_t height = 0;
    int bit_depth = 8;
    std::vector<std::uint16_t> samples;
};

/// 8-bit RGB image, interleaved samples. Used for label previews.
struct RgbPng {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> rgb;
};

namespace detail {

// Encodes `height` rows produced by fill_row(r, row_bytes) into a PNG file.
template <typename FillRow>
void encode_png(const fs::path& path, std::size_t width, std::size_t height, int bit_depth,
                int color_type, std::size_t row_bytes, FillRow&& fill_row) {
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw IoError("cannot write " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IoError("libpng initialisation failed");
    }
    std::vector<unsigned char> row(row_bytes);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IoError("PNG encoding failed: " + path.string());
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
                 bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (std::size_t r = 0; r < height; ++r) {
        fill_row(r, row.data());
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

}  // namespace detail

inline void write_png(const fs::path& path, const GrayPng& img) {
    if (img.bit_depth != 8 && img.bit_depth != 16) throw ConfigError("PNG bit depth must be 8 or 16");
    if (img.samples.size() != img.width * img.height) throw ShapeError("PNG sample count mismatch");
    const std::size_t bytes = static_cast<std::size_t>(img.bit_depth / 8);
    detail::encode_png(path, img.width, img.height, img.bit_depth, PNG_COLOR_TYPE_GRAY,
                       img.width * bytes, [&](std::size_t r, unsigned char* row) {
                           for (std::size_t c = 0; c < img.width; ++c) {
                               const auto s = img.samples[r * img.width + c];
                               if (bytes == 1) {
                                   row[c] = static_cast<unsigned char>(s);
                               } else {
                                   row[2 * c] = static_cast<unsigned char>(s >> 8);  // big-endian
                                   row[2 * c + 1] = static_cast<unsigned char>(s & 0xff);
                               }
                           }
                       });
}

inline void write_png(const fs::path& path, const RgbPng& img) {
    if (img.rgb.size() != 3 * img.width * img.height) throw ShapeError("PNG sample count mismatch");
    detail::encode_png(path, img.width, img.height, 8, PNG_COLOR_TYPE_RGB, 3 * img.width,
                       [&](std::size_t r, unsigned char* row) {
                           std::memcpy(row, img.rgb.data() + 3 * r * img.width, 3 * img.width);
                       });
}

/// Reads any PNG, converting to grayscale; returns samples at native depth (8 or 16).
inline GrayPng read_png(const fs::path& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw IoError("cannot open " + path.string());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw IoError("libpng initialisation failed");
    }
    GrayPng img;
    std::vector<unsigned char> buf;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw IoError("PNG decoding failed: " + path.string());
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    const auto color = png_get_color_type(png, info);
    int depth = png_get_bit_depth(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA ||
        color == PNG_COLOR_TYPE_PALETTE)
        png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    img.width = png_get_image_width(png, info);
    img.height = png_get_image_height(png, info);
    img.bit_depth = png_get_bit_depth(png, info) == 16 ? 16 : 8;
    const auto rowbytes = png_get_rowbytes(png, info);
    buf.resize(rowbytes * img.height);
    std::vector<png_bytep> rows(img.height);
    for (std::size_t r = 0; r < img.height; ++r) rows[r] = buf.data() + r * rowbytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);

    const std::size_t bytes = img.bit_depth / 8;
    const std::size_t channels = rowbytes / (img.width * bytes);
    img.samples.resize(img.width * img.height);
    for (std::size_t r = 0; r < img.height; ++r)
        for (std::size_t c = 0; c < img.width; ++c) {
            const unsigned char* p = rows[r] + c * channels * bytes;
            img.samples[r * img.width + c] =
                bytes == 1 ? p[0] : static_cast<std::uint16_t>((p[0] << 8) | p[1]);
        }
    return img;
}

/// Grayscale PNG as a real grid scaled to [0, 1].
inline RealGrid load_png_unit(const fs::path& path, double pitch = 1.0) {
    auto img = read_png(path);
    const double maxv = img.bit_depth == 16 ? 65535.0 : 255.0;
    RealGrid out(img.width, img.height, pitch);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = img.samples[i] / maxv;
    return out;
}

/// Linear [lo, hi] → [0, 2^depth − 1] quantisation. A flat image maps to 0.
inline GrayPng quantize(const RealGrid& grid, double lo, double hi, int bit_depth) {
    GrayPng img{grid.width(), grid.height(), bit_depth, {}};
    const double maxv = bit_depth == 16 ? 65535.0 : 255.0;
    const double span = hi - lo;
    img.samples.resize(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        double t = span > 0 ? (grid[i] - lo) / span : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        img.samples[i] = static_cast<std::uint16_t>(std::lround(t * maxv));
    }
    return img;
}

/// Amplitude preview scaled linearly to the image's own [min, max].
inline void export_amplitude_png(const fs::path& path, const ComplexField& field, int bit_depth = 8) {
    auto amp = amplitude(field);
    auto [mn, mx] = std::minmax_element(amp.values().begin(), amp.values().end());
    write_png(path, quantize(amp, *mn, *mx, bit_depth));
}

/// Wraps x into [−π, π).
inline double wrap_phase(double x) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double r = std::fmod(x + std::numbers::pi, two_pi);
    if (r < 0) r += two_pi;
    return r - std::numbers::pi;
}

/// Phase preview: wrapped to [−π, π) then mapped linearly over that interval.
inline void export_phase_png(const fs::path& path, const ComplexField& field, int bit_depth = 8) {
    RealGrid ph(field.width(), field.height(), field.pitch());
    for (std::size_t i = 0; i < field.size(); ++i) ph[i] = wrap_phase(std::arg(field[i]));
    write_png(path, quantize(ph, -std::numbers::pi, std::numbers::pi, bit_depth));
}

inline void export_real_png(const fs::path& path, const RealGrid& grid, int bit_depth = 8) {
    auto [mn, mx] = std::minmax_element(grid.values().begin(), grid.values().end());
    write_png(path, quantize(grid, *mn, *mx, bit_depth));
}

}  // namespace cdpsr
