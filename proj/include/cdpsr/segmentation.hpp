#pragma once

// Cell segmentation of a reconstructed amplitude or phase image:
//
//   binarize → fill enclosed holes → Euclidean distance transform →
//   distance-map peaks as markers → marker-driven watershed on −distance
//
// and counting with optional removal of objects that touch the border.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <queue>
#include <string>
#include <vector>

#include "cdpsr/field.hpp"
#include "cdpsr/io.hpp"

namespace cdpsr {

enum class ThresholdMethod { Otsu, Fixed };

inline const char* to_string(ThresholdMethod m) { return m == ThresholdMethod::Otsu ? "otsu" : "fixed"; }

inline ThresholdMethod parse_threshold_method(const std::string& s) {
    if (s == "otsu") return ThresholdMethod::Otsu;
    if (s == "fixed") return ThresholdMethod::Fixed;
    throw ConfigError("unknown threshold method '" + s + "'");
}

/// Foreground mask, 1 = object.
struct BinaryImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> data;

    std::uint8_t& operator()(std::size_t r, std::size_t c) { return data[r * width + c]; }
    std::uint8_t operator()(std::size_t r, std::size_t c) const { return data[r * width + c]; }
};

struct LabelMap {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint32_t> labels;  ///< 0 = background, objects 1..count
    std::size_t count = 0;

    std::uint32_t operator()(std::size_t r, std::size_t c) const { return labels[r * width + c]; }

    /// True when the labels are exactly {0..count} (0 optional) and shape-consistent.
    bool valid() const {
        if (labels.size() != width * height) return false;
        std::vector<bool> seen(count + 1, false);
        for (auto l : labels) {
            if (l > count) return false;
            seen[l] = true;
        }
        for (std::size_t l = 1; l <= count; ++l)
            if (!seen[l]) return false;
        return true;
    }
};

struct SegmentParams {
    ThresholdMethod method = ThresholdMethod::Otsu;
    double fixed_threshold = 0.5;
    double min_distance = 7.0;
};

/// Otsu threshold over a 256-bin histogram spanning [min, max]. Pixels
/// strictly above the returned value are foreground.
inline double otsu_threshold(const RealGrid& img) {
    if (img.empty()) throw ShapeError("otsu_threshold: empty image");
    auto [mn_it, mx_it] = std::minmax_element(img.values().begin(), img.values().end());
    const double lo = *mn_it, hi = *mx_it;
    if (!(hi > lo)) return hi;
    constexpr int kBins = 256;
    const double width = (hi - lo) / kBins;
    std::vector<double> hist(kBins, 0.0);
    for (double v : img.values()) {
        int b = static_cast<int>((v - lo) / width);
        hist[std::clamp(b, 0, kBins - 1)] += 1.0;
    }
    const double total = static_cast<double>(img.size());
    double sum_all = 0.0;
    for (int b = 0; b < kBins; ++b) sum_all += b * hist[b];
    double w0 = 0.0, sum0 = 0.0, best = -1.0;
    int best_bin = 0;
    for (int b = 0; b < kBins - 1; ++b) {
        w0 += hist[b];
        sum0 += b * hist[b];
        const double w1 = total - w0;
        if (w0 == 0.0 || w1 == 0.0) continue;
        const double m0 = sum0 / w0, m1 = (sum_all - sum0) / w1;
        const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if (between > best) {
            best = between;
            best_bin = b;
        }
    }
    return lo + (best_bin + 1) * width;
}

inline BinaryImage binarize(const RealGrid& img, const SegmentParams& params = {}) {
    if (!img.all_finite()) throw ConfigError("binarize: image contains non-finite values");
    const double t = params.method == ThresholdMethod::Otsu ? otsu_threshold(img) : params.fixed_threshold;
    BinaryImage out{img.width(), img.height(), std::vector<std::uint8_t>(img.size(), 0)};
    for (std::size_t i = 0; i < img.size(); ++i) out.data[i] = img[i] > t ? 1 : 0;
    // A flat image at its own threshold has no foreground.
    return out;
}

/// Background regions not 4-connected to the image border become foreground.
inline BinaryImage fill_holes(const BinaryImage& mask) {
    const std::size_t w = mask.width, h = mask.height;
    std::vector<std::uint8_t> outside(w * h, 0);
    std::vector<std::size_t> stack;
    auto seed = [&](std::size_t r, std::size_t c) {
        const std::size_t i = r * w + c;
        if (!mask.data[i] && !outside[i]) {
            outside[i] = 1;
            stack.push_back(i);
        }
    };
    for (std::size_t c = 0; c < w; ++c) {
        seed(0, c);
        seed(h - 1, c);
    }
    for (std::size_t r = 0; r < h; ++r) {
        seed(r, 0);
        seed(r, w - 1);
    }
    while (!stack.empty()) {
        const std::size_t i = stack.back();
        stack.pop_back();
        const std::size_t r = i / w, c = i % w;
        if (r > 0) seed(r - 1, c);
        if (r + 1 < h) seed(r + 1, c);
        if (c > 0) seed(r, c - 1);
        if (c + 1 < w) seed(r, c + 1);
    }
    BinaryImage out = mask;
    for (std::size_t i = 0; i < out.data.size(); ++i)
        if (!outside[i]) out.data[i] = 1;
    return out;
}

namespace detail {

// 1-D squared distance transform of a sampled function (lower envelope of parabolas).
inline void edt_1d(const double* f, std::size_t n, double* d, std::vector<std::size_t>& v,
                   std::vector<double>& z) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    v.assign(n, 0);
    z.assign(n + 1, 0.0);
    std::size_t k = 0;
    // Skip leading infinite samples; they contribute no parabola.
    std::size_t first = 0;
    while (first < n && std::isinf(f[first])) ++first;
    if (first == n) {
        std::fill(d, d + n, inf);
        return;
    }
    v[0] = first;
    z[0] = -inf;
    z[1] = inf;
    for (std::size_t q = first + 1; q < n; ++q) {
        if (std::isinf(f[q])) continue;
        const double fq = f[q] + static_cast<double>(q * q);
        auto meet = [&](std::size_t p) {
            return (fq - (f[p] + static_cast<double>(p * p))) /
                   (2.0 * static_cast<double>(q) - 2.0 * static_cast<double>(p));
        };
        double s = meet(v[k]);
        while (s <= z[k]) s = meet(v[--k]);  // z[0] = −inf stops the walk
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = inf;
    }
    k = 0;
    for (std::size_t q = 0; q < n; ++q) {
        while (z[k + 1] < static_cast<double>(q)) ++k;
        const double dq = static_cast<double>(q) - static_cast<double>(v[k]);
        d[q] = dq * dq + f[v[k]];
    }
}

}  // namespace detail

/// Exact Euclidean distance from each foreground pixel to the nearest
/// background pixel inside the image (0 on background). An image without any
/// background gets +inf everywhere.
inline RealGrid distance_transform(const BinaryImage& mask) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    const std::size_t w = mask.width, h = mask.height;
    RealGrid out(w, h, 1.0);
    std::vector<double> f(std::max(w, h)), d(std::max(w, h));
    std::vector<std::size_t> v;
    std::vector<double> z;
    for (std::size_t i = 0; i < w * h; ++i) out[i] = mask.data[i] ? inf : 0.0;
    for (std::size_t c = 0; c < w; ++c) {
        for (std::size_t r = 0; r < h; ++r) f[r] = out(r, c);
        detail::edt_1d(f.data(), h, d.data(), v, z);
        for (std::size_t r = 0; r < h; ++r) out(r, c) = d[r];
    }
    for (std::size_t r = 0; r < h; ++r) {
        detail::edt_1d(&out(r, 0), w, d.data(), v, z);
        for (std::size_t c = 0; c < w; ++c) out(r, c) = std::sqrt(d[c]);
    }
    return out;
}

namespace detail {

// 4-connected components of the foreground; returns labels 1..n in row-major
// order of first appearance.
inline std::vector<std::uint32_t> components(const BinaryImage& mask, std::size_t& n) {
    const std::size_t w = mask.width, h = mask.height;
    std::vector<std::uint32_t> lab(w * h, 0);
    std::vector<std::size_t> stack;
    n = 0;
    for (std::size_t s = 0; s < w * h; ++s) {
        if (!mask.data[s] || lab[s]) continue;
        const auto id = static_cast<std::uint32_t>(++n);
        lab[s] = id;
        stack.push_back(s);
        while (!stack.empty()) {
            const std::size_t i = stack.back();
            stack.pop_back();
            const std::size_t r = i / w, c = i % w;
            const std::size_t nb[4] = {r > 0 ? i - w : i, r + 1 < h ? i + w : i, c > 0 ? i - 1 : i,
                                       c + 1 < w ? i + 1 : i};
            for (std::size_t j : nb)
                if (mask.data[j] && !lab[j]) {
                    lab[j] = id;
                    stack.push_back(j);
                }
        }
    }
    return lab;
}

}  // namespace detail

/// Marker pixels: local maxima (8-neighbourhood, plateaus allowed) of the
/// distance map, accepted greedily in descending value with row-major tie
/// breaking and rejected when closer than min_distance (Euclidean) to an
/// accepted marker. A foreground component left without any marker (e.g. an
/// image with no background, where distances are infinite) gets its first
/// maximal pixel.
inline std::vector<std::size_t> find_markers(const RealGrid& dist, const BinaryImage& mask,
                                             double min_distance) {
    const std::size_t w = dist.width(), h = dist.height();
    std::vector<std::size_t> cand;
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) {
            const std::size_t i = r * w + c;
            if (!mask.data[i] || !std::isfinite(dist[i])) continue;
            bool peak = true;
            for (int dr = -1; dr <= 1 && peak; ++dr)
                for (int dc = -1; dc <= 1; ++dc) {
                    if (dr == 0 && dc == 0) continue;
                    const auto rr = static_cast<std::ptrdiff_t>(r) + dr;
                    const auto cc = static_cast<std::ptrdiff_t>(c) + dc;
                    if (rr < 0 || cc < 0 || rr >= static_cast<std::ptrdiff_t>(h) ||
                        cc >= static_cast<std::ptrdiff_t>(w))
                        continue;
                    if (dist(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc)) > dist[i]) {
                        peak = false;
                        break;
                    }
                }
            if (peak) cand.push_back(i);
        }
    std::stable_sort(cand.begin(), cand.end(), [&](std::size_t a, std::size_t b) { return dist[a] > dist[b]; });

    std::vector<std::size_t> markers;
    const double md2 = min_distance * min_distance;
    for (std::size_t i : cand) {
        const double r = static_cast<double>(i / w), c = static_cast<double>(i % w);
        bool ok = true;
        for (std::size_t m : markers) {
            const double dr = r - static_cast<double>(m / w), dc = c - static_cast<double>(m % w);
            if (dr * dr + dc * dc < md2) {
                ok = false;
                break;
            }
        }
        if (ok) markers.push_back(i);
    }

    std::size_t ncomp = 0;
    const auto comp = detail::components(mask, ncomp);
    std::vector<bool> has(ncomp + 1, false);
    for (std::size_t m : markers) has[comp[m]] = true;
    std::vector<std::size_t> best(ncomp + 1, w * h);
    for (std::size_t i = 0; i < w * h; ++i) {
        const auto k = comp[i];
        if (k == 0 || has[k]) continue;
        if (best[k] == w * h || dist[i] > dist[best[k]]) best[k] = i;
    }
    for (std::size_t k = 1; k <= ncomp; ++k)
        if (!has[k]) markers.push_back(best[k]);
    return markers;
}

/// Priority-flood watershed of −dist restricted to the foreground, seeded
/// with one label per marker (4-connectivity, FIFO among equal priorities).
inline LabelMap watershed(const RealGrid& dist, const BinaryImage& mask, const std::vector<std::size_t>& markers) {
    const std::size_t w = dist.width(), h = dist.height();
    LabelMap out{w, h, std::vector<std::uint32_t>(w * h, 0), 0};
    struct Item {
        double key;
        std::uint64_t order;
        std::size_t index;
        bool operator>(const Item& o) const { return key != o.key ? key > o.key : order > o.order; }
    };
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> pq;
    std::uint64_t order = 0;
    for (std::size_t k = 0; k < markers.size(); ++k) {
        const std::size_t i = markers[k];
        if (out.labels[i]) continue;
        out.labels[i] = static_cast<std::uint32_t>(k + 1);
        pq.push({-dist[i], order++, i});
    }
    while (!pq.empty()) {
        const auto it = pq.top();
        pq.pop();
        const std::size_t i = it.index, r = i / w, c = i % w;
        const std::size_t nb[4] = {r > 0 ? i - w : i, r + 1 < h ? i + w : i, c > 0 ? i - 1 : i,
                                   c + 1 < w ? i + 1 : i};
        for (std::size_t j : nb) {
            if (j == i || !mask.data[j] || out.labels[j]) continue;
            out.labels[j] = out.labels[i];
            pq.push({std::max(-dist[j], it.key), order++, j});
        }
    }
    // Relabel in row-major order of first appearance so ids are 1..count.
    std::vector<std::uint32_t> remap(markers.size() + 1, 0);
    std::uint32_t next = 0;
    for (auto& l : out.labels) {
        if (l == 0) continue;
        if (!remap[l]) remap[l] = ++next;
        l = remap[l];
    }
    out.count = next;
    return out;
}

inline LabelMap watershed_segment(const RealGrid& img, const SegmentParams& params = {}) {
    if (!(params.min_distance >= 0.0)) throw ConfigError("min_distance must be >= 0");
    const auto mask = fill_holes(binarize(img, params));
    const auto dist = distance_transform(mask);
    return watershed(dist, mask, find_markers(dist, mask, params.min_distance));
}

/// Number of labels; with exclude_margin, labels touching the border are skipped.
inline std::size_t count_cells(const LabelMap& labels, bool exclude_margin) {
    if (!exclude_margin) return labels.count;
    std::vector<bool> border(labels.count + 1, false);
    const std::size_t w = labels.width, h = labels.height;
    for (std::size_t c = 0; c < w; ++c) {
        border[labels(0, c)] = true;
        border[labels(h - 1, c)] = true;
    }
    for (std::size_t r = 0; r < h; ++r) {
        border[labels(r, 0)] = true;
        border[labels(r, w - 1)] = true;
    }
    std::size_t n = 0;
    for (std::size_t l = 1; l <= labels.count; ++l) n += border[l] ? 0 : 1;
    return n;
}

/// Labels as a 16-bit grayscale PNG (label value = sample value).
inline void write_label_png(const fs::path& path, const LabelMap& labels) {
    if (labels.count > 65535) throw ConfigError("too many labels for a 16-bit PNG");
    GrayPng img{labels.width, labels.height, 16, {}};
    img.samples.assign(labels.labels.begin(), labels.labels.end());
    write_png(path, img);
}

inline LabelMap read_label_png(const fs::path& path) {
    const auto img = read_png(path);
    LabelMap out{img.width, img.height, std::vector<std::uint32_t>(img.samples.begin(), img.samples.end()), 0};
    for (auto l : out.labels) out.count = std::max<std::size_t>(out.count, l);
    return out;
}

/// Colour preview: background black, each label a distinct hue.
inline void write_label_preview(const fs::path& path, const LabelMap& labels) {
    RgbPng img{labels.width, labels.height, std::vector<std::uint8_t>(3 * labels.labels.size(), 0)};
    for (std::size_t i = 0; i < labels.labels.size(); ++i) {
        const auto l = labels.labels[i];
        if (l == 0) continue;
        // golden-ratio hue walk, full saturation, HSV → RGB
        const double hue = std::fmod(0.618033988749895 * l, 1.0) * 6.0;
        const int sector = static_cast<int>(hue);
        const double f = hue - sector;
        const double vals[6][3] = {{1, f, 0}, {1 - f, 1, 0}, {0, 1, f}, {0, 1 - f, 1}, {f, 0, 1}, {1, 0, 1 - f}};
        for (int ch = 0; ch < 3; ++ch)
            img.rgb[3 * i + ch] = static_cast<std::uint8_t>(std::lround(55 + 200 * vals[sector % 6][ch]));
    }
    write_png(path, img);
}

}  // namespace cdpsr
