#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "solarsr/error.hpp"

namespace solarsr {

/// Axis-aligned pixel rectangle; (x, y) is the top-left corner.
struct Rect {
    int x = 0;
    int y = 0;
    int width = 0;
    int height = 0;

    [[nodiscard]] long long area() const noexcept { return static_cast<long long>(width) * height; }
    friend bool operator==(const Rect&, const Rect&) = default;
};

/// Row-major raster of physical values plus a validity mask. Pixel (x, y)
/// has its center at continuous coordinate (x, y).
class Image2D {
public:
    Image2D() = default;

    Image2D(int width, int height, double fill = 0.0)
        : width_(width), height_(height),
          pixels_(checked_size(width, height), fill),
          valid_(checked_size(width, height), 1) {}

    Image2D(int width, int height, std::vector<double> pixels)
        : width_(width), height_(height), pixels_(std::move(pixels)),
          valid_(checked_size(width, height), 1) {
        require(pixels_.size() == valid_.size(), ErrorCode::ShapeMismatch,
                "pixel buffer does not match " + std::to_string(width) + "x" + std::to_string(height));
    }

    Image2D(int width, int height, std::vector<double> pixels, std::vector<std::uint8_t> valid)
        : width_(width), height_(height), pixels_(std::move(pixels)), valid_(std::move(valid)) {
        const auto n = checked_size(width, height);
        require(pixels_.size() == n && valid_.size() == n, ErrorCode::ShapeMismatch,
                "pixel or mask buffer does not match image size");
    }

    [[nodiscard]] int width() const noexcept { return width_; }
    [[nodiscard]] int height() const noexcept { return height_; }
    [[nodiscard]] std::size_t size() const noexcept { return pixels_.size(); }
    [[nodiscard]] bool empty() const noexcept { return pixels_.empty(); }

    [[nodiscard]] double& at(int x, int y) { return pixels_[index(x, y)]; }
    [[nodiscard]] double at(int x, int y) const { return pixels_[index(x, y)]; }
    [[nodiscard]] bool valid(int x, int y) const { return valid_[index(x, y)] != 0; }
    void set_valid(int x, int y, bool v) { valid_[index(x, y)] = v ? 1 : 0; }

    [[nodiscard]] std::vector<double>& pixels() noexcept { return pixels_; }
    [[nodiscard]] const std::vector<double>& pixels() const noexcept { return pixels_; }
    [[nodiscard]] std::vector<std::uint8_t>& mask() noexcept { return valid_; }
    [[nodiscard]] const std::vector<std::uint8_t>& mask() const noexcept { return valid_; }

    [[nodiscard]] std::size_t valid_count() const noexcept {
        return static_cast<std::size_t>(std::count(valid_.begin(), valid_.end(), std::uint8_t{1}));
    }
    [[nodiscard]] bool all_valid() const noexcept { return valid_count() == valid_.size(); }

    [[nodiscard]] bool contains(int x, int y) const noexcept {
        return x >= 0 && y >= 0 && x < width_ && y < height_;
    }

    [[nodiscard]] Image2D crop(const Rect& r) const {
        require(r.x >= 0 && r.y >= 0 && r.width > 0 && r.height > 0 && r.x + r.width <= width_ &&
                    r.y + r.height <= height_,
                ErrorCode::InvalidArgument, "crop rectangle outside image");
        Image2D out(r.width, r.height);
        for (int y = 0; y < r.height; ++y) {
            for (int x = 0; x < r.width; ++x) {
                out.at(x, y) = at(r.x + x, r.y + y);
                out.set_valid(x, y, valid(r.x + x, r.y + y));
            }
        }
        return out;
    }

    /// Min and max over valid pixels; nullopt when nothing is valid.
    [[nodiscard]] std::optional<std::pair<double, double>> valid_range() const {
        std::optional<std::pair<double, double>> range;
        for (std::size_t i = 0; i < pixels_.size(); ++i) {
            if (!valid_[i]) continue;
            if (!range) {
                range = std::pair{pixels_[i], pixels_[i]};
            } else {
                range->first = std::min(range->first, pixels_[i]);
                range->second = std::max(range->second, pixels_[i]);
            }
        }
        return range;
    }

    friend bool operator==(const Image2D&, const Image2D&) = default;

private:
    static std::size_t checked_size(int width, int height) {
        require(width >= 0 && height >= 0, ErrorCode::InvalidArgument, "negative image dimension");
        return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    }
    [[nodiscard]] std::size_t index(int x, int y) const noexcept {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<double> pixels_;
    std::vector<std::uint8_t> valid_;
};

/// Integer translation: out(x, y) = in(x - dx, y - dy). Pixels with no
/// source are invalid.
inline Image2D shift_image(const Image2D& in, int dx, int dy) {
    Image2D out(in.width(), in.height());
    for (int y = 0; y < in.height(); ++y) {
        for (int x = 0; x < in.width(); ++x) {
            const int sx = x - dx;
            const int sy = y - dy;
            if (in.contains(sx, sy)) {
                out.at(x, y) = in.at(sx, sy);
                out.set_valid(x, y, in.valid(sx, sy));
            } else {
                out.set_valid(x, y, false);
            }
        }
    }
    return out;
}

/// Bilinear sample at a continuous coordinate. Returns nullopt outside the
/// pixel-center hull or when a contributing neighbor is invalid.
inline std::optional<double> sample_bilinear(const Image2D& img, double x, double y) {
    constexpr double eps = 1e-9;
    const double xmax = img.width() - 1;
    const double ymax = img.height() - 1;
    if (!(x >= -eps && y >= -eps && x <= xmax + eps && y <= ymax + eps)) return std::nullopt;
    x = std::clamp(x, 0.0, xmax);
    y = std::clamp(y, 0.0, ymax);
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const double fx = x - x0;
    const double fy = y - y0;
    const int x1 = fx > 0.0 ? x0 + 1 : x0;
    const int y1 = fy > 0.0 ? y0 + 1 : y0;
    if (!img.valid(x0, y0) || !img.valid(x1, y0) || !img.valid(x0, y1) || !img.valid(x1, y1)) {
        return std::nullopt;
    }
    const double top = img.at(x0, y0) * (1.0 - fx) + img.at(x1, y0) * fx;
    const double bottom = img.at(x0, y1) * (1.0 - fx) + img.at(x1, y1) * fx;
    return top * (1.0 - fy) + bottom * fy;
}

/// Resample onto a new grid by inverse mapping: for each destination pixel,
/// `to_source(x, y)` yields the source coordinate sampled bilinearly.
template <typename InverseMap>
Image2D warp_inverse(const Image2D& src, int out_width, int out_height, InverseMap&& to_source) {
    Image2D out(out_width, out_height);
    for (int y = 0; y < out_height; ++y) {
        for (int x = 0; x < out_width; ++x) {
            const auto [sx, sy] = to_source(static_cast<double>(x), static_cast<double>(y));
            if (auto v = sample_bilinear(src, sx, sy)) {
                out.at(x, y) = *v;
            } else {
                out.set_valid(x, y, false);
            }
        }
    }
    return out;
}

namespace detail {

struct AreaTap {
    int source;
    double weight;
};

// Overlap weights of output cell [q*ratio, (q+1)*ratio) with unit input
// cells, in pixel-edge coordinates.
inline std::vector<std::vector<AreaTap>> area_taps(int in_size, int out_size, double ratio) {
    std::vector<std::vector<AreaTap>> taps(static_cast<std::size_t>(out_size));
    for (int q = 0; q < out_size; ++q) {
        const double lo = q * ratio;
        const double hi = std::min((q + 1) * ratio, static_cast<double>(in_size));
        for (int i = static_cast<int>(std::floor(lo)); i < in_size && i < hi; ++i) {
            const double w = std::min(hi, i + 1.0) - std::max(lo, static_cast<double>(i));
            if (w > 1e-12) taps[static_cast<std::size_t>(q)].push_back({i, w});
        }
    }
    return taps;
}

}  // namespace detail

/// Area-averaging downsample by a (possibly fractional) ratio >= 1 of input
/// pixels per output pixel. Output centers map to input coordinates via
/// x_in = (x_out + 0.5) * ratio - 0.5. An output pixel is valid only when
/// every input pixel it overlaps is valid.
inline Image2D area_downsample(const Image2D& in, double ratio) {
    require(ratio >= 1.0 && std::isfinite(ratio), ErrorCode::InvalidArgument,
            "area_downsample ratio must be >= 1");
    const int ow = static_cast<int>(std::floor(in.width() / ratio + 1e-9));
    const int oh = static_cast<int>(std::floor(in.height() / ratio + 1e-9));
    require(ow > 0 && oh > 0, ErrorCode::InvalidArgument, "downsampled image would be empty");
    const auto tx = detail::area_taps(in.width(), ow, ratio);
    const auto ty = detail::area_taps(in.height(), oh, ratio);

    // Horizontal pass keeps value sums, valid-weight sums and total weights.
    const std::size_t n = static_cast<std::size_t>(ow) * static_cast<std::size_t>(in.height());
    std::vector<double> hsum(n, 0.0), hvalid(n, 0.0), htotal(n, 0.0);
    for (int y = 0; y < in.height(); ++y) {
        for (int q = 0; q < ow; ++q) {
            double s = 0.0, v = 0.0, t = 0.0;
            for (const auto& tap : tx[static_cast<std::size_t>(q)]) {
                t += tap.weight;
                if (in.valid(tap.source, y)) {
                    s += tap.weight * in.at(tap.source, y);
                    v += tap.weight;
                }
            }
            const std::size_t k = static_cast<std::size_t>(y) * static_cast<std::size_t>(ow) + static_cast<std::size_t>(q);
            hsum[k] = s;
            hvalid[k] = v;
            htotal[k] = t;
        }
    }
    Image2D out(ow, oh);
    for (int p = 0; p < oh; ++p) {
        for (int q = 0; q < ow; ++q) {
            double s = 0.0, v = 0.0, t = 0.0;
            for (const auto& tap : ty[static_cast<std::size_t>(p)]) {
                const std::size_t k = static_cast<std::size_t>(tap.source) * static_cast<std::size_t>(ow) + static_cast<std::size_t>(q);
                s += tap.weight * hsum[k];
                v += tap.weight * hvalid[k];
                t += tap.weight * htotal[k];
            }
            const bool ok = t > 0.0 && v >= t * (1.0 - 1e-9);
            out.at(q, p) = ok ? s / v : 0.0;
            out.set_valid(q, p, ok);
        }
    }
    return out;
}

namespace detail {

// Keys cubic convolution kernel, a = -0.5.
inline double cubic_weight(double t) {
    t = std::abs(t);
    if (t < 1.0) return (1.5 * t - 2.5) * t * t + 1.0;
    if (t < 2.0) return ((-0.5 * t + 2.5) * t - 4.0) * t + 2.0;
    return 0.0;
}

}  // namespace detail

/// Bicubic sample with edge clamping; ignores the validity mask.
inline double sample_bicubic(const Image2D& img, double x, double y) {
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    double acc = 0.0;
    for (int j = -1; j <= 2; ++j) {
        const double wy = detail::cubic_weight(y - (y0 + j));
        if (wy == 0.0) continue;
        const int sy = std::clamp(y0 + j, 0, img.height() - 1);
        for (int i = -1; i <= 2; ++i) {
            const double wx = detail::cubic_weight(x - (x0 + i));
            if (wx == 0.0) continue;
            const int sx = std::clamp(x0 + i, 0, img.width() - 1);
            acc += wx * wy * img.at(sx, sy);
        }
    }
    return acc;
}

/// Integer-factor bicubic upscale with pixel-area alignment
/// (x_in = (x_out + 0.5) / factor - 0.5). Output is valid where the
/// nearest source pixel is valid.
inline Image2D bicubic_upscale(const Image2D& in, int factor) {
    require(factor >= 1, ErrorCode::InvalidArgument, "upscale factor must be >= 1");
    if (factor == 1) return in;
    Image2D out(in.width() * factor, in.height() * factor);
    for (int y = 0; y < out.height(); ++y) {
        const double sy = (y + 0.5) / factor - 0.5;
        for (int x = 0; x < out.width(); ++x) {
            const double sx = (x + 0.5) / factor - 0.5;
            out.at(x, y) = sample_bicubic(in, sx, sy);
            out.set_valid(x, y, in.valid(x / factor, y / factor));
        }
    }
    return out;
}

}  // namespace solarsr
