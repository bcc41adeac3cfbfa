#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "solarsr/error.hpp"
#include "solarsr/fft.hpp"
#include "solarsr/image.hpp"

namespace solarsr {

enum class Window { none, hann };

/// |DFT|^2 with zero frequency at (width / 2, height / 2), row-major.
struct PowerSpectrum2D {
    int width = 0;
    int height = 0;
    std::vector<double> power;

    [[nodiscard]] double at(int x, int y) const {
        return power[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)];
    }
    [[nodiscard]] double total() const {
        double s = 0.0;
        for (double p : power) s += p;
        return s;
    }
};

/// Annulus k holds spectrum pixels with floor(r) == k; empty annuli are
/// omitted.
struct RadialSpectrum {
    std::vector<int> bin;
    std::vector<double> bin_center;  // k + 0.5
    std::vector<double> power;       // mean power in the annulus
    std::vector<std::size_t> counts;
};

namespace detail {

inline std::vector<double> hann(int n) {
    std::vector<double> w(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) w[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / (n - 1));
    return w;
}

}  // namespace detail

inline PowerSpectrum2D power_spectrum_2d(const Image2D& image, Window window = Window::none) {
    require(image.width() >= 4 && image.height() >= 4, ErrorCode::InvalidArgument, "spectrum needs at least 4x4 pixels");
    require(image.all_valid(), ErrorCode::InvalidRegionPresent, "image contains invalid pixels; crop first");
    const int W = image.width(), H = image.height();
    std::vector<double> data = image.pixels();
    if (window == Window::hann) {
        const auto wx = detail::hann(W), wy = detail::hann(H);
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) data[static_cast<std::size_t>(y) * W + x] *= wy[static_cast<std::size_t>(y)] * wx[static_cast<std::size_t>(x)];
        }
    }
    const fft::RealFft2D plan(H, W);
    const auto spec = plan.forward_full(data);
    PowerSpectrum2D ps{W, H, std::vector<double>(spec.size())};
    for (int v = 0; v < H; ++v) {
        const int sy = (v + H / 2) % H;
        for (int u = 0; u < W; ++u) {
            const int sx = (u + W / 2) % W;
            ps.power[static_cast<std::size_t>(sy) * W + sx] = std::norm(spec[static_cast<std::size_t>(v) * W + u]);
        }
    }
    return ps;
}

inline RadialSpectrum azimuthal_average(const PowerSpectrum2D& ps) {
    const int cx = ps.width / 2, cy = ps.height / 2;
    std::vector<double> sum;
    std::vector<std::size_t> count;
    for (int y = 0; y < ps.height; ++y) {
        for (int x = 0; x < ps.width; ++x) {
            const auto k = static_cast<std::size_t>(std::floor(std::hypot(x - cx, y - cy)));
            if (k >= sum.size()) {
                sum.resize(k + 1, 0.0);
                count.resize(k + 1, 0);
            }
            sum[k] += ps.at(x, y);
            ++count[k];
        }
    }
    RadialSpectrum r;
    for (std::size_t k = 0; k < sum.size(); ++k) {
        if (count[k] == 0) continue;
        r.bin.push_back(static_cast<int>(k));
        r.bin_center.push_back(static_cast<double>(k) + 0.5);
        r.power.push_back(sum[k] / static_cast<double>(count[k]));
        r.counts.push_back(count[k]);
    }
    return r;
}

struct SpectraReport {
    RadialSpectrum sr;
    RadialSpectrum lr;  // upscaled to the SR grid
    int upscale_factor = 1;
    int size = 0;       // side of the analyzed square
    double high_frequency_ratio = 0.0;
};

/// Largest centered square crop.
inline Image2D centered_square(const Image2D& img) {
    const int n = std::min(img.width(), img.height());
    return img.crop(Rect{(img.width() - n) / 2, (img.height() - n) / 2, n, n});
}

/// Ratio of summed mean annulus power, SR over LR, for annuli whose inner
/// radius is at least half the Nyquist radius (size / 4).
inline double high_frequency_ratio(const RadialSpectrum& sr, const RadialSpectrum& lr, int size) {
    const double cutoff = size / 4.0;
    double s = 0.0, l = 0.0;
    for (std::size_t i = 0; i < sr.bin.size(); ++i) {
        if (sr.bin[i] >= cutoff) s += sr.power[i];
    }
    for (std::size_t i = 0; i < lr.bin.size(); ++i) {
        if (lr.bin[i] >= cutoff) l += lr.power[i];
    }
    require(l > 0.0, ErrorCode::DegenerateImage, "LR spectrum has no high-frequency power");
    return s / l;
}

/// Bicubic-upscales lr onto sr's grid and compares radial spectra.
inline SpectraReport spectra_report(const Image2D& sr, const Image2D& lr, Window window = Window::none) {
    require(lr.width() > 0 && lr.height() > 0 && sr.width() % lr.width() == 0 && sr.height() % lr.height() == 0 &&
                sr.width() / lr.width() == sr.height() / lr.height() && sr.width() >= lr.width(),
            ErrorCode::IncompatibleShapes,
            "sr " + std::to_string(sr.width()) + "x" + std::to_string(sr.height()) + " is not an integer multiple of lr " +
                std::to_string(lr.width()) + "x" + std::to_string(lr.height()));
    SpectraReport rep;
    rep.upscale_factor = sr.width() / lr.width();
    const Image2D up = centered_square(bicubic_upscale(lr, rep.upscale_factor));
    const Image2D s = centered_square(sr);
    rep.size = s.width();
    rep.sr = azimuthal_average(power_spectrum_2d(s, window));
    rep.lr = azimuthal_average(power_spectrum_2d(up, window));
    rep.high_frequency_ratio = high_frequency_ratio(rep.sr, rep.lr, rep.size);
    return rep;
}

}  // namespace solarsr
