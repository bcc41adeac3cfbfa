#pragma once

// Scale-invariant feature transform: difference-of-Gaussians extrema with
// sub-pixel refinement, gradient-orientation assignment and 4x4x8 gradient
// histogram descriptors, plus ratio-test matching with a mutual cross-check.
//
// Invalid pixels (validity mask false) are filled with the valid mean before
// filtering; keypoints and gradient samples whose blurred support reaches an
// invalid pixel are discarded.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <vector>

#include "solarsr/error.hpp"
#include "solarsr/image.hpp"

namespace solarsr::sift {

inline constexpr int kDescriptorWidth = 4;
inline constexpr int kDescriptorBins = 8;
inline constexpr int kDescriptorLength = kDescriptorWidth * kDescriptorWidth * kDescriptorBins;

using Descriptor = std::array<float, kDescriptorLength>;

struct Keypoint {
    double x = 0.0;            // input-image pixel coordinates
    double y = 0.0;
    double scale = 0.0;        // Gaussian sigma in input pixels
    double orientation = 0.0;  // radians, image axes (y down)
    Descriptor descriptor{};
};

struct Match {
    Keypoint a;
    Keypoint b;
    double distance = 0.0;
};

struct SiftParams {
    int octaves = 4;
    int scales_per_octave = 3;
    double sigma = 1.6;
    double assumed_blur = 0.5;
    /// Applied as |D(x)| * scales_per_octave >= contrast_threshold on [0,1] images.
    double contrast_threshold = 0.03;
    double edge_ratio = 10.0;
    bool upsample_first_octave = true;
};

namespace detail {

struct Plane {
    int width = 0;
    int height = 0;
    std::vector<float> data;

    Plane() = default;
    Plane(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0.0f) {}
    float& operator()(int x, int y) { return data[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)]; }
    float operator()(int x, int y) const { return data[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)]; }
};

inline int reflect101(int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
    }
    return i;
}

inline Plane gaussian_blur(const Plane& in, double sigma) {
    if (sigma <= 0.0) return in;
    const int radius = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
    std::vector<float> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * i * i / (sigma * sigma));
        k[static_cast<std::size_t>(i + radius)] = static_cast<float>(v);
        sum += v;
    }
    for (auto& v : k) v = static_cast<float>(v / sum);

    Plane tmp(in.width, in.height);
    for (int y = 0; y < in.height; ++y) {
        for (int x = 0; x < in.width; ++x) {
            float acc = 0.0f;
            for (int i = -radius; i <= radius; ++i) acc += k[static_cast<std::size_t>(i + radius)] * in(reflect101(x + i, in.width), y);
            tmp(x, y) = acc;
        }
    }
    Plane out(in.width, in.height);
    for (int y = 0; y < in.height; ++y) {
        for (int x = 0; x < in.width; ++x) {
            float acc = 0.0f;
            for (int i = -radius; i <= radius; ++i) acc += k[static_cast<std::size_t>(i + radius)] * tmp(x, reflect101(y + i, in.height));
            out(x, y) = acc;
        }
    }
    return out;
}

// Chessboard distance from each pixel to the nearest invalid pixel; a large
// value when the mask is all valid.
inline std::vector<float> distance_to_invalid(const Image2D& img) {
    const int w = img.width();
    const int h = img.height();
    constexpr float inf = 1e9f;
    std::vector<float> d(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), inf);
    auto at = [&](int x, int y) -> float& { return d[static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)]; };
    if (img.all_valid()) return d;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!img.valid(x, y)) {
                at(x, y) = 0.0f;
                continue;
            }
            float best = at(x, y);
            if (x > 0) best = std::min(best, at(x - 1, y) + 1.0f);
            if (y > 0) {
                best = std::min(best, at(x, y - 1) + 1.0f);
                if (x > 0) best = std::min(best, at(x - 1, y - 1) + 1.0f);
                if (x + 1 < w) best = std::min(best, at(x + 1, y - 1) + 1.0f);
            }
            at(x, y) = best;
        }
    }
    for (int y = h - 1; y >= 0; --y) {
        for (int x = w - 1; x >= 0; --x) {
            float best = at(x, y);
            if (x + 1 < w) best = std::min(best, at(x + 1, y) + 1.0f);
            if (y + 1 < h) {
                best = std::min(best, at(x, y + 1) + 1.0f);
                if (x + 1 < w) best = std::min(best, at(x + 1, y + 1) + 1.0f);
                if (x > 0) best = std::min(best, at(x - 1, y + 1) + 1.0f);
            }
            at(x, y) = best;
        }
    }
    return d;
}

class Pyramid {
public:
    Pyramid(const Image2D& img, const SiftParams& p) : params_(p) {
        const auto range = img.valid_range();
        require(range.has_value(), ErrorCode::EmptyValidRegion, "image has no valid pixels");
        const double lo = range->first;
        const double span = range->second > range->first ? range->second - range->first : 1.0;
        double mean = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < img.size(); ++i) {
            if (img.mask()[i]) {
                mean += (img.pixels()[i] - lo) / span;
                ++n;
            }
        }
        mean /= static_cast<double>(n);

        Plane base(img.width(), img.height());
        for (int y = 0; y < img.height(); ++y) {
            for (int x = 0; x < img.width(); ++x) {
                base(x, y) = static_cast<float>(img.valid(x, y) ? (img.at(x, y) - lo) / span : mean);
            }
        }
        distance_ = distance_to_invalid(img);
        has_invalid_ = !img.all_valid();
        in_width_ = img.width();
        in_height_ = img.height();

        upscale_ = p.upsample_first_octave ? 2.0 : 1.0;
        double blur_have = p.assumed_blur;
        if (p.upsample_first_octave) {
            Plane up(base.width * 2, base.height * 2);
            for (int y = 0; y < up.height; ++y) {
                const double sy = std::min(y * 0.5, base.height - 1.0);
                const int y0 = static_cast<int>(sy);
                const int y1 = std::min(y0 + 1, base.height - 1);
                const float fy = static_cast<float>(sy - y0);
                for (int x = 0; x < up.width; ++x) {
                    const double sx = std::min(x * 0.5, base.width - 1.0);
                    const int x0 = static_cast<int>(sx);
                    const int x1 = std::min(x0 + 1, base.width - 1);
                    const float fx = static_cast<float>(sx - x0);
                    const float top = base(x0, y0) * (1 - fx) + base(x1, y0) * fx;
                    const float bot = base(x0, y1) * (1 - fx) + base(x1, y1) * fx;
                    up(x, y) = top * (1 - fy) + bot * fy;
                }
            }
            base = std::move(up);
            blur_have *= 2.0;
        }
        const double first_blur = std::sqrt(std::max(p.sigma * p.sigma - blur_have * blur_have, 0.01));
        base = gaussian_blur(base, first_blur);

        const int s = p.scales_per_octave;
        const double k = std::pow(2.0, 1.0 / s);
        std::vector<double> incremental(static_cast<std::size_t>(s + 3));
        incremental[0] = p.sigma;
        for (int i = 1; i < s + 3; ++i) {
            const double prev = std::pow(k, i - 1) * p.sigma;
            const double total = prev * k;
            incremental[static_cast<std::size_t>(i)] = std::sqrt(total * total - prev * prev);
        }

        const int min_side = std::min(base.width, base.height);
        const int max_octaves = std::max(1, static_cast<int>(std::floor(std::log2(min_side / 8.0))) + 1);
        const int octaves = std::min(p.octaves, max_octaves);
        for (int o = 0; o < octaves; ++o) {
            std::vector<Plane> g(static_cast<std::size_t>(s + 3));
            if (o == 0) {
                g[0] = base;
            } else {
                const Plane& src = gaussians_[static_cast<std::size_t>(o - 1)][static_cast<std::size_t>(s)];
                Plane half(src.width / 2, src.height / 2);
                for (int y = 0; y < half.height; ++y) {
                    for (int x = 0; x < half.width; ++x) half(x, y) = src(2 * x, 2 * y);
                }
                g[0] = std::move(half);
            }
            for (int i = 1; i < s + 3; ++i) g[static_cast<std::size_t>(i)] = gaussian_blur(g[static_cast<std::size_t>(i - 1)], incremental[static_cast<std::size_t>(i)]);
            std::vector<Plane> d(static_cast<std::size_t>(s + 2));
            for (int i = 0; i < s + 2; ++i) {
                Plane diff(g[0].width, g[0].height);
                const auto& a = g[static_cast<std::size_t>(i + 1)].data;
                const auto& b = g[static_cast<std::size_t>(i)].data;
                for (std::size_t j = 0; j < diff.data.size(); ++j) diff.data[j] = a[j] - b[j];
                d[static_cast<std::size_t>(i)] = std::move(diff);
            }
            gaussians_.push_back(std::move(g));
            dogs_.push_back(std::move(d));
        }
    }

    [[nodiscard]] int octaves() const { return static_cast<int>(gaussians_.size()); }
    [[nodiscard]] const Plane& gaussian(int o, int i) const { return gaussians_[static_cast<std::size_t>(o)][static_cast<std::size_t>(i)]; }
    [[nodiscard]] const Plane& dog(int o, int i) const { return dogs_[static_cast<std::size_t>(o)][static_cast<std::size_t>(i)]; }
    [[nodiscard]] double octave_to_input(int o) const { return std::ldexp(1.0, o) / upscale_; }

    /// True when the Gaussian support (about 2 sigma plus the gradient
    /// stencil) around octave pixel (x, y) at blur sigma_octave contains
    /// no invalid input pixel.
    [[nodiscard]] bool trusted(int o, double sigma_octave, double x, double y) const {
        const double f = octave_to_input(o);
        const int ix = static_cast<int>(std::lround(x * f));
        const int iy = static_cast<int>(std::lround(y * f));
        if (ix < 0 || iy < 0 || ix >= in_width_ || iy >= in_height_) return false;
        const float dist = distance_[static_cast<std::size_t>(iy) * static_cast<std::size_t>(in_width_) + static_cast<std::size_t>(ix)];
        return dist > 2.0 * sigma_octave * f + 2.0 * f + 1.0;
    }

    [[nodiscard]] bool has_invalid() const noexcept { return has_invalid_; }

    [[nodiscard]] const SiftParams& params() const { return params_; }

private:
    SiftParams params_;
    double upscale_ = 1.0;
    int in_width_ = 0;
    int in_height_ = 0;
    bool has_invalid_ = false;
    std::vector<float> distance_;
    std::vector<std::vector<Plane>> gaussians_;
    std::vector<std::vector<Plane>> dogs_;
};

inline constexpr int kImageBorder = 5;
inline constexpr int kMaxInterpSteps = 5;
inline constexpr int kOrientationBins = 36;
inline constexpr double kOrientationSigmaFactor = 1.5;
inline constexpr double kOrientationRadiusFactor = 3.0 * kOrientationSigmaFactor;
inline constexpr double kOrientationPeakRatio = 0.8;
inline constexpr double kDescriptorScaleFactor = 3.0;
inline constexpr double kDescriptorMagnitudeClip = 0.2;

struct Extremum {
    int octave;
    int layer;
    int x;
    int y;
    double offset_x;
    double offset_y;
    double offset_layer;
    double response;
};

inline bool is_extremum(const Pyramid& pyr, int o, int i, int x, int y) {
    const float v = pyr.dog(o, i)(x, y);
    const bool maxima = v > 0;
    for (int di = -1; di <= 1; ++di) {
        const Plane& p = pyr.dog(o, i + di);
        for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
                if (di == 0 && dx == 0 && dy == 0) continue;
                const float n = p(x + dx, y + dy);
                if (maxima ? n > v : n < v) return false;
            }
        }
    }
    return true;
}

// Quadratic refinement in (x, y, layer); rejects low-contrast and edge
// responses.
inline bool refine(const Pyramid& pyr, Extremum& e) {
    const auto& prm = pyr.params();
    const int s = prm.scales_per_octave;
    int x = e.x, y = e.y, layer = e.layer;
    double ox = 0, oy = 0, ol = 0;
    double dD[3] = {0, 0, 0};
    int step = 0;
    for (; step < kMaxInterpSteps; ++step) {
        const Plane& cur = pyr.dog(e.octave, layer);
        const Plane& prev = pyr.dog(e.octave, layer - 1);
        const Plane& next = pyr.dog(e.octave, layer + 1);
        const double v2 = 2.0 * cur(x, y);
        dD[0] = 0.5 * (cur(x + 1, y) - cur(x - 1, y));
        dD[1] = 0.5 * (cur(x, y + 1) - cur(x, y - 1));
        dD[2] = 0.5 * (next(x, y) - prev(x, y));
        const double dxx = cur(x + 1, y) + cur(x - 1, y) - v2;
        const double dyy = cur(x, y + 1) + cur(x, y - 1) - v2;
        const double dss = next(x, y) + prev(x, y) - v2;
        const double dxy = 0.25 * (cur(x + 1, y + 1) - cur(x - 1, y + 1) - cur(x + 1, y - 1) + cur(x - 1, y - 1));
        const double dxs = 0.25 * (next(x + 1, y) - next(x - 1, y) - prev(x + 1, y) + prev(x - 1, y));
        const double dys = 0.25 * (next(x, y + 1) - next(x, y - 1) - prev(x, y + 1) + prev(x, y - 1));
        // Solve H * X = -dD by Cramer's rule.
        const double h[3][3] = {{dxx, dxy, dxs}, {dxy, dyy, dys}, {dxs, dys, dss}};
        const double det = h[0][0] * (h[1][1] * h[2][2] - h[1][2] * h[2][1]) -
                           h[0][1] * (h[1][0] * h[2][2] - h[1][2] * h[2][0]) +
                           h[0][2] * (h[1][0] * h[2][1] - h[1][1] * h[2][0]);
        if (std::abs(det) < 1e-15) return false;
        double sol[3];
        for (int c = 0; c < 3; ++c) {
            double m[3][3];
            for (int r = 0; r < 3; ++r) {
                for (int k = 0; k < 3; ++k) m[r][k] = (k == c) ? -dD[r] : h[r][k];
            }
            sol[c] = (m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                      m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                      m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])) / det;
        }
        ox = sol[0];
        oy = sol[1];
        ol = sol[2];
        if (std::abs(ox) < 0.5 && std::abs(oy) < 0.5 && std::abs(ol) < 0.5) break;
        if (std::abs(ox) > 1e6 || std::abs(oy) > 1e6 || std::abs(ol) > 1e6) return false;
        x += static_cast<int>(std::lround(ox));
        y += static_cast<int>(std::lround(oy));
        layer += static_cast<int>(std::lround(ol));
        if (layer < 1 || layer > s || x < kImageBorder || x >= cur.width - kImageBorder || y < kImageBorder ||
            y >= cur.height - kImageBorder) {
            return false;
        }
    }
    if (step >= kMaxInterpSteps) return false;

    const Plane& cur = pyr.dog(e.octave, layer);
    const double contrast = cur(x, y) + 0.5 * (dD[0] * ox + dD[1] * oy + dD[2] * ol);
    if (std::abs(contrast) * s < prm.contrast_threshold) return false;

    const double v2 = 2.0 * cur(x, y);
    const double dxx = cur(x + 1, y) + cur(x - 1, y) - v2;
    const double dyy = cur(x, y + 1) + cur(x, y - 1) - v2;
    const double dxy = 0.25 * (cur(x + 1, y + 1) - cur(x - 1, y + 1) - cur(x + 1, y - 1) + cur(x - 1, y - 1));
    const double tr = dxx + dyy;
    const double det = dxx * dyy - dxy * dxy;
    if (det <= 0 || tr * tr * prm.edge_ratio >= (prm.edge_ratio + 1) * (prm.edge_ratio + 1) * det) return false;

    e.x = x;
    e.y = y;
    e.layer = layer;
    e.offset_x = ox;
    e.offset_y = oy;
    e.offset_layer = ol;
    e.response = std::abs(contrast);
    return true;
}

inline bool gradient(const Pyramid& pyr, const Plane& img, int o, double sigma_octave, int x, int y, double& mag,
                     double& angle) {
    if (x <= 0 || y <= 0 || x >= img.width - 1 || y >= img.height - 1) return false;
    if (pyr.has_invalid() && !pyr.trusted(o, sigma_octave, x, y)) return false;
    const double gx = static_cast<double>(img(x + 1, y)) - img(x - 1, y);
    const double gy = static_cast<double>(img(x, y + 1)) - img(x, y - 1);
    mag = std::sqrt(gx * gx + gy * gy);
    angle = std::atan2(gy, gx);
    return true;
}

inline std::vector<double> orientations(const Pyramid& pyr, const Extremum& e, double sigma_octave) {
    const Plane& img = pyr.gaussian(e.octave, e.layer);
    const double weight_sigma = kOrientationSigmaFactor * sigma_octave;
    const int radius = static_cast<int>(std::lround(kOrientationRadiusFactor * sigma_octave));
    std::array<double, kOrientationBins> hist{};
    for (int i = -radius; i <= radius; ++i) {
        for (int j = -radius; j <= radius; ++j) {
            double mag = 0, ang = 0;
            if (!gradient(pyr, img, e.octave, sigma_octave, e.x + j, e.y + i, mag, ang)) continue;
            const double w = std::exp(-(i * i + j * j) / (2.0 * weight_sigma * weight_sigma));
            int bin = static_cast<int>(std::lround(kOrientationBins * ang / (2.0 * std::numbers::pi)));
            bin = ((bin % kOrientationBins) + kOrientationBins) % kOrientationBins;
            hist[static_cast<std::size_t>(bin)] += w * mag;
        }
    }
    std::array<double, kOrientationBins> smooth{};
    for (int b = 0; b < kOrientationBins; ++b) {
        auto h = [&](int k) { return hist[static_cast<std::size_t>(((b + k) % kOrientationBins + kOrientationBins) % kOrientationBins)]; };
        smooth[static_cast<std::size_t>(b)] = (h(-2) + h(2)) / 16.0 + (h(-1) + h(1)) * 4.0 / 16.0 + h(0) * 6.0 / 16.0;
    }
    const double peak = *std::max_element(smooth.begin(), smooth.end());
    std::vector<double> out;
    if (peak <= 0.0) return out;
    for (int b = 0; b < kOrientationBins; ++b) {
        const double l = smooth[static_cast<std::size_t>((b + kOrientationBins - 1) % kOrientationBins)];
        const double c = smooth[static_cast<std::size_t>(b)];
        const double r = smooth[static_cast<std::size_t>((b + 1) % kOrientationBins)];
        if (c > l && c > r && c >= kOrientationPeakRatio * peak) {
            double bin = b + 0.5 * (l - r) / (l - 2.0 * c + r);
            if (bin < 0) bin += kOrientationBins;
            if (bin >= kOrientationBins) bin -= kOrientationBins;
            out.push_back(bin * 2.0 * std::numbers::pi / kOrientationBins);
        }
    }
    return out;
}

inline bool describe(const Pyramid& pyr, const Extremum& e, double sigma_octave, double orientation, Descriptor& out) {
    const Plane& img = pyr.gaussian(e.octave, e.layer);
    constexpr int d = kDescriptorWidth;
    constexpr int n = kDescriptorBins;
    const double hist_width = kDescriptorScaleFactor * sigma_octave;
    const int radius = static_cast<int>(std::lround(hist_width * std::numbers::sqrt2 * (d + 1) * 0.5));
    const double cos_t = std::cos(orientation) / hist_width;
    const double sin_t = std::sin(orientation) / hist_width;
    const double exp_scale = -1.0 / (d * d * 0.5);
    const double bins_per_rad = n / (2.0 * std::numbers::pi);

    std::vector<double> hist(static_cast<std::size_t>((d + 2) * (d + 2) * (n + 2)), 0.0);
    auto cell = [&](int r, int c, int o) -> double& {
        return hist[static_cast<std::size_t>(((r + 1) * (d + 2) + (c + 1)) * (n + 2) + o)];
    };
    int samples = 0;
    for (int i = -radius; i <= radius; ++i) {
        for (int j = -radius; j <= radius; ++j) {
            // Offset expressed in the keypoint's rotated frame, in cell units.
            const double c_rot = j * cos_t + i * sin_t;
            const double r_rot = -j * sin_t + i * cos_t;
            const double rbin = r_rot + d / 2.0 - 0.5;
            const double cbin = c_rot + d / 2.0 - 0.5;
            if (rbin <= -1 || rbin >= d || cbin <= -1 || cbin >= d) continue;
            double mag = 0, ang = 0;
            if (!gradient(pyr, img, e.octave, sigma_octave, e.x + j, e.y + i, mag, ang)) continue;
            ++samples;
            double obin = (ang - orientation) * bins_per_rad;
            obin = std::fmod(obin, static_cast<double>(n));
            if (obin < 0) obin += n;
            const double w = mag * std::exp((c_rot * c_rot + r_rot * r_rot) * exp_scale);
            const int r0 = static_cast<int>(std::floor(rbin));
            const int c0 = static_cast<int>(std::floor(cbin));
            int o0 = static_cast<int>(std::floor(obin));
            const double fr = rbin - r0, fc = cbin - c0, fo = obin - o0;
            o0 %= n;
            for (int dr = 0; dr <= 1; ++dr) {
                const double wr = dr ? fr : 1 - fr;
                for (int dc = 0; dc <= 1; ++dc) {
                    const double wc = dc ? fc : 1 - fc;
                    for (int dob = 0; dob <= 1; ++dob) {
                        const double wo = dob ? fo : 1 - fo;
                        cell(r0 + dr, c0 + dc, (o0 + dob) % n) += w * wr * wc * wo;
                    }
                }
            }
        }
    }
    if (samples == 0) return false;
    std::array<double, kDescriptorLength> v{};
    for (int r = 0; r < d; ++r) {
        for (int c = 0; c < d; ++c) {
            for (int o = 0; o < n; ++o) v[static_cast<std::size_t>((r * d + c) * n + o)] = cell(r, c, o);
        }
    }
    auto normalize = [&v]() {
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        if (norm <= 0.0) return false;
        for (double& x : v) x /= norm;
        return true;
    };
    if (!normalize()) return false;
    for (double& x : v) x = std::min(x, kDescriptorMagnitudeClip);
    if (!normalize()) return false;
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i]);
    // Renormalize in float so the stored vector has unit norm to float precision.
    double norm = 0.0;
    for (float x : out) norm += static_cast<double>(x) * x;
    norm = std::sqrt(norm);
    for (float& x : out) x = static_cast<float>(x / norm);
    return true;
}

}  // namespace detail

/// Detects keypoints and computes descriptors. Coordinates and scales are
/// reported in the input image's pixel frame.
inline std::vector<Keypoint> detect_keypoints(const Image2D& img, const SiftParams& params = {}) {
    require(params.octaves >= 1 && params.scales_per_octave >= 1, ErrorCode::InvalidArgument, "invalid SIFT parameters");
    const detail::Pyramid pyr(img, params);
    const int s = params.scales_per_octave;
    const float prelim = static_cast<float>(0.5 * params.contrast_threshold / s);
    std::vector<Keypoint> keypoints;
    for (int o = 0; o < pyr.octaves(); ++o) {
        for (int i = 1; i <= s; ++i) {
            const detail::Plane& cur = pyr.dog(o, i);
            for (int y = detail::kImageBorder; y < cur.height - detail::kImageBorder; ++y) {
                for (int x = detail::kImageBorder; x < cur.width - detail::kImageBorder; ++x) {
                    if (std::abs(cur(x, y)) <= prelim) continue;
                    if (!detail::is_extremum(pyr, o, i, x, y)) continue;
                    detail::Extremum e{o, i, x, y, 0, 0, 0, 0};
                    if (!detail::refine(pyr, e)) continue;
                    const double sigma_octave = params.sigma * std::pow(2.0, (e.layer + e.offset_layer) / s);
                    if (pyr.has_invalid() && !pyr.trusted(o, sigma_octave, e.x, e.y)) continue;
                    const double f = pyr.octave_to_input(o);
                    for (double ori : detail::orientations(pyr, e, sigma_octave)) {
                        Keypoint kp;
                        kp.x = (e.x + e.offset_x) * f;
                        kp.y = (e.y + e.offset_y) * f;
                        kp.scale = sigma_octave * f;
                        kp.orientation = ori;
                        if (kp.x < 0 || kp.y < 0 || kp.x > img.width() - 1 || kp.y > img.height() - 1) continue;
                        if (!detail::describe(pyr, e, sigma_octave, ori, kp.descriptor)) continue;
                        keypoints.push_back(kp);
                    }
                }
            }
        }
    }
    return keypoints;
}

inline double descriptor_distance_sq(const Descriptor& a, const Descriptor& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - b[i];
        acc += d * d;
    }
    return acc;
}

/// Nearest-neighbour matching with Lowe's ratio test (a -> b) and a mutual
/// nearest-neighbour cross-check (b -> a).
inline std::vector<Match> match_keypoints(const std::vector<Keypoint>& a, const std::vector<Keypoint>& b, double ratio) {
    std::vector<Match> matches;
    if (a.empty() || b.size() < 2) return matches;
    std::vector<std::size_t> best_for_b(b.size(), 0);
    std::vector<double> best_dist_b(b.size(), std::numeric_limits<double>::infinity());
    std::vector<std::size_t> nn(a.size());
    std::vector<double> d1(a.size()), d2(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        double best = std::numeric_limits<double>::infinity(), second = best;
        std::size_t arg = 0;
        for (std::size_t j = 0; j < b.size(); ++j) {
            const double d = descriptor_distance_sq(a[i].descriptor, b[j].descriptor);
            if (d < best) {
                second = best;
                best = d;
                arg = j;
            } else if (d < second) {
                second = d;
            }
            if (d < best_dist_b[j]) {
                best_dist_b[j] = d;
                best_for_b[j] = i;
            }
        }
        nn[i] = arg;
        d1[i] = best;
        d2[i] = second;
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!(std::sqrt(d1[i]) < ratio * std::sqrt(d2[i]))) continue;
        if (best_for_b[nn[i]] != i) continue;
        matches.push_back({a[i], b[nn[i]], std::sqrt(d1[i])});
    }
    return matches;
}

inline constexpr std::size_t kMinMatches = 4;
inline constexpr std::size_t kMinValidArea = 64 * 64;

/// Detects keypoints in both images and returns filtered correspondences.
inline std::vector<Match> detect_and_match(const Image2D& a, const Image2D& b, double ratio = 0.75,
                                           const SiftParams& params = {}) {
    require(a.valid_count() >= kMinValidArea && b.valid_count() >= kMinValidArea, ErrorCode::InvalidArgument,
            "feature matching needs at least 64x64 valid pixels per image");
    const auto ka = detect_keypoints(a, params);
    const auto kb = detect_keypoints(b, params);
    auto matches = match_keypoints(ka, kb, ratio);
    require(matches.size() >= kMinMatches, ErrorCode::TooFewKeypoints,
            std::to_string(matches.size()) + " matches after filtering (" + std::to_string(ka.size()) + " / " +
                std::to_string(kb.size()) + " keypoints)");
    return matches;
}

}  // namespace solarsr::sift
