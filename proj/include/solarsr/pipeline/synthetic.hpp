#pragma once

// Synthetic observations with known geometry: a smooth random scene defined
// in LR pixel coordinates, sampled directly for LR frames and through a
// known HR -> LR similarity for HR frames.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "solarsr/image.hpp"
#include "solarsr/registration.hpp"
#include "solarsr/sr_engine.hpp"

namespace solarsr::synthetic {

struct SceneParams {
    int width = 128;      // LR frame size covered by the scene, plus margin
    int height = 128;
    int margin = 48;
    double blur_sigma = 1.6;  // in LR pixels
    double low = 1000.0;      // output intensity range
    double high = 3000.0;
    std::uint64_t seed = 1;
};

namespace detail {

inline std::vector<double> gaussian_kernel(double sigma) {
    const int r = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
    double s = 0.0;
    for (int i = -r; i <= r; ++i) s += k[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
    for (double& v : k) v /= s;
    return k;
}

inline Image2D blur(const Image2D& in, double sigma) {
    const auto k = gaussian_kernel(sigma);
    const int r = static_cast<int>(k.size() / 2);
    const int w = in.width(), h = in.height();
    Image2D tmp(w, h), out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -r; i <= r; ++i) acc += k[static_cast<std::size_t>(i + r)] * in.at(std::clamp(x + i, 0, w - 1), y);
            tmp.at(x, y) = acc;
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -r; i <= r; ++i) acc += k[static_cast<std::size_t>(i + r)] * tmp.at(x, std::clamp(y + i, 0, h - 1));
            out.at(x, y) = acc;
        }
    }
    return out;
}

}  // namespace detail

/// Blurred white noise on an integer grid, rescaled to [low, high], and
/// evaluated off-grid with bicubic interpolation. Scene coordinate (0, 0) is
/// LR pixel (0, 0).
class Scene {
public:
    explicit Scene(const SceneParams& p) : p_(p) {
        std::mt19937_64 rng(p.seed);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        Image2D noise(p.width + 2 * p.margin, p.height + 2 * p.margin);
        for (auto& v : noise.pixels()) v = u(rng);
        grid_ = detail::blur(noise, p.blur_sigma);
        const auto [lo, hi] = *grid_.valid_range();
        for (auto& v : grid_.pixels()) v = p.low + (p.high - p.low) * (v - lo) / (hi - lo);
    }

    [[nodiscard]] double operator()(double x, double y) const {
        return sample_bicubic(grid_, x + p_.margin, y + p_.margin);
    }

    [[nodiscard]] const SceneParams& params() const noexcept { return p_; }

private:
    SceneParams p_;
    Image2D grid_;
};

/// Gaussian noise source. Box-Muller over mt19937_64 so sequences do not
/// depend on the standard library's distribution implementation.
class Noise {
public:
    explicit Noise(std::uint64_t seed) : rng_(seed) {}
    double operator()(double sigma) {
        if (sigma == 0.0) return 0.0;
        const double u1 = (static_cast<double>(rng_() >> 11) + 0.5) * 0x1.0p-53;
        const double u2 = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
        return sigma * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

private:
    std::mt19937_64 rng_;
};

/// LR frame whose pixel (x, y) shows scene point (x + dx, y + dy).
inline Image2D render_lr(const Scene& scene, int width, int height, double dx, double dy, double noise_sigma, Noise& noise) {
    Image2D img(width, height);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) img.at(x, y) = scene(x + dx, y + dy) + noise(noise_sigma);
    }
    return img;
}

/// HR frame whose pixel p shows scene point hr_to_lr(p).
inline Image2D render_hr(const Scene& scene, int width, int height, const Transform& hr_to_lr, double noise_sigma,
                         Noise& noise) {
    Image2D img(width, height);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const auto [u, v] = hr_to_lr.apply(x, y);
            img.at(x, y) = scene(u, v) + noise(noise_sigma);
        }
    }
    return img;
}

/// HR -> LR map for an HR frame of the given size whose content is rotated
/// by `header_angle` degrees (the value its header would record), at
/// `ratio` HR pixels per LR pixel, with the HR center landing on LR point
/// (cx, cy).
inline Transform hr_geometry(int hr_width, int hr_height, double ratio, double header_angle, double cx, double cy) {
    const Transform lin{1.0 / ratio, -header_angle, 0.0, 0.0};
    const auto [ox, oy] = lin.apply((hr_width - 1) / 2.0, (hr_height - 1) / 2.0);
    return {lin.scale, lin.rotation, cx - ox, cy - oy};
}

/// Generator checkpoint close to nearest-neighbour upsampling: channel 0
/// carries the input through every conv, all other weights are small
/// seeded noise of magnitude `perturbation`.
inline Checkpoint near_identity_checkpoint(const GeneratorConfig& cfg, std::uint64_t seed, float perturbation = 1e-3f) {
    Checkpoint ckpt = make_random_checkpoint(cfg, seed, perturbation);
    auto pass_through = [&ckpt](const std::string& name) {
        auto& w = ckpt.get(name + ".weight");
        w.at(0, 0, 1, 1) += 1.0f;
    };
    pass_through("conv_first");
    for (int u = 1; u <= cfg.upsample_stages(); ++u) pass_through("conv_up" + std::to_string(u));
    pass_through("conv_hr");
    pass_through("conv_last");
    for (auto& v : ckpt.get("conv_body.weight").data()) v = 0.0f;
    return ckpt;
}

}  // namespace solarsr::synthetic
