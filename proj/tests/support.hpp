#pragma once

// Seeded fixtures shared by unit tests and the acceptance binary.

#include <cmath>
#include <random>
#include <vector>

#include "solarsr/image.hpp"
#include "solarsr/pipeline/synthetic.hpp"
#include "solarsr/registration.hpp"

namespace solarsr::fixtures {

inline Image2D texture(int w, int h, std::uint64_t seed) {
    synthetic::SceneParams p;
    p.width = w;
    p.height = h;
    p.margin = 8;
    p.blur_sigma = 1.2;
    p.seed = seed;
    const synthetic::Scene s(p);
    synthetic::Noise noise(seed + 1);
    return synthetic::render_lr(s, w, h, 0, 0, 0.0, noise);
}

inline Image2D random_image(int w, int h, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    Image2D img(w, h);
    for (auto& v : img.pixels()) v = u(rng);
    return img;
}

struct JitterSequence {
    std::vector<Image2D> frames;
    std::vector<std::pair<int, int>> offsets;  // scene offset of each frame
};

/// Frames of one scene under integer pointing jitter in [-amp, amp].
inline JitterSequence jitter_sequence(int frames, int size, int amp, std::uint64_t seed, double noise_sigma = 10.0) {
    synthetic::SceneParams p;
    p.width = size;
    p.height = size;
    p.seed = seed;
    const synthetic::Scene scene(p);
    synthetic::Noise noise(seed + 17);
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> j(-amp, amp);
    JitterSequence out;
    for (int i = 0; i < frames; ++i) {
        const int dx = j(rng), dy = j(rng);
        out.frames.push_back(synthetic::render_lr(scene, size, size, dx, dy, noise_sigma, noise));
        out.offsets.emplace_back(dx, dy);
    }
    return out;
}

/// One LR/HR co-alignment trial with a known HR -> LR similarity: plate
/// scale ratio within 10% of nominal, header rotation within 15 degrees
/// (the header itself is off by up to 1.5 degrees), translation within
/// 20 LR pixels, Gaussian noise at 5% of the dynamic range.
struct CoalignTrial {
    Image2D lr, hr;
    fits::ObsMetadata lr_meta, hr_meta;
    Transform truth;
    int hr_size = 0;
};

inline CoalignTrial coalign_trial(int t, int hr_size = 2400) {
    std::mt19937_64 rng(1000 + static_cast<std::uint64_t>(t));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    synthetic::SceneParams sp;
    sp.seed = 77 + static_cast<std::uint64_t>(t);
    const synthetic::Scene scene(sp);
    const double ratio = (1.0 / fits::kNominalPlateScaleGst) * (1.0 + 0.1 * u(rng));
    const double angle = 15.0 * u(rng);
    const double header_error = 1.5 * u(rng);
    const double tx = 20.0 * u(rng), ty = 20.0 * u(rng);

    CoalignTrial c;
    c.hr_size = hr_size;
    c.truth = synthetic::hr_geometry(hr_size, hr_size, ratio, angle, 64 + tx, 64 + ty);
    synthetic::Noise noise(5000 + static_cast<std::uint64_t>(t));
    const double sigma = 0.05 * (sp.high - sp.low);
    c.lr = synthetic::render_lr(scene, 128, 128, 0, 0, sigma, noise);
    c.hr = synthetic::render_hr(scene, hr_size, hr_size, c.truth, sigma, noise);
    c.lr_meta.plate_scale = fits::kNominalPlateScaleGong;
    c.hr_meta.plate_scale = fits::kNominalPlateScaleGst;
    c.hr_meta.rotation_angle = angle + header_error;
    c.hr_meta.source = fits::Source::HR_GST;
    return c;
}

struct TrialError {
    double rotation_deg;
    double translation_px;  // LR pixels, at the HR frame center
};

inline TrialError trial_error(const CoalignTrial& c, const Transform& estimate) {
    const double m = (c.hr_size - 1) / 2.0;
    const auto [ex, ey] = c.truth.apply(m, m);
    const auto [gx, gy] = estimate.apply(m, m);
    return {std::abs(std::remainder(estimate.rotation - c.truth.rotation, 360.0)), std::hypot(ex - gx, ey - gy)};
}

}  // namespace solarsr::fixtures
