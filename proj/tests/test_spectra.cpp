#include <complex>
#include <numbers>

#include <gtest/gtest.h>

#include "solarsr/spectra.hpp"
#include "support.hpp"

using namespace solarsr;

namespace {

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error raised";
    return ErrorCode::IoError;
}

// |sum_xy f(x, y) e^{-2 pi i (ux / W + vy / H)}|^2, unshifted.
double direct_power(const Image2D& img, int u, int v) {
    std::complex<long double> s = 0;
    const long double two_pi = 2 * std::numbers::pi_v<long double>;
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            const long double ph = -two_pi * (static_cast<long double>(u) * x / img.width() + static_cast<long double>(v) * y / img.height());
            s += static_cast<long double>(img.at(x, y)) * std::complex<long double>(std::cos(ph), std::sin(ph));
        }
    }
    return static_cast<double>(std::norm(s));
}

Image2D cosine(int n, int kx, int ky) {
    Image2D img(n, n);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) img.at(x, y) = 10.0 + std::cos(2 * std::numbers::pi * (kx * x + ky * y) / n);
    return img;
}

}  // namespace

TEST(PowerSpectrum, MatchesDirectDftWithCenteredOrigin) {
    for (auto [w, h] : {std::pair{12, 10}, std::pair{9, 7}, std::pair{16, 16}}) {
        const Image2D img = fixtures::random_image(w, h, static_cast<std::uint64_t>(w * h));
        const auto ps = power_spectrum_2d(img);
        ASSERT_EQ(ps.width, w);
        ASSERT_EQ(ps.height, h);
        double peak = 0;
        for (double p : ps.power) peak = std::max(peak, p);
        for (int v = 0; v < h; ++v) {
            for (int u = 0; u < w; ++u) {
                const int sx = (u + w / 2) % w, sy = (v + h / 2) % h;
                EXPECT_NEAR(ps.at(sx, sy), direct_power(img, u, v), 1e-10 * peak);
            }
        }
    }
}

TEST(PowerSpectrum, Parseval) {
    const Image2D img = fixtures::texture(40, 24, 5);
    for (Window win : {Window::none, Window::hann}) {
        const auto ps = power_spectrum_2d(img, win);
        const auto wx = detail::hann(40), wy = detail::hann(24);
        double energy = 0;
        for (int y = 0; y < 24; ++y) {
            for (int x = 0; x < 40; ++x) {
                const double v = img.at(x, y) * (win == Window::hann ? wx[x] * wy[y] : 1.0);
                energy += v * v;
            }
        }
        EXPECT_NEAR(ps.total(), 40.0 * 24.0 * energy, 1e-10 * ps.total());
    }
}

TEST(RadialSpectrum, CosinePeaksAtItsFrequency) {
    for (auto [kx, ky] : {std::pair{8, 0}, std::pair{0, 13}, std::pair{6, 8}}) {
        const auto r = azimuthal_average(power_spectrum_2d(cosine(64, kx, ky)));
        const int k = static_cast<int>(std::floor(std::hypot(kx, ky)));
        std::size_t best = 1;
        for (std::size_t i = 1; i < r.power.size(); ++i) {
            if (r.power[i] > r.power[best]) best = i;
        }
        EXPECT_EQ(r.bin[best], k);
        EXPECT_DOUBLE_EQ(r.bin_center[best], k + 0.5);
        double rest = 0;
        for (std::size_t i = 1; i < r.power.size(); ++i) {
            if (i != best) rest += r.power[i];
        }
        EXPECT_LT(rest, 1e-12 * r.power[best]);
    }
}

TEST(RadialSpectrum, CountsCoverEveryPixel) {
    const auto r = azimuthal_average(power_spectrum_2d(fixtures::random_image(33, 20, 2)));
    std::size_t total = 0;
    for (std::size_t i = 0; i < r.bin.size(); ++i) {
        total += r.counts[i];
        if (i > 0) {
            EXPECT_GT(r.bin[i], r.bin[i - 1]);
        }
    }
    EXPECT_EQ(total, 33u * 20u);
    EXPECT_EQ(r.bin[0], 0);
    EXPECT_EQ(r.counts[0], 1u);
}

TEST(SpectraReport, UpscaledLrHasUnitRatio) {
    const Image2D lr = fixtures::texture(32, 32, 8);
    for (int f : {2, 4}) {
        const auto rep = spectra_report(bicubic_upscale(lr, f), lr);
        EXPECT_EQ(rep.upscale_factor, f);
        EXPECT_EQ(rep.size, 32 * f);
        EXPECT_DOUBLE_EQ(rep.high_frequency_ratio, 1.0);
        EXPECT_EQ(rep.sr.power, rep.lr.power);
    }
}

TEST(SpectraReport, AddedTextureRaisesRatio) {
    const Image2D lr = fixtures::texture(32, 32, 8);
    Image2D sr = bicubic_upscale(lr, 2);
    const auto [lo, hi] = *lr.valid_range();
    const double amp = 0.05 * (hi - lo);
    const Image2D fine = fixtures::random_image(64, 64, 99, -amp, amp);
    for (std::size_t i = 0; i < sr.size(); ++i) sr.pixels()[i] += fine.pixels()[i];
    EXPECT_GT(spectra_report(sr, lr).high_frequency_ratio, 1.0);
    EXPECT_GT(spectra_report(sr, lr, Window::hann).high_frequency_ratio, 1.0);
}

TEST(SpectraReport, NonSquareUsesCenteredSquare) {
    const Image2D lr = fixtures::texture(20, 12, 3);
    const auto rep = spectra_report(bicubic_upscale(lr, 2), lr);
    EXPECT_EQ(rep.size, 24);
    const Image2D sq = centered_square(Image2D(7, 4));
    EXPECT_EQ(sq.width(), 4);
    EXPECT_EQ(sq.height(), 4);
}

TEST(SpectraReport, Errors) {
    const Image2D lr = fixtures::texture(16, 16, 1);
    EXPECT_EQ(code_of([&] { spectra_report(Image2D(33, 33), lr); }), ErrorCode::IncompatibleShapes);
    EXPECT_EQ(code_of([&] { spectra_report(Image2D(32, 48), lr); }), ErrorCode::IncompatibleShapes);
    Image2D holed = bicubic_upscale(lr, 2);
    holed.set_valid(3, 3, false);
    EXPECT_EQ(code_of([&] { spectra_report(holed, lr); }), ErrorCode::InvalidRegionPresent);
    EXPECT_EQ(code_of([] { power_spectrum_2d(Image2D(3, 8)); }), ErrorCode::InvalidArgument);
    EXPECT_EQ(code_of([] { spectra_report(Image2D(32, 32, 1.0), Image2D(16, 16, 1.0)); }), ErrorCode::DegenerateImage);
}
