#pragma once

// Two-stage alignment: integer-pixel temporal self-alignment of the LR
// sequence, then geometric co-alignment of each HR frame onto its LR frame.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <stack>
#include <string>
#include <utility>
#include <vector>

#include "solarsr/error.hpp"
#include "solarsr/fft.hpp"
#include "solarsr/fits_io.hpp"
#include "solarsr/image.hpp"
#include "solarsr/sift.hpp"

namespace solarsr {

inline constexpr int kDefaultMaxShift = 30;

/// Integer displacement of a moving frame relative to a reference:
/// moving(x + dx, y + dy) ~ reference(x, y).
struct Shift {
    int dx = 0;
    int dy = 0;
    double score = 1.0;
    friend bool operator==(const Shift&, const Shift&) = default;
};

enum class ShiftSearch { fft, exhaustive };

namespace detail {

inline constexpr double kTieTolerance = 1e-9;
inline constexpr double kDegenerateRelVariance = 1e-12;
inline constexpr double kMinPairs = 16;

// Candidate ordering: higher score, then smaller |dx|+|dy|, then dy, then dx.
inline bool better_shift(const Shift& a, const Shift& b) {
    if (a.score > b.score + kTieTolerance) return true;
    if (b.score > a.score + kTieTolerance) return false;
    const int la = std::abs(a.dx) + std::abs(a.dy);
    const int lb = std::abs(b.dx) + std::abs(b.dy);
    if (la != lb) return la < lb;
    if (a.dy != b.dy) return a.dy < b.dy;
    return a.dx < b.dx;
}

// Variances at or below kDegenerateRelVariance * n * (mean square of the raw
// values) are treated as zero.
inline std::optional<double> pearson_from_sums(double n, double sa, double sb, double saa, double sbb, double sab,
                                               double meansq_a, double meansq_b) {
    if (n < kMinPairs) return std::nullopt;
    const double va = saa - sa * sa / n;
    const double vb = sbb - sb * sb / n;
    if (va <= kDegenerateRelVariance * n * meansq_a || vb <= kDegenerateRelVariance * n * meansq_b) return std::nullopt;
    const double r = (sab - sa * sb / n) / std::sqrt(va * vb);
    return std::clamp(r, -1.0, 1.0);
}

// Direct two-pass Pearson correlation over jointly valid pairs.
inline std::optional<double> overlap_correlation(const Image2D& ref, const Image2D& mov, int dx, int dy) {
    const int w = ref.width(), h = ref.height();
    const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
    const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
    double n = 0, sa = 0, sb = 0;
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
            if (!ref.valid(x, y) || !mov.valid(x + dx, y + dy)) continue;
            n += 1;
            sa += ref.at(x, y);
            sb += mov.at(x + dx, y + dy);
        }
    }
    if (n < kMinPairs) return std::nullopt;
    const double ma = sa / n, mb = sb / n;
    double saa = 0, sbb = 0, sab = 0, raa = 0, rbb = 0;
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
            if (!ref.valid(x, y) || !mov.valid(x + dx, y + dy)) continue;
            const double a = ref.at(x, y) - ma;
            const double b = mov.at(x + dx, y + dy) - mb;
            saa += a * a;
            sbb += b * b;
            sab += a * b;
            raa += ref.at(x, y) * ref.at(x, y);
            rbb += mov.at(x + dx, y + dy) * mov.at(x + dx, y + dy);
        }
    }
    if (saa <= kDegenerateRelVariance * raa || sbb <= kDegenerateRelVariance * rbb) return std::nullopt;
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

// Masked normalized cross-correlation for every shift in [-s, s]^2 from six
// FFT cross-correlations. Returns row-major (2s+1)^2 scores, NaN where the
// correlation is undefined.
inline std::vector<double> masked_ncc_fft(const Image2D& ref, const Image2D& mov, int s) {
    const int w = ref.width(), h = ref.height();
    const int pw = fft::good_size(w + s);
    const int ph = fft::good_size(h + s);
    const fft::RealFft2D plan(ph, pw);
    const std::size_t total = plan.real_size();

    // Centering on the valid means keeps the variance subtractions well conditioned.
    auto mean_of = [](const Image2D& im) {
        double acc = 0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < im.size(); ++i) {
            if (im.mask()[i]) {
                acc += im.pixels()[i];
                ++n;
            }
        }
        return n ? acc / static_cast<double>(n) : 0.0;
    };
    const double ma = mean_of(ref), mb = mean_of(mov);
    auto mean_square = [](const Image2D& im) {
        double acc = 0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < im.size(); ++i) {
            if (im.mask()[i]) {
                acc += im.pixels()[i] * im.pixels()[i];
                ++n;
            }
        }
        return n ? acc / static_cast<double>(n) : 0.0;
    };
    const double qa = mean_square(ref), qb = mean_square(mov);

    std::vector<double> mr(total, 0), a1(total, 0), a2(total, 0), mm(total, 0), b1(total, 0), b2(total, 0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t k = static_cast<std::size_t>(y) * static_cast<std::size_t>(pw) + static_cast<std::size_t>(x);
            if (ref.valid(x, y)) {
                const double v = ref.at(x, y) - ma;
                mr[k] = 1;
                a1[k] = v;
                a2[k] = v * v;
            }
            if (mov.valid(x, y)) {
                const double v = mov.at(x, y) - mb;
                mm[k] = 1;
                b1[k] = v;
                b2[k] = v * v;
            }
        }
    }
    const auto fmr = plan.forward(mr), fa1 = plan.forward(a1), fa2 = plan.forward(a2);
    const auto fmm = plan.forward(mm), fb1 = plan.forward(b1), fb2 = plan.forward(b2);
    auto correlate = [&](const std::vector<std::complex<double>>& f, const std::vector<std::complex<double>>& g) {
        std::vector<std::complex<double>> prod(f.size());
        for (std::size_t i = 0; i < f.size(); ++i) prod[i] = std::conj(f[i]) * g[i];
        auto out = plan.inverse(prod);
        const double scale = 1.0 / static_cast<double>(total);
        for (auto& v : out) v *= scale;
        return out;
    };
    const auto n = correlate(fmr, fmm);
    const auto sa = correlate(fa1, fmm);
    const auto saa = correlate(fa2, fmm);
    const auto sb = correlate(fmr, fb1);
    const auto sbb = correlate(fmr, fb2);
    const auto sab = correlate(fa1, fb1);

    const int side = 2 * s + 1;
    std::vector<double> scores(static_cast<std::size_t>(side) * static_cast<std::size_t>(side),
                               std::numeric_limits<double>::quiet_NaN());
    for (int dy = -s; dy <= s; ++dy) {
        for (int dx = -s; dx <= s; ++dx) {
            const int iy = (dy + ph) % ph, ix = (dx + pw) % pw;
            const std::size_t k = static_cast<std::size_t>(iy) * static_cast<std::size_t>(pw) + static_cast<std::size_t>(ix);
            const double count = std::round(n[k]);
            auto r = pearson_from_sums(count, sa[k], sb[k], saa[k], sbb[k], sab[k], qa, qb);
            if (r) scores[static_cast<std::size_t>(dy + s) * static_cast<std::size_t>(side) + static_cast<std::size_t>(dx + s)] = *r;
        }
    }
    return scores;
}

}  // namespace detail

/// Integer shift in [-max_shift, max_shift]^2 maximizing the Pearson
/// correlation over jointly valid overlapping pixels.
inline Shift find_shift(const Image2D& reference, const Image2D& moving, int max_shift = kDefaultMaxShift,
                        ShiftSearch method = ShiftSearch::fft) {
    require(reference.width() == moving.width() && reference.height() == moving.height(), ErrorCode::ShapeMismatch,
            "find_shift needs equally sized frames");
    require(max_shift >= 0, ErrorCode::InvalidArgument, "max_shift must be >= 0");
    const double w = reference.width(), h = reference.height();
    require(max_shift < reference.width() && max_shift < reference.height() &&
                (w - max_shift) * (h - max_shift) >= 0.25 * w * h,
            ErrorCode::InsufficientOverlap, "overlap at max shift is below 25% of the frame");

    std::optional<Shift> best;
    auto consider = [&best](int dx, int dy, double score) {
        const Shift cand{dx, dy, score};
        if (!best || detail::better_shift(cand, *best)) best = cand;
    };
    if (method == ShiftSearch::exhaustive) {
        for (int dy = -max_shift; dy <= max_shift; ++dy) {
            for (int dx = -max_shift; dx <= max_shift; ++dx) {
                if (auto r = detail::overlap_correlation(reference, moving, dx, dy)) consider(dx, dy, *r);
            }
        }
    } else {
        const auto scores = detail::masked_ncc_fft(reference, moving, max_shift);
        const int side = 2 * max_shift + 1;
        for (int dy = -max_shift; dy <= max_shift; ++dy) {
            for (int dx = -max_shift; dx <= max_shift; ++dx) {
                const double r = scores[static_cast<std::size_t>(dy + max_shift) * static_cast<std::size_t>(side) +
                                        static_cast<std::size_t>(dx + max_shift)];
                if (!std::isnan(r)) consider(dx, dy, r);
            }
        }
    }
    require(best.has_value(), ErrorCode::DegenerateImage, "zero variance in every candidate overlap");
    return *best;
}

/// Sequential temporal alignment. Each frame is matched against its
/// predecessor; relative shifts accumulate from frame 0. After a pass the
/// frames are re-shifted and the pass repeats until every shift found is
/// zero or `passes` is exhausted. Returns the total cumulative shift per
/// frame (apply the negation to align it).
inline std::vector<Shift> align_sequence(const std::vector<Image2D>& frames, int max_shift = kDefaultMaxShift,
                                         int passes = 2, ShiftSearch method = ShiftSearch::fft) {
    require(!frames.empty(), ErrorCode::EmptyInput, "align_sequence needs at least one frame");
    require(passes >= 1, ErrorCode::InvalidArgument, "passes must be >= 1");
    for (const auto& f : frames) {
        require(f.width() == frames[0].width() && f.height() == frames[0].height(), ErrorCode::ShapeMismatch,
                "frames must share dimensions");
    }
    std::vector<Shift> total(frames.size(), Shift{0, 0, 1.0});
    std::vector<Image2D> current = frames;
    for (int pass = 0; pass < passes; ++pass) {
        bool all_zero = true;
        Shift running{0, 0, 1.0};
        for (std::size_t i = 1; i < current.size(); ++i) {
            Shift s;
            try {
                s = find_shift(current[i - 1], current[i], max_shift, method);
            } catch (const Error& e) {
                throw Error(e.code(), "frame " + std::to_string(i) + ": " + e.message());
            }
            running.dx += s.dx;
            running.dy += s.dy;
            if (s.dx != 0 || s.dy != 0) all_zero = false;
            total[i].dx += running.dx;
            total[i].dy += running.dy;
            total[i].score = s.score;
        }
        if (all_zero) break;
        for (std::size_t i = 1; i < current.size(); ++i) current[i] = shift_image(frames[i], -total[i].dx, -total[i].dy);
    }
    return total;
}

namespace detail {

// Exact sine/cosine for multiples of 90 degrees so lattice rotations stay exact.
inline std::pair<double, double> cos_sin_degrees(double degrees) {
    double a = std::fmod(degrees, 360.0);
    if (a < 0) a += 360.0;
    if (a == 0.0) return {1.0, 0.0};
    if (a == 90.0) return {0.0, 1.0};
    if (a == 180.0) return {-1.0, 0.0};
    if (a == 270.0) return {0.0, -1.0};
    const double r = degrees * std::numbers::pi / 180.0;
    return {std::cos(r), std::sin(r)};
}

}  // namespace detail

/// Rotates about the image center (x, y pixel axes, y down): a source point
/// p maps to R(angle)(p - c) + c. Destination pixels that sample outside the
/// source or touch an invalid source pixel become invalid.
inline Image2D rotate_and_mask(const Image2D& image, double angle_degrees) {
    require(std::isfinite(angle_degrees), ErrorCode::InvalidArgument, "rotation angle must be finite");
    const auto [c, s] = detail::cos_sin_degrees(angle_degrees);
    const double cx = (image.width() - 1) / 2.0;
    const double cy = (image.height() - 1) / 2.0;
    return warp_inverse(image, image.width(), image.height(), [&](double x, double y) {
        const double u = x - cx, v = y - cy;
        return std::pair{c * u + s * v + cx, -s * u + c * v + cy};
    });
}

/// Maximum-area axis-aligned rectangle of valid pixels (histogram/stack
/// method over rows). The first maximum in row-major scan order wins.
inline Rect largest_valid_rect(const Image2D& image) {
    const int w = image.width(), h = image.height();
    std::vector<int> heights(static_cast<std::size_t>(w), 0);
    Rect best;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) heights[static_cast<std::size_t>(x)] = image.valid(x, y) ? heights[static_cast<std::size_t>(x)] + 1 : 0;
        std::vector<int> stack;
        for (int x = 0; x <= w; ++x) {
            const int cur = x < w ? heights[static_cast<std::size_t>(x)] : 0;
            while (!stack.empty() && heights[static_cast<std::size_t>(stack.back())] >= cur) {
                const int top = stack.back();
                stack.pop_back();
                const int height = heights[static_cast<std::size_t>(top)];
                const int left = stack.empty() ? 0 : stack.back() + 1;
                const int width = x - left;
                if (static_cast<long long>(height) * width > best.area()) best = Rect{left, y - height + 1, width, height};
            }
            stack.push_back(x);
        }
    }
    require(best.area() > 0, ErrorCode::EmptyValidRegion, "no valid pixels");
    return best;
}

/// Similarity transform p' = scale * R(rotation) * p + translation, in pixel
/// coordinates (x right, y down).
struct Transform {
    double scale = 1.0;
    double rotation = 0.0;  // degrees
    double tx = 0.0;
    double ty = 0.0;

    static Transform identity() { return {}; }
    static Transform translation(double x, double y) { return {1.0, 0.0, x, y}; }

    static Transform from_complex(std::complex<double> w, std::complex<double> t) {
        return {std::abs(w), std::arg(w) * 180.0 / std::numbers::pi, t.real(), t.imag()};
    }

    [[nodiscard]] std::complex<double> linear() const {
        const auto [c, s] = detail::cos_sin_degrees(rotation);
        return {scale * c, scale * s};
    }
    [[nodiscard]] std::complex<double> offset() const { return {tx, ty}; }

    [[nodiscard]] std::pair<double, double> apply(double x, double y) const {
        const auto p = linear() * std::complex<double>(x, y) + offset();
        return {p.real(), p.imag()};
    }

    [[nodiscard]] Transform inverse() const {
        require(scale > 0.0, ErrorCode::InvalidArgument, "transform scale must be > 0");
        const auto w = 1.0 / linear();
        return from_complex(w, -w * offset());
    }

    /// (*this) after `first`: p -> this(first(p)).
    [[nodiscard]] Transform after(const Transform& first) const {
        return from_complex(linear() * first.linear(), linear() * first.offset() + offset());
    }
};

struct PointPair {
    double x = 0, y = 0;    // source
    double xp = 0, yp = 0;  // destination
};

struct SimilarityFit {
    Transform transform;
    std::vector<std::size_t> inliers;
};

namespace detail {

struct ComplexModel {
    std::complex<double> w;
    std::complex<double> t;
};

inline std::optional<ComplexModel> two_point_model(const PointPair& a, const PointPair& b) {
    const std::complex<double> z1(a.x, a.y), z2(b.x, b.y), q1(a.xp, a.yp), q2(b.xp, b.yp);
    const auto dz = z2 - z1;
    if (std::abs(dz) < 1e-12) return std::nullopt;
    const auto w = (q2 - q1) / dz;
    if (std::abs(w) < 1e-12) return std::nullopt;
    return ComplexModel{w, q1 - w * z1};
}

inline ComplexModel least_squares_model(const std::vector<PointPair>& m, const std::vector<std::size_t>& idx) {
    std::complex<double> zbar, qbar;
    for (auto i : idx) {
        zbar += std::complex<double>(m[i].x, m[i].y);
        qbar += std::complex<double>(m[i].xp, m[i].yp);
    }
    zbar /= static_cast<double>(idx.size());
    qbar /= static_cast<double>(idx.size());
    std::complex<double> num;
    double den = 0;
    for (auto i : idx) {
        const auto dz = std::complex<double>(m[i].x, m[i].y) - zbar;
        const auto dq = std::complex<double>(m[i].xp, m[i].yp) - qbar;
        num += dq * std::conj(dz);
        den += std::norm(dz);
    }
    const auto w = den > 0 ? num / den : std::complex<double>(1.0, 0.0);
    return {w, qbar - w * zbar};
}

inline double residual(const ComplexModel& model, const PointPair& p) {
    return std::abs(model.w * std::complex<double>(p.x, p.y) + model.t - std::complex<double>(p.xp, p.yp));
}

}  // namespace detail

/// RANSAC over two-point similarity hypotheses followed by least-squares
/// refits on the consensus set. Small inputs enumerate every pair instead
/// of sampling; sampling is seeded and deterministic.
inline SimilarityFit fit_similarity(const std::vector<PointPair>& matches, double inlier_tol = 2.0, int iterations = 1000,
                                    std::uint64_t seed = 0) {
    const std::size_t n = matches.size();
    require(n >= 2, ErrorCode::InsufficientMatches, std::to_string(n) + " matches; need at least 2");
    require(inlier_tol > 0 && iterations >= 1, ErrorCode::InvalidArgument, "invalid RANSAC parameters");

    auto evaluate = [&](const detail::ComplexModel& model, std::vector<std::size_t>& inliers) {
        inliers.clear();
        double cost = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double r = detail::residual(model, matches[i]);
            if (r < inlier_tol) {
                inliers.push_back(i);
                cost += r * r;
            }
        }
        return cost;
    };

    std::vector<std::size_t> best_inliers, scratch;
    double best_cost = std::numeric_limits<double>::infinity();
    auto try_model = [&](const detail::ComplexModel& model) {
        const double cost = evaluate(model, scratch);
        if (scratch.size() > best_inliers.size() || (scratch.size() == best_inliers.size() && cost < best_cost)) {
            best_inliers = scratch;
            best_cost = cost;
        }
    };

    const std::size_t pairs = n * (n - 1) / 2;
    if (pairs <= static_cast<std::size_t>(iterations)) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                if (auto m = detail::two_point_model(matches[i], matches[j])) try_model(*m);
            }
        }
    } else {
        std::mt19937_64 rng(seed);
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        for (int it = 0; it < iterations; ++it) {
            const std::size_t i = pick(rng);
            std::size_t j = pick(rng);
            while (j == i) j = pick(rng);
            if (auto m = detail::two_point_model(matches[i], matches[j])) try_model(*m);
        }
    }
    const bool enough = best_inliers.size() >= 2 &&
                        (2 * best_inliers.size() >= n || best_inliers.size() >= 8);
    require(enough, ErrorCode::NoConsensus,
            std::to_string(best_inliers.size()) + " inliers of " + std::to_string(n) + " matches");

    auto model = detail::least_squares_model(matches, best_inliers);
    for (int round = 0; round < 10; ++round) {
        std::vector<std::size_t> refined;
        evaluate(model, refined);
        if (refined.size() < 2 || refined == best_inliers) break;
        best_inliers = std::move(refined);
        model = detail::least_squares_model(matches, best_inliers);
    }
    return {Transform::from_complex(model.w, model.t), best_inliers};
}

inline Transform estimate_similarity(const std::vector<PointPair>& matches, double inlier_tol = 2.0,
                                     int iterations = 1000, std::uint64_t seed = 0) {
    return fit_similarity(matches, inlier_tol, iterations, seed).transform;
}

inline std::vector<PointPair> to_point_pairs(const std::vector<sift::Match>& matches) {
    std::vector<PointPair> out;
    out.reserve(matches.size());
    for (const auto& m : matches) out.push_back({m.a.x, m.a.y, m.b.x, m.b.y});
    return out;
}

/// Pearson correlation over jointly valid pixels of two equally sized images.
inline std::optional<double> masked_correlation(const Image2D& a, const Image2D& b) {
    require(a.width() == b.width() && a.height() == b.height(), ErrorCode::ShapeMismatch, "correlation shapes differ");
    return detail::overlap_correlation(a, b, 0, 0);
}

struct RefineResult {
    Transform transform;
    bool accepted = false;
    int iterations = 0;
    double rms_before = 0.0;
    double rms_after = 0.0;
};

/// Gauss-Newton refinement of a similarity `moving -> fixed` that minimizes
/// sum (g * moving(T^-1 x) + h - fixed(x))^2 over jointly valid pixels, with
/// gain g and offset h solved alongside the four geometric parameters.
/// The refined transform is accepted only when it lowers the RMS residual
/// and stays within `max_shift` pixels / `max_rotation` degrees of the
/// starting estimate.
inline RefineResult refine_similarity(const Image2D& moving, const Image2D& fixed, const Transform& initial,
                                      int max_iterations = 30, double max_shift = 3.0, double max_rotation = 2.0) {
    const double cx = (fixed.width() - 1) / 2.0, cy = (fixed.height() - 1) / 2.0;
    // Inverse map x -> moving, centered: G(x) = w * (x - c) + t.
    const Transform inv0 = initial.inverse();
    std::complex<double> w = inv0.linear();
    std::complex<double> t = w * std::complex<double>(cx, cy) + inv0.offset();
    double gain = 1.0, bias = 0.0;

    struct Sample {
        double u, v, f;
    };
    auto evaluate = [&](std::complex<double> w_, std::complex<double> t_, double g_, double h_, double* jtj, double* jtr) {
        double sse = 0.0;
        std::size_t n = 0;
        for (int y = 0; y < fixed.height(); ++y) {
            for (int x = 0; x < fixed.width(); ++x) {
                if (!fixed.valid(x, y)) continue;
                const std::complex<double> q = w_ * std::complex<double>(x - cx, y - cy) + t_;
                const auto m = sample_bilinear(moving, q.real(), q.imag());
                if (!m) continue;
                double gx = 0.0, gy = 0.0;
                if (jtj != nullptr) {
                    const auto xp = sample_bilinear(moving, q.real() + 0.5, q.imag());
                    const auto xm = sample_bilinear(moving, q.real() - 0.5, q.imag());
                    const auto yp = sample_bilinear(moving, q.real(), q.imag() + 0.5);
                    const auto ym = sample_bilinear(moving, q.real(), q.imag() - 0.5);
                    if (!xp || !xm || !yp || !ym) continue;
                    gx = *xp - *xm;
                    gy = *yp - *ym;
                }
                const double r = g_ * *m + h_ - fixed.at(x, y);
                sse += r * r;
                ++n;
                if (jtj == nullptr) continue;
                const double u = x - cx, v = y - cy;
                // d q / d(wr, wi, tx, ty) = (u, v), (-v, u), (1, 0), (0, 1)
                const double J[6] = {g_ * (gx * u + gy * v), g_ * (-gx * v + gy * u), g_ * gx, g_ * gy, *m, 1.0};
                for (int a = 0; a < 6; ++a) {
                    jtr[a] += J[a] * r;
                    for (int b = 0; b < 6; ++b) jtj[a * 6 + b] += J[a] * J[b];
                }
            }
        }
        return n >= detail::kMinPairs ? std::sqrt(sse / static_cast<double>(n)) : std::numeric_limits<double>::infinity();
    };

    // Photometric initialization: least-squares gain/offset at the start pose.
    {
        double sm = 0, sf = 0, smm = 0, smf = 0, n = 0;
        for (int y = 0; y < fixed.height(); ++y) {
            for (int x = 0; x < fixed.width(); ++x) {
                if (!fixed.valid(x, y)) continue;
                const auto q = w * std::complex<double>(x - cx, y - cy) + t;
                const auto m = sample_bilinear(moving, q.real(), q.imag());
                if (!m) continue;
                sm += *m;
                sf += fixed.at(x, y);
                smm += *m * *m;
                smf += *m * fixed.at(x, y);
                n += 1;
            }
        }
        const double var = smm - sm * sm / std::max(n, 1.0);
        if (n >= detail::kMinPairs && var > 0) {
            gain = (smf - sm * sf / n) / var;
            bias = (sf - gain * sm) / n;
        }
    }

    RefineResult res;
    res.transform = initial;
    res.rms_before = evaluate(w, t, gain, bias, nullptr, nullptr);
    if (!std::isfinite(res.rms_before)) return res;
    double rms = res.rms_before;
    for (int it = 0; it < max_iterations; ++it) {
        double jtj[36] = {}, jtr[6] = {};
        evaluate(w, t, gain, bias, jtj, jtr);
        // Solve jtj * d = -jtr by Gaussian elimination with partial pivoting.
        double a[6][7];
        for (int r = 0; r < 6; ++r) {
            for (int c = 0; c < 6; ++c) a[r][c] = jtj[r * 6 + c];
            a[r][6] = -jtr[r];
        }
        bool singular = false;
        for (int c = 0; c < 6 && !singular; ++c) {
            int piv = c;
            for (int r = c + 1; r < 6; ++r) {
                if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
            }
            if (std::abs(a[piv][c]) < 1e-300) {
                singular = true;
                break;
            }
            std::swap(a[c], a[piv]);
            for (int r = c + 1; r < 6; ++r) {
                const double f = a[r][c] / a[c][c];
                for (int k = c; k < 7; ++k) a[r][k] -= f * a[c][k];
            }
        }
        if (singular) break;
        double d[6];
        for (int r = 5; r >= 0; --r) {
            double s = a[r][6];
            for (int k = r + 1; k < 6; ++k) s -= a[r][k] * d[k];
            d[r] = s / a[r][r];
        }
        const auto w_new = w + std::complex<double>(d[0], d[1]);
        const auto t_new = t + std::complex<double>(d[2], d[3]);
        const double rms_new = evaluate(w_new, t_new, gain + d[4], bias + d[5], nullptr, nullptr);
        res.iterations = it + 1;
        if (!(rms_new < rms)) break;
        w = w_new;
        t = t_new;
        gain += d[4];
        bias += d[5];
        const double step = std::abs(std::complex<double>(d[2], d[3])) + std::abs(std::complex<double>(d[0], d[1])) * cx;
        rms = rms_new;
        if (step < 1e-6) break;
    }
    res.rms_after = rms;
    const Transform inv = Transform::from_complex(w, t - w * std::complex<double>(cx, cy));
    const Transform refined = inv.inverse();
    const auto [x0, y0] = initial.apply(moving.width() / 2.0, moving.height() / 2.0);
    const auto [x1, y1] = refined.apply(moving.width() / 2.0, moving.height() / 2.0);
    const double drot = std::abs(std::remainder(refined.rotation - initial.rotation, 360.0));
    if (rms < res.rms_before && std::hypot(x1 - x0, y1 - y0) <= max_shift && drot <= max_rotation) {
        res.transform = refined;
        res.accepted = true;
    }
    return res;
}

struct CoalignOptions {
    double manual_dx = 0.0;  // LR pixels, applied after the estimated transform
    double manual_dy = 0.0;
    double ratio = 0.75;
    sift::SiftParams sift{};
    double inlier_tol = 2.0;
    int ransac_iterations = 1000;
    bool refine = true;  // intensity-based refinement of the feature estimate
    std::uint64_t seed = 0;
    double residual_floor = 0.3;
    int hr_output_scale = 1;  // HR crop is resampled to (LR crop size) x this factor
};

struct AlignedPair {
    Image2D lr;
    Image2D hr;
    fits::ObsMetadata lr_meta;
    fits::ObsMetadata hr_meta;
    Transform transform;  // original HR pixel -> LR pixel
    Rect crop;            // in the LR frame; the HR crop covers the same sky region
    double residual_score = 0.0;
    int hr_scale = 1;
    double manual_dx = 0.0;
    double manual_dy = 0.0;
    std::size_t matches = 0;
    std::size_t inliers = 0;
    bool refined = false;
};

namespace detail {

// Point map of area_downsample: input coordinate -> output coordinate.
inline Transform area_downsample_map(double ratio) {
    const double off = 0.5 / ratio - 0.5;
    return {1.0 / ratio, 0.0, off, off};
}

inline Transform rotation_about_center(const Image2D& img, double angle_degrees) {
    const double cx = (img.width() - 1) / 2.0, cy = (img.height() - 1) / 2.0;
    const Transform rot{1.0, angle_degrees, 0.0, 0.0};
    return Transform::translation(cx, cy).after(rot.after(Transform::translation(-cx, -cy)));
}

}  // namespace detail

/// Co-registers one HR frame with its LR counterpart: derotate HR by its
/// header angle, area-average to the LR plate scale, match features,
/// estimate a similarity, apply the manual offset, then crop both frames to
/// the largest rectangle where the warped HR footprint and LR are valid.
inline AlignedPair coalign_pair(const Image2D& lr, const fits::ObsMetadata& lr_meta, const Image2D& hr,
                                const fits::ObsMetadata& hr_meta, const CoalignOptions& opt = {}) {
    require(lr_meta.plate_scale > 0 && hr_meta.plate_scale > 0, ErrorCode::InvalidMetadata, "plate scales must be > 0");
    require(opt.hr_output_scale >= 1, ErrorCode::InvalidArgument, "hr_output_scale must be >= 1");
    const double ratio = lr_meta.plate_scale / hr_meta.plate_scale;
    require(ratio >= 1.0, ErrorCode::InvalidMetadata, "HR plate scale must not be coarser than LR");

    const Image2D derotated = rotate_and_mask(hr, -hr_meta.rotation_angle);
    const Image2D hr_lr = ratio > 1.0 ? area_downsample(derotated, ratio) : derotated;

    const auto matches = sift::detect_and_match(hr_lr, lr, opt.ratio, opt.sift);
    const auto fit = fit_similarity(to_point_pairs(matches), opt.inlier_tol, opt.ransac_iterations, opt.seed);
    Transform estimate = fit.transform;
    bool refined = false;
    if (opt.refine) {
        const auto r = refine_similarity(hr_lr, lr, estimate);
        estimate = r.transform;
        refined = r.accepted;
    }
    const Transform to_lr = Transform::translation(opt.manual_dx, opt.manual_dy).after(estimate);

    const Image2D warped = warp_inverse(hr_lr, lr.width(), lr.height(), [inv = to_lr.inverse()](double x, double y) {
        return inv.apply(x, y);
    });
    Image2D joint = warped;
    for (std::size_t i = 0; i < joint.size(); ++i) joint.mask()[i] = warped.mask()[i] && lr.mask()[i];
    const Rect crop = largest_valid_rect(joint);

    AlignedPair out;
    out.lr = lr.crop(crop);
    const Image2D warped_crop = warped.crop(crop);
    const auto score = masked_correlation(out.lr, warped_crop);
    require(score.has_value(), ErrorCode::DegenerateImage, "aligned overlap has zero variance");
    out.residual_score = *score;
    require(out.residual_score >= opt.residual_floor, ErrorCode::ResidualTooLow,
            "residual correlation " + std::to_string(out.residual_score) + " below floor " +
                std::to_string(opt.residual_floor));

    const Transform derotate_map = detail::rotation_about_center(hr, -hr_meta.rotation_angle);
    const Transform down_map = ratio > 1.0 ? detail::area_downsample_map(ratio) : Transform::identity();
    out.transform = to_lr.after(down_map.after(derotate_map));

    // HR crop on a grid hr_output_scale times finer than the LR crop.
    const int s = opt.hr_output_scale;
    const Transform lr_to_out{static_cast<double>(s), 0.0, (0.5 - crop.x) * s - 0.5, (0.5 - crop.y) * s - 0.5};
    const double fine_ratio = ratio / s;
    if (fine_ratio > 1.0) {
        const Image2D fine = area_downsample(derotated, fine_ratio);
        const Transform fine_to_out = lr_to_out.after(out.transform.after(derotate_map.inverse())
                                                          .after(detail::area_downsample_map(fine_ratio).inverse()));
        const auto inv = fine_to_out.inverse();
        out.hr = warp_inverse(fine, crop.width * s, crop.height * s, [&inv](double x, double y) { return inv.apply(x, y); });
    } else {
        const Transform derot_to_out = lr_to_out.after(out.transform.after(derotate_map.inverse()));
        const auto inv = derot_to_out.inverse();
        out.hr = warp_inverse(derotated, crop.width * s, crop.height * s, [&inv](double x, double y) { return inv.apply(x, y); });
    }

    out.lr_meta = lr_meta;
    out.hr_meta = hr_meta;
    out.crop = crop;
    out.hr_scale = s;
    out.manual_dx = opt.manual_dx;
    out.manual_dy = opt.manual_dy;
    out.matches = matches.size();
    out.inliers = fit.inliers.size();
    out.refined = refined;
    return out;
}

}  // namespace solarsr
