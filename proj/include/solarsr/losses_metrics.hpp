#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "solarsr/error.hpp"
#include "solarsr/image.hpp"
#include "solarsr/sr_engine.hpp"
#include "solarsr/tensor.hpp"

namespace solarsr {

// ---------------------------------------------------------------------------
// Relativistic average GAN losses
// ---------------------------------------------------------------------------

struct CriticScores {
    std::vector<double> real;
    std::vector<double> fake;
};

struct ScoreGradient {
    std::vector<double> real;
    std::vector<double> fake;
};

/// log(1 + e^x) without overflow.
inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

namespace detail {

inline double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline void check_scores(const CriticScores& s) {
    require(!s.real.empty() && !s.fake.empty(), ErrorCode::NonFiniteInput, "critic score vectors must be non-empty");
    for (const auto* v : {&s.real, &s.fake}) {
        for (double x : *v) require(std::isfinite(x), ErrorCode::NonFiniteInput, "critic score is not finite");
    }
}

// mean_i softplus(a * (C_r,i - mean C_f)) + mean_j softplus(b * (C_f,j - mean C_r)).
// log D = -softplus(-z) and log(1 - D) = -softplus(z), so the discriminator
// loss is (a, b) = (-1, +1) and the generator loss (+1, -1).
inline double ragan(const CriticScores& s, double a, double b) {
    check_scores(s);
    const double mr = mean_of(s.real), mf = mean_of(s.fake);
    double tr = 0.0, tf = 0.0;
    for (double c : s.real) tr += softplus(a * (c - mf));
    for (double c : s.fake) tf += softplus(b * (c - mr));
    return tr / static_cast<double>(s.real.size()) + tf / static_cast<double>(s.fake.size());
}

inline ScoreGradient ragan_gradient(const CriticScores& s, double a, double b) {
    check_scores(s);
    const double nr = static_cast<double>(s.real.size()), nf = static_cast<double>(s.fake.size());
    const double mr = mean_of(s.real), mf = mean_of(s.fake);
    double sig_r = 0.0, sig_f = 0.0;
    for (double c : s.real) sig_r += sigmoid(a * (c - mf));
    for (double c : s.fake) sig_f += sigmoid(b * (c - mr));
    ScoreGradient g;
    for (double c : s.real) g.real.push_back((a * sigmoid(a * (c - mf)) - b * sig_f / nf) / nr);
    for (double c : s.fake) g.fake.push_back((b * sigmoid(b * (c - mr)) - a * sig_r / nr) / nf);
    return g;
}

}  // namespace detail

/// -E[log D(x_r, x_f)] - E[log(1 - D(x_f, x_r))] with
/// D(x, y) = sigmoid(C(x) - E[C(y)]).
inline double ra_discriminator_loss(const CriticScores& s) { return detail::ragan(s, -1.0, 1.0); }

/// -E[log(1 - D(x_r, x_f))] - E[log D(x_f, x_r)].
inline double ra_generator_loss(const CriticScores& s) { return detail::ragan(s, 1.0, -1.0); }

inline ScoreGradient ra_discriminator_gradient(const CriticScores& s) { return detail::ragan_gradient(s, -1.0, 1.0); }
inline ScoreGradient ra_generator_gradient(const CriticScores& s) { return detail::ragan_gradient(s, 1.0, -1.0); }

// ---------------------------------------------------------------------------
// Perceptual, pixel and combined losses
// ---------------------------------------------------------------------------

/// Deterministic feature provider. Returns pre-activation feature maps, one
/// tensor per stage.
class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    [[nodiscard]] virtual std::vector<Tensor> extract(const Tensor& x) const = 0;
};

class IdentityExtractor final : public FeatureExtractor {
public:
    [[nodiscard]] std::vector<Tensor> extract(const Tensor& x) const override { return {x}; }
};

/// Stack of 3x3 (or any odd k) same-padded convs. Each stage reports its
/// conv output before the leaky ReLU that feeds the next stage.
class ConvFeatureExtractor final : public FeatureExtractor {
public:
    struct Layer {
        Tensor weight;
        Tensor bias;
    };

    explicit ConvFeatureExtractor(std::vector<Layer> layers) : layers_(std::move(layers)) {}

    [[nodiscard]] std::vector<Tensor> extract(const Tensor& x) const override {
        std::vector<Tensor> out;
        Tensor cur = x;
        for (const auto& l : layers_) {
            Tensor pre = conv2d(cur, l.weight, l.bias, static_cast<int>(l.weight.shape().h / 2));
            cur = pre;
            detail::leaky_relu_channels(cur, 0, cur.shape().c);
            out.push_back(std::move(pre));
        }
        return out;
    }

private:
    std::vector<Layer> layers_;
};

inline double l1_loss(const Tensor& sr, const Tensor& hr) {
    require(sr.shape() == hr.shape(), ErrorCode::ShapeMismatch, "sr " + sr.shape().str() + " vs hr " + hr.shape().str());
    require(sr.size() > 0, ErrorCode::ShapeMismatch, "empty tensors");
    double s = 0.0;
    for (std::size_t i = 0; i < sr.size(); ++i) s += std::fabs(static_cast<double>(sr.data()[i]) - hr.data()[i]);
    return s / static_cast<double>(sr.size());
}

/// Mean absolute feature difference, averaged within each stage and then
/// across stages.
inline double perceptual_loss(const FeatureExtractor& extractor, const Tensor& sr, const Tensor& hr) {
    require(sr.shape() == hr.shape(), ErrorCode::ShapeMismatch, "sr " + sr.shape().str() + " vs hr " + hr.shape().str());
    const auto fs = extractor.extract(sr);
    const auto fh = extractor.extract(hr);
    require(!fs.empty() && fs.size() == fh.size(), ErrorCode::ShapeMismatch, "extractor returned no stages");
    double total = 0.0;
    for (std::size_t k = 0; k < fs.size(); ++k) total += l1_loss(fs[k], fh[k]);
    return total / static_cast<double>(fs.size());
}

struct LossWeights {
    double lambda = 5e-3;
    double eta = 1e-2;
};

/// L_percep + lambda * L_G^Ra + eta * L_1.
inline double combined_generator_loss(double percep, double adv, double l1, const LossWeights& w) {
    for (double v : {percep, adv, l1, w.lambda, w.eta}) require(std::isfinite(v), ErrorCode::NonFiniteInput, "non-finite loss term");
    require(w.lambda >= 0.0 && w.eta >= 0.0, ErrorCode::InvalidArgument, "loss weights must be >= 0");
    return percep + w.lambda * adv + w.eta * l1;
}

// ---------------------------------------------------------------------------
// Evaluation metrics
// ---------------------------------------------------------------------------

struct ImageMetrics {
    double mse = 0.0;
    double rmse = 0.0;
    double cc = 0.0;
    std::size_t pixels = 0;
};

struct MetricsReport {
    std::vector<ImageMetrics> per_image;
    double mean_mse = 0.0;
    double mean_rmse = 0.0;
    double mean_cc = 0.0;
};

/// MSE, RMSE and Pearson correlation over jointly valid pixels.
inline ImageMetrics image_metrics(const Image2D& pred, const Image2D& truth) {
    require(pred.width() == truth.width() && pred.height() == truth.height(), ErrorCode::ShapeMismatch,
            "prediction and truth differ in size");
    std::size_t n = 0;
    double sp = 0.0, st = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!pred.mask()[i] || !truth.mask()[i]) continue;
        ++n;
        sp += pred.pixels()[i];
        st += truth.pixels()[i];
    }
    require(n >= 2, ErrorCode::DegenerateImage, "fewer than two jointly valid pixels");
    const double mp = sp / static_cast<double>(n), mt = st / static_cast<double>(n);
    double se = 0.0, spp = 0.0, stt = 0.0, spt = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!pred.mask()[i] || !truth.mask()[i]) continue;
        const double p = pred.pixels()[i], t = truth.pixels()[i];
        se += (p - t) * (p - t);
        spp += (p - mp) * (p - mp);
        stt += (t - mt) * (t - mt);
        spt += (p - mp) * (t - mt);
    }
    require(spp > 0.0 && stt > 0.0, ErrorCode::DegenerateImage, "zero variance, correlation undefined");
    ImageMetrics m;
    m.pixels = n;
    m.mse = se / static_cast<double>(n);
    m.rmse = std::sqrt(m.mse);
    m.cc = std::clamp(spt / std::sqrt(spp * stt), -1.0, 1.0);
    return m;
}

/// Per-image means of each metric. mean_rmse is not sqrt(mean_mse).
inline MetricsReport aggregate_metrics(const std::vector<ImageMetrics>& reports) {
    require(!reports.empty(), ErrorCode::EmptyInput, "no per-image metrics to aggregate");
    MetricsReport r;
    r.per_image = reports;
    for (const auto& m : reports) {
        r.mean_mse += m.mse;
        r.mean_rmse += m.rmse;
        r.mean_cc += m.cc;
    }
    const auto n = static_cast<double>(reports.size());
    r.mean_mse /= n;
    r.mean_rmse /= n;
    r.mean_cc /= n;
    return r;
}

}  // namespace solarsr
