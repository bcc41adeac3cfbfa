#pragma once

// Forward-only RRDB super-resolution generator (no batch normalization):
//
//   conv_first -> num_rrdb x RRDB -> conv_body (+ global skip)
//     -> log2(scale) x [nearest x2 upsample -> conv_up{k} -> leaky ReLU]
//     -> conv_hr -> leaky ReLU -> conv_last
//
// Parameter names follow the public Real-ESRGAN RRDBNet layout
// (conv_first, body.{i}.rdb{1,2,3}.conv{1..5}, conv_body, conv_up{k},
// conv_hr, conv_last; ".weight" shaped (out, in, 3, 3), ".bias" shaped
// (out, 1, 1, 1)).

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "solarsr/error.hpp"
#include "solarsr/image.hpp"
#include "solarsr/tensor.hpp"

namespace solarsr {

inline constexpr float kLeakySlope = 0.2f;

struct GeneratorConfig {
    int in_channels = 1;
    int out_channels = 1;
    int base_features = 64;
    int num_rrdb = 23;
    int growth_channels = 32;
    float residual_scale = 0.2f;
    int scale_factor = 4;

    void validate() const {
        require(in_channels >= 1 && out_channels >= 1 && base_features >= 1 && num_rrdb >= 1 && growth_channels >= 1,
                ErrorCode::IncompatibleCheckpoint, "generator counts must be >= 1");
        require(residual_scale > 0.0f && residual_scale <= 1.0f, ErrorCode::IncompatibleCheckpoint,
                "residual scale must lie in (0, 1]");
        require(scale_factor >= 1 && (scale_factor & (scale_factor - 1)) == 0, ErrorCode::IncompatibleCheckpoint,
                "scale factor must be a power of two");
    }

    [[nodiscard]] int upsample_stages() const {
        int stages = 0;
        for (int s = scale_factor; s > 1; s >>= 1) ++stages;
        return stages;
    }

    friend bool operator==(const GeneratorConfig&, const GeneratorConfig&) = default;
};

/// Named parameter store plus the architecture it instantiates.
class Checkpoint {
public:
    Checkpoint() = default;
    explicit Checkpoint(GeneratorConfig arch) : arch_(arch) {}

    [[nodiscard]] const GeneratorConfig& arch() const noexcept { return arch_; }

    void add(std::string name, Tensor value) {
        require(!index_.contains(name), ErrorCode::IncompatibleCheckpoint, "duplicate parameter " + name);
        index_.emplace(name, names_.size());
        names_.push_back(std::move(name));
        values_.push_back(std::move(value));
    }

    [[nodiscard]] bool contains(const std::string& name) const { return index_.contains(name); }

    [[nodiscard]] const Tensor& get(const std::string& name) const {
        auto it = index_.find(name);
        require(it != index_.end(), ErrorCode::IncompatibleCheckpoint, "missing parameter " + name);
        return values_[it->second];
    }
    [[nodiscard]] Tensor& get(const std::string& name) {
        auto it = index_.find(name);
        require(it != index_.end(), ErrorCode::IncompatibleCheckpoint, "missing parameter " + name);
        return values_[it->second];
    }

    [[nodiscard]] const std::vector<std::string>& names() const noexcept { return names_; }
    [[nodiscard]] const std::vector<Tensor>& values() const noexcept { return values_; }
    [[nodiscard]] std::vector<Tensor>& values() noexcept { return values_; }
    [[nodiscard]] std::size_t size() const noexcept { return names_.size(); }

    [[nodiscard]] std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& v : values_) n += v.size();
        return n;
    }

    friend bool operator==(const Checkpoint& a, const Checkpoint& b) {
        return a.arch_ == b.arch_ && a.names_ == b.names_ && a.values_ == b.values_;
    }

private:
    GeneratorConfig arch_{};
    std::vector<std::string> names_;
    std::vector<Tensor> values_;
    std::map<std::string, std::size_t> index_;
};

/// Every parameter the architecture needs, in canonical order.
inline std::vector<std::pair<std::string, Shape>> required_parameters(const GeneratorConfig& cfg) {
    std::vector<std::pair<std::string, Shape>> out;
    const auto nf = static_cast<std::size_t>(cfg.base_features);
    const auto gc = static_cast<std::size_t>(cfg.growth_channels);
    auto conv = [&out](const std::string& name, std::size_t out_c, std::size_t in_c) {
        out.emplace_back(name + ".weight", Shape{out_c, in_c, 3, 3});
        out.emplace_back(name + ".bias", Shape{out_c, 1, 1, 1});
    };
    conv("conv_first", nf, static_cast<std::size_t>(cfg.in_channels));
    for (int b = 0; b < cfg.num_rrdb; ++b) {
        for (int r = 1; r <= 3; ++r) {
            const std::string prefix = "body." + std::to_string(b) + ".rdb" + std::to_string(r) + ".conv";
            for (std::size_t k = 1; k <= 5; ++k) conv(prefix + std::to_string(k), k < 5 ? gc : nf, nf + (k - 1) * gc);
        }
    }
    conv("conv_body", nf, nf);
    for (int u = 1; u <= cfg.upsample_stages(); ++u) conv("conv_up" + std::to_string(u), nf, nf);
    conv("conv_hr", nf, nf);
    conv("conv_last", static_cast<std::size_t>(cfg.out_channels), nf);
    return out;
}

inline void validate_checkpoint(const Checkpoint& ckpt) {
    try {
        ckpt.arch().validate();
    } catch (const Error& e) {
        throw Error(ErrorCode::IncompatibleCheckpoint, e.message());
    }
    for (const auto& [name, shape] : required_parameters(ckpt.arch())) {
        require(ckpt.contains(name), ErrorCode::IncompatibleCheckpoint, "missing parameter " + name);
        const auto& got = ckpt.get(name).shape();
        require(got == shape, ErrorCode::IncompatibleCheckpoint,
                name + " has shape " + got.str() + ", expected " + shape.str());
        require(ckpt.get(name).all_finite(), ErrorCode::IncompatibleCheckpoint, name + " has non-finite entries");
    }
}

/// Checkpoint with every required parameter drawn uniformly from
/// [-weight_scale, weight_scale] (biases from a tenth of that range).
inline Checkpoint make_random_checkpoint(const GeneratorConfig& cfg, std::uint64_t seed, float weight_scale = 0.1f) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    Checkpoint ckpt(cfg);
    for (const auto& [name, shape] : required_parameters(cfg)) {
        const bool bias = name.ends_with(".bias");
        const float range = bias ? weight_scale * 0.1f : weight_scale;
        std::uniform_real_distribution<float> dist(-range, range);
        Tensor t(shape);
        for (auto& v : t.data()) v = dist(rng);
        ckpt.add(name, std::move(t));
    }
    return ckpt;
}

namespace detail {

// out[:, out_offset : out_offset + out_c] = conv(x[:, :in_used]) + bias.
inline void conv2d_into(const Tensor& x, std::size_t in_used, const Tensor& weight, const Tensor& bias, int padding,
                        Tensor& out, std::size_t out_offset) {
    const auto& ws = weight.shape();
    const std::size_t out_c = ws.n, k = ws.h;
    const auto& xs = x.shape();
    const auto& os = out.shape();
    const int H = static_cast<int>(xs.h), W = static_cast<int>(xs.w);
    const int OH = static_cast<int>(os.h), OW = static_cast<int>(os.w);
    for (std::size_t n = 0; n < xs.n; ++n) {
        for (std::size_t oc = 0; oc < out_c; ++oc) {
            float* dst = out.channel(n, out_offset + oc);
            std::fill(dst, dst + static_cast<std::size_t>(OH) * static_cast<std::size_t>(OW), bias.data()[oc]);
            for (std::size_t ic = 0; ic < in_used; ++ic) {
                const float* src = x.channel(n, ic);
                for (std::size_t ky = 0; ky < k; ++ky) {
                    for (std::size_t kx = 0; kx < k; ++kx) {
                        const float wv = weight.at(oc, ic, ky, kx);
                        if (wv == 0.0f) continue;
                        const int oy0 = std::max(0, padding - static_cast<int>(ky));
                        const int oy1 = std::min(OH, H + padding - static_cast<int>(ky));
                        const int ox0 = std::max(0, padding - static_cast<int>(kx));
                        const int ox1 = std::min(OW, W + padding - static_cast<int>(kx));
                        for (int oy = oy0; oy < oy1; ++oy) {
                            const float* srow = src + static_cast<std::ptrdiff_t>(oy + static_cast<int>(ky) - padding) * W +
                                                (static_cast<int>(kx) - padding);
                            float* drow = dst + static_cast<std::ptrdiff_t>(oy) * OW;
                            for (int ox = ox0; ox < ox1; ++ox) drow[ox] += wv * srow[ox];
                        }
                    }
                }
            }
        }
    }
}

inline void leaky_relu_channels(Tensor& t, std::size_t first, std::size_t count) {
    const auto& s = t.shape();
    for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t c = first; c < first + count; ++c) {
            float* p = t.channel(n, c);
            for (std::size_t i = 0; i < s.h * s.w; ++i) p[i] = p[i] >= 0.0f ? p[i] : p[i] * kLeakySlope;
        }
    }
}

inline void check_conv_shapes(const Tensor& x, std::size_t in_used, const Tensor& weight, const Tensor& bias) {
    const auto& ws = weight.shape();
    require(ws.h == ws.w && ws.h >= 1, ErrorCode::ShapeMismatch, "conv kernel must be square, got " + ws.str());
    require(ws.c == in_used, ErrorCode::ShapeMismatch,
            "input has " + std::to_string(in_used) + " channels, weight expects " + std::to_string(ws.c));
    require(bias.size() == ws.n, ErrorCode::ShapeMismatch, "bias length does not match output channels");
    (void)x;
}

}  // namespace detail

/// Stride-1 cross-correlation with zero padding.
inline Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int padding) {
    detail::check_conv_shapes(x, x.shape().c, weight, bias);
    require(padding >= 0, ErrorCode::ShapeMismatch, "negative padding");
    const auto& xs = x.shape();
    const auto k = static_cast<long long>(weight.shape().h);
    const long long oh = static_cast<long long>(xs.h) + 2 * padding - k + 1;
    const long long ow = static_cast<long long>(xs.w) + 2 * padding - k + 1;
    require(oh >= 1 && ow >= 1, ErrorCode::ShapeMismatch, "kernel larger than padded input");
    Tensor out(Shape{xs.n, weight.shape().n, static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)});
    detail::conv2d_into(x, xs.c, weight, bias, padding, out, 0);
    return out;
}

/// Parameters of one RRDB, addressed relative to a name prefix such as
/// "body.3.".
class ParamSlice {
public:
    ParamSlice(const Checkpoint& ckpt, std::string prefix) : ckpt_(&ckpt), prefix_(std::move(prefix)) {}
    [[nodiscard]] const Tensor& get(const std::string& name) const { return ckpt_->get(prefix_ + name); }

private:
    const Checkpoint* ckpt_;
    std::string prefix_;
};

/// Residual dense block: five 3x3 convs over densely concatenated inputs,
/// leaky ReLU on the first four, output = x + beta * conv5.
inline Tensor rdb_forward(const Tensor& x, const ParamSlice& p, const std::string& rdb, float beta) {
    const auto& xs = x.shape();
    const std::size_t nf = xs.c;
    const std::size_t gc = p.get(rdb + ".conv1.weight").shape().n;
    Tensor stack(Shape{xs.n, nf + 4 * gc, xs.h, xs.w});
    for (std::size_t n = 0; n < xs.n; ++n) {
        std::copy(x.channel(n, 0), x.channel(n, 0) + nf * xs.h * xs.w, stack.channel(n, 0));
    }
    for (std::size_t k = 1; k <= 4; ++k) {
        const auto& w = p.get(rdb + ".conv" + std::to_string(k) + ".weight");
        const auto& b = p.get(rdb + ".conv" + std::to_string(k) + ".bias");
        const std::size_t in_used = nf + (k - 1) * gc;
        detail::check_conv_shapes(stack, in_used, w, b);
        require(w.shape().n == gc, ErrorCode::ShapeMismatch, "dense layer width mismatch");
        detail::conv2d_into(stack, in_used, w, b, 1, stack, in_used);
        detail::leaky_relu_channels(stack, in_used, gc);
    }
    const auto& w5 = p.get(rdb + ".conv5.weight");
    const auto& b5 = p.get(rdb + ".conv5.bias");
    detail::check_conv_shapes(stack, nf + 4 * gc, w5, b5);
    require(w5.shape().n == nf, ErrorCode::ShapeMismatch, "RDB output width mismatch");
    Tensor out(xs);
    detail::conv2d_into(stack, nf + 4 * gc, w5, b5, 1, out, 0);
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = x.data()[i] + beta * out.data()[i];
    return out;
}

/// Residual-in-residual dense block: three RDBs in sequence, then
/// x + beta * (chain output).
inline Tensor rrdb_forward(const Tensor& x, const ParamSlice& p, float beta) {
    require(x.shape().c == p.get("rdb1.conv1.weight").shape().c, ErrorCode::ShapeMismatch,
            "RRDB input channels do not match base_features");
    Tensor y = rdb_forward(x, p, "rdb1", beta);
    y = rdb_forward(y, p, "rdb2", beta);
    y = rdb_forward(y, p, "rdb3", beta);
    for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] = x.data()[i] + beta * y.data()[i];
    return y;
}

inline Tensor upsample_nearest2(const Tensor& x) {
    const auto& s = x.shape();
    Tensor out(Shape{s.n, s.c, s.h * 2, s.w * 2});
    for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t c = 0; c < s.c; ++c) {
            for (std::size_t y = 0; y < s.h * 2; ++y) {
                for (std::size_t xx = 0; xx < s.w * 2; ++xx) out.at(n, c, y, xx) = x.at(n, c, y / 2, xx / 2);
            }
        }
    }
    return out;
}

inline Tensor generator_forward(const Tensor& lr, const Checkpoint& ckpt) {
    validate_checkpoint(ckpt);
    const auto& cfg = ckpt.arch();
    require(lr.shape().c == static_cast<std::size_t>(cfg.in_channels), ErrorCode::ShapeMismatch,
            "input has " + std::to_string(lr.shape().c) + " channels, generator expects " + std::to_string(cfg.in_channels));
    require(lr.shape().h >= 1 && lr.shape().w >= 1, ErrorCode::ShapeMismatch, "empty input");
    auto conv = [&ckpt](const Tensor& t, const std::string& name) {
        return conv2d(t, ckpt.get(name + ".weight"), ckpt.get(name + ".bias"), 1);
    };
    auto lrelu = [](Tensor t) {
        detail::leaky_relu_channels(t, 0, t.shape().c);
        return t;
    };
    Tensor feat = conv(lr, "conv_first");
    Tensor body = feat;
    for (int b = 0; b < cfg.num_rrdb; ++b) {
        body = rrdb_forward(body, ParamSlice(ckpt, "body." + std::to_string(b) + "."), cfg.residual_scale);
    }
    body = conv(body, "conv_body");
    for (std::size_t i = 0; i < feat.size(); ++i) feat.data()[i] += body.data()[i];
    for (int u = 1; u <= cfg.upsample_stages(); ++u) feat = lrelu(conv(upsample_nearest2(feat), "conv_up" + std::to_string(u)));
    return conv(lrelu(conv(feat, "conv_hr")), "conv_last");
}

/// Tiled inference: the input is cut into tile x tile cores, each extended
/// by `overlap` pixels of context, and outputs are cross-faded with linear
/// ramps across each 2*overlap seam. Tiles may run on `workers` threads;
/// blending is sequential in tile order, so the result does not depend on
/// completion order.
inline Tensor generator_forward_tiled(const Tensor& lr, const Checkpoint& ckpt, int tile, int overlap = 8, int workers = 1) {
    validate_checkpoint(ckpt);
    require(tile >= 1 && overlap >= 0, ErrorCode::InvalidArgument, "invalid tiling parameters");
    const auto& s = lr.shape();
    const int H = static_cast<int>(s.h), W = static_cast<int>(s.w);
    if (H <= tile && W <= tile) return generator_forward(lr, ckpt);
    const int scale = ckpt.arch().scale_factor;

    struct Tile {
        int x0, x1, y0, y1;  // core
        int ex0, ex1, ey0, ey1;  // extended
    };
    std::vector<Tile> tiles;
    for (int y0 = 0; y0 < H; y0 += tile) {
        for (int x0 = 0; x0 < W; x0 += tile) {
            const int x1 = std::min(W, x0 + tile), y1 = std::min(H, y0 + tile);
            tiles.push_back({x0, x1, y0, y1, std::max(0, x0 - overlap), std::min(W, x1 + overlap), std::max(0, y0 - overlap),
                             std::min(H, y1 + overlap)});
        }
    }
    std::vector<Tensor> results(tiles.size());
    auto run = [&](std::size_t i) {
        const Tile& t = tiles[i];
        Tensor part(Shape{s.n, s.c, static_cast<std::size_t>(t.ey1 - t.ey0), static_cast<std::size_t>(t.ex1 - t.ex0)});
        for (std::size_t n = 0; n < s.n; ++n) {
            for (std::size_t c = 0; c < s.c; ++c) {
                for (int y = t.ey0; y < t.ey1; ++y) {
                    for (int x = t.ex0; x < t.ex1; ++x) {
                        part.at(n, c, static_cast<std::size_t>(y - t.ey0), static_cast<std::size_t>(x - t.ex0)) =
                            lr.at(n, c, static_cast<std::size_t>(y), static_cast<std::size_t>(x));
                    }
                }
            }
        }
        results[i] = generator_forward(part, ckpt);
    };
    const int nthreads = std::max(1, std::min<int>(workers, static_cast<int>(tiles.size())));
    if (nthreads == 1) {
        for (std::size_t i = 0; i < tiles.size(); ++i) run(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::jthread> pool;
        for (int t = 0; t < nthreads; ++t) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < tiles.size(); i = next++) run(i);
            });
        }
    }

    // Ramp weight along one axis at LR coordinate u for a core [a, b) of an
    // axis of length len.
    auto ramp = [overlap](double u, int a, int b, int len) {
        double w = 1.0;
        if (overlap > 0) {
            if (a > 0) w = std::min(w, std::clamp((u - (a - overlap) + 0.5) / (2.0 * overlap), 0.0, 1.0));
            if (b < len) w = std::min(w, std::clamp(((b + overlap) - u - 0.5) / (2.0 * overlap), 0.0, 1.0));
        } else {
            const double c = std::floor(u + 0.5);
            w = (c >= a && c < b) ? 1.0 : 0.0;
        }
        return w;
    };
    const std::size_t oc = results.front().shape().c;
    const std::size_t OH = s.h * static_cast<std::size_t>(scale), OW = s.w * static_cast<std::size_t>(scale);
    std::vector<double> acc(s.n * oc * OH * OW, 0.0), wsum(OH * OW, 0.0);
    for (std::size_t i = 0; i < tiles.size(); ++i) {
        const Tile& t = tiles[i];
        const Tensor& r = results[i];
        for (int Y = t.ey0 * scale; Y < t.ey1 * scale; ++Y) {
            const double uy = (Y + 0.5) / scale - 0.5;
            const double wy = ramp(uy, t.y0, t.y1, H);
            if (wy <= 0.0) continue;
            for (int X = t.ex0 * scale; X < t.ex1 * scale; ++X) {
                const double ux = (X + 0.5) / scale - 0.5;
                const double w = wy * ramp(ux, t.x0, t.x1, W);
                if (w <= 0.0) continue;
                wsum[static_cast<std::size_t>(Y) * OW + static_cast<std::size_t>(X)] += w;
                for (std::size_t n = 0; n < s.n; ++n) {
                    for (std::size_t c = 0; c < oc; ++c) {
                        acc[((n * oc + c) * OH + static_cast<std::size_t>(Y)) * OW + static_cast<std::size_t>(X)] +=
                            w * r.at(n, c, static_cast<std::size_t>(Y - t.ey0 * scale), static_cast<std::size_t>(X - t.ex0 * scale));
                    }
                }
            }
        }
    }
    Tensor out(Shape{s.n, oc, OH, OW});
    for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t c = 0; c < oc; ++c) {
            for (std::size_t p = 0; p < OH * OW; ++p) {
                out.data()[(n * oc + c) * OH * OW + p] = static_cast<float>(acc[(n * oc + c) * OH * OW + p] / wsum[p]);
            }
        }
    }
    return out;
}

/// Element-wise (1 - alpha) * psnr + alpha * gan. The endpoints return
/// exact copies of the corresponding input.
inline Checkpoint interpolate_checkpoints(const Checkpoint& psnr, const Checkpoint& gan, double alpha) {
    require(alpha >= 0.0 && alpha <= 1.0, ErrorCode::AlphaOutOfRange, "alpha must lie in [0, 1]");
    require(psnr.arch() == gan.arch(), ErrorCode::IncompatibleCheckpoint, "architectures differ");
    require(psnr.names() == gan.names(), ErrorCode::IncompatibleCheckpoint, "parameter names differ");
    for (std::size_t i = 0; i < psnr.size(); ++i) {
        require(psnr.values()[i].shape() == gan.values()[i].shape(), ErrorCode::IncompatibleCheckpoint,
                "shape of " + psnr.names()[i] + " differs");
    }
    if (alpha == 0.0) return psnr;
    if (alpha == 1.0) return gan;
    Checkpoint out = psnr;
    for (std::size_t i = 0; i < out.size(); ++i) {
        auto& dst = out.values()[i].data();
        const auto& g = gan.values()[i].data();
        for (std::size_t j = 0; j < dst.size(); ++j) {
            dst[j] = static_cast<float>((1.0 - alpha) * static_cast<double>(dst[j]) + alpha * static_cast<double>(g[j]));
        }
    }
    return out;
}

/// Image -> (1, 1, H, W) tensor scaled by 1 / norm_max; invalid pixels map to 0.
inline Tensor image_to_tensor(const Image2D& img, double norm_max) {
    require(norm_max > 0.0 && std::isfinite(norm_max), ErrorCode::InvalidArgument, "normalization max must be > 0");
    Tensor t(Shape{1, 1, static_cast<std::size_t>(img.height()), static_cast<std::size_t>(img.width())});
    for (std::size_t i = 0; i < img.size(); ++i) {
        t.data()[i] = img.mask()[i] ? static_cast<float>(img.pixels()[i] / norm_max) : 0.0f;
    }
    return t;
}

/// Channel 0 of batch 0, multiplied back by norm_max. Output pixels inherit
/// validity from the input pixel they upsample when `source` is given.
inline Image2D tensor_to_image(const Tensor& t, double norm_max, const Image2D* source = nullptr) {
    const auto& s = t.shape();
    Image2D img(static_cast<int>(s.w), static_cast<int>(s.h));
    for (std::size_t y = 0; y < s.h; ++y) {
        for (std::size_t x = 0; x < s.w; ++x) img.at(static_cast<int>(x), static_cast<int>(y)) = t.at(0, 0, y, x) * norm_max;
    }
    if (source != nullptr && source->width() > 0) {
        const std::size_t f = s.w / static_cast<std::size_t>(source->width());
        for (std::size_t y = 0; y < s.h; ++y) {
            for (std::size_t x = 0; x < s.w; ++x) {
                img.set_valid(static_cast<int>(x), static_cast<int>(y),
                              source->valid(static_cast<int>(x / f), static_cast<int>(y / f)));
            }
        }
    }
    return img;
}

}  // namespace solarsr
