#pragma once

// Reference RRDB generator in double precision with direct-summation
// convolution. Written from the architecture description only; shares no
// code with the engine beyond reading parameters out of a Checkpoint.

#include <string>
#include <vector>

#include "solarsr/sr_engine.hpp"

namespace solarsr::oracle {

struct Map {
    int c = 0, h = 0, w = 0;
    std::vector<double> v;
    Map() = default;
    Map(int c_, int h_, int w_) : c(c_), h(h_), w(w_), v(static_cast<std::size_t>(c_) * h_ * w_, 0.0) {}
    double& at(int k, int y, int x) { return v[(static_cast<std::size_t>(k) * h + y) * w + x]; }
    double at(int k, int y, int x) const { return v[(static_cast<std::size_t>(k) * h + y) * w + x]; }
};

inline Map conv3x3(const Map& in, const Tensor& weight, const Tensor& bias, int pad = 1) {
    const int oc = static_cast<int>(weight.shape().n);
    const int k = static_cast<int>(weight.shape().h);
    Map out(oc, in.h + 2 * pad - k + 1, in.w + 2 * pad - k + 1);
    for (int o = 0; o < oc; ++o) {
        for (int y = 0; y < out.h; ++y) {
            for (int x = 0; x < out.w; ++x) {
                double s = bias.data()[static_cast<std::size_t>(o)];
                for (int i = 0; i < in.c; ++i) {
                    for (int dy = 0; dy < k; ++dy) {
                        for (int dx = 0; dx < k; ++dx) {
                            const int sy = y + dy - pad, sx = x + dx - pad;
                            if (sy < 0 || sx < 0 || sy >= in.h || sx >= in.w) continue;
                            s += static_cast<double>(weight.at(static_cast<std::size_t>(o), static_cast<std::size_t>(i),
                                                               static_cast<std::size_t>(dy), static_cast<std::size_t>(dx))) *
                                 in.at(i, sy, sx);
                        }
                    }
                }
                out.at(o, y, x) = s;
            }
        }
    }
    return out;
}

inline Map lrelu(Map m) {
    for (double& v : m.v) v = v >= 0 ? v : 0.2 * v;
    return m;
}

inline Map concat(const std::vector<Map>& parts) {
    int c = 0;
    for (const auto& p : parts) c += p.c;
    Map out(c, parts[0].h, parts[0].w);
    std::size_t off = 0;
    for (const auto& p : parts) {
        std::copy(p.v.begin(), p.v.end(), out.v.begin() + static_cast<std::ptrdiff_t>(off));
        off += p.v.size();
    }
    return out;
}

inline Map axpy(const Map& x, double a, const Map& y) {  // x + a * y
    Map out = x;
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += a * y.v[i];
    return out;
}

inline Map generator(const Checkpoint& ck, const Map& input) {
    const auto& a = ck.arch();
    const double beta = a.residual_scale;
    auto conv = [&ck](const Map& m, const std::string& n) { return conv3x3(m, ck.get(n + ".weight"), ck.get(n + ".bias")); };
    const Map fea = conv(input, "conv_first");
    Map trunk = fea;
    for (int b = 0; b < a.num_rrdb; ++b) {
        const Map block_in = trunk;
        Map x = trunk;
        for (int r = 1; r <= 3; ++r) {
            const std::string p = "body." + std::to_string(b) + ".rdb" + std::to_string(r) + ".conv";
            std::vector<Map> feats{x};
            for (int k = 1; k <= 4; ++k) feats.push_back(lrelu(conv(concat(feats), p + std::to_string(k))));
            x = axpy(x, beta, conv(concat(feats), p + "5"));
        }
        trunk = axpy(block_in, beta, x);
    }
    Map feat = axpy(fea, 1.0, conv(trunk, "conv_body"));
    for (int u = 1; u <= a.upsample_stages(); ++u) {
        Map up(feat.c, feat.h * 2, feat.w * 2);
        for (int c = 0; c < up.c; ++c)
            for (int y = 0; y < up.h; ++y)
                for (int x = 0; x < up.w; ++x) up.at(c, y, x) = feat.at(c, y / 2, x / 2);
        feat = lrelu(conv(up, "conv_up" + std::to_string(u)));
    }
    return conv(lrelu(conv(feat, "conv_hr")), "conv_last");
}

inline Map from_tensor(const Tensor& t) {
    Map m(static_cast<int>(t.shape().c), static_cast<int>(t.shape().h), static_cast<int>(t.shape().w));
    for (std::size_t i = 0; i < m.v.size(); ++i) m.v[i] = t.data()[i];
    return m;
}

}  // namespace solarsr::oracle
