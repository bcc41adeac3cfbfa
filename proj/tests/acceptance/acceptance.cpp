// Acceptance checks. One line per criterion:
//   PASS|FAIL  <n>  <title>  <measured values>  (<seconds> s / budget <seconds> s)
// Exit status is the number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <unistd.h>

#include <json.hpp>

#include "../oracle_generator.hpp"
#include "../support.hpp"
#include "solarsr/checkpoint_io.hpp"
#include "solarsr/fits_io.hpp"
#include "solarsr/losses_metrics.hpp"
#include "solarsr/pipeline/parallel.hpp"
#include "solarsr/pipeline/stages.hpp"
#include "solarsr/spectra.hpp"

using namespace solarsr;
namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// ------------------------------------------------------------------ 1
Outcome metrics_aggregate() {
    std::vector<ImageMetrics> got;
    std::vector<long double> o_mse, o_rmse, o_cc;
    for (std::uint64_t k = 0; k < 20; ++k) {
        Image2D truth = fixtures::random_image(64, 48, 900 + k, 0.0, 4000.0);
        Image2D pred = truth;
        std::mt19937_64 rng(k);
        std::normal_distribution<double> noise(0.0, 20.0 + 15.0 * static_cast<double>(k));
        for (auto& v : pred.pixels()) v = 0.95 * v + 40.0 + noise(rng);
        for (int m = 0; m < 50; ++m) pred.set_valid(static_cast<int>(rng() % 64), static_cast<int>(rng() % 48), false);
        got.push_back(image_metrics(pred, truth));

        long double n = 0, sp = 0, st = 0, se = 0;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            if (!pred.mask()[i]) continue;
            n += 1;
            sp += pred.pixels()[i];
            st += truth.pixels()[i];
            se += std::pow(static_cast<long double>(pred.pixels()[i]) - truth.pixels()[i], 2);
        }
        const long double mp = sp / n, mt = st / n;
        long double cpp = 0, ctt = 0, cpt = 0;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            if (!pred.mask()[i]) continue;
            const long double a = pred.pixels()[i] - mp, b = truth.pixels()[i] - mt;
            cpp += a * a;
            ctt += b * b;
            cpt += a * b;
        }
        o_mse.push_back(se / n);
        o_rmse.push_back(std::sqrt(se / n));
        o_cc.push_back(cpt / std::sqrt(cpp * ctt));
    }
    const auto rep = aggregate_metrics(got);
    auto mean = [](const std::vector<long double>& v) {
        long double s = 0;
        for (auto x : v) s += x;
        return static_cast<double>(s / v.size());
    };
    const double e_mse = std::abs(rep.mean_mse - mean(o_mse)) / mean(o_mse);
    const double e_rmse = std::abs(rep.mean_rmse - mean(o_rmse)) / mean(o_rmse);
    const double e_cc = std::abs(rep.mean_cc - mean(o_cc));
    const double gap = std::sqrt(rep.mean_mse) - rep.mean_rmse;
    const double reported_gap = std::sqrt(467.15) - 21.59;
    Outcome out;
    out.pass = e_mse <= 1e-12 && e_rmse <= 1e-12 && e_cc <= 1e-12 && gap > 0 && reported_gap > 0;
    out.detail = fmt("rel err mse %.1e rmse %.1e, abs err cc %.1e; sqrt(mean mse) - mean rmse = %.3f (reported GONG/GST values: %.3f)", e_mse,
                     e_rmse, e_cc, gap, reported_gap);
    return out;
}

// ------------------------------------------------------------------ 2
Outcome ragan_kernel() {
    Outcome out;
    double sym = 0;
    for (double c : {-7.0, 0.0, 3.5}) {
        const CriticScores s{{c, c, c, c}, {c, c}};
        sym = std::max({sym, std::abs(ra_discriminator_loss(s) - 2 * std::numbers::ln2),
                        std::abs(ra_generator_loss(s) - 2 * std::numbers::ln2)});
    }
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> g(0.0, 2.0);
    double worst_rel = 0;
    for (int t = 0; t < 20; ++t) {
        CriticScores s;
        for (int i = 0; i < 2 + t % 5; ++i) s.real.push_back(g(rng) + 1.0);
        for (int i = 0; i < 1 + t % 4; ++i) s.fake.push_back(g(rng) - 1.0);
        for (bool gen : {false, true}) {
            auto loss = [gen](const CriticScores& c) { return gen ? ra_generator_loss(c) : ra_discriminator_loss(c); };
            const auto grad = gen ? ra_generator_gradient(s) : ra_discriminator_gradient(s);
            for (int side = 0; side < 2; ++side) {
                const auto& an = side == 0 ? grad.real : grad.fake;
                for (std::size_t i = 0; i < an.size(); ++i) {
                    const double h = 1e-5;
                    auto up = s, dn = s;
                    (side == 0 ? up.real : up.fake)[i] += h;
                    (side == 0 ? dn.real : dn.fake)[i] -= h;
                    const double fd = (loss(up) - loss(dn)) / (2 * h);
                    worst_rel = std::max(worst_rel, std::abs(an[i] - fd) / std::max(std::abs(an[i]), 1e-4));
                }
            }
        }
    }
    bool finite = true;
    std::uniform_real_distribution<double> big(-1e4, 1e4);
    std::vector<CriticScores> extreme{{{1e4}, {-1e4}}, {{-1e4}, {1e4}}, {{1e4, -1e4}, {1e4}}, {{-1e4, -1e4}, {-1e4}}};
    for (int t = 0; t < 1000; ++t) {
        CriticScores s;
        for (int i = 0; i < 1 + t % 6; ++i) s.real.push_back(big(rng));
        for (int i = 0; i < 1 + t % 3; ++i) s.fake.push_back(big(rng));
        extreme.push_back(s);
    }
    for (const auto& s : extreme) {
        for (double v : {ra_discriminator_loss(s), ra_generator_loss(s)}) finite = finite && std::isfinite(v);
        for (const auto& gr : {ra_discriminator_gradient(s), ra_generator_gradient(s)}) {
            for (double v : gr.real) finite = finite && std::isfinite(v);
            for (double v : gr.fake) finite = finite && std::isfinite(v);
        }
    }
    out.pass = sym <= 1e-9 && worst_rel <= 1e-4 && finite;
    out.detail = fmt("symmetric err %.1e; worst gradient rel err %.1e; finite at |s|<=1e4: %s", sym, worst_rel,
                     finite ? "yes" : "no");
    return out;
}

// ------------------------------------------------------------------ 3
GeneratorConfig tiny(int scale, int nf, int blocks, int gc, int channels = 1) {
    GeneratorConfig c;
    c.in_channels = channels;
    c.out_channels = channels;
    c.base_features = nf;
    c.num_rrdb = blocks;
    c.growth_channels = gc;
    c.scale_factor = scale;
    return c;
}

Outcome interpolation() {
    const auto cfg = tiny(2, 6, 2, 3);
    bool endpoints = true;
    for (std::uint64_t k = 0; k < 5; ++k) {
        const auto a = make_random_checkpoint(cfg, 10 + k), b = make_random_checkpoint(cfg, 20 + k);
        endpoints = endpoints && interpolate_checkpoints(a, b, 0.0) == a && interpolate_checkpoints(a, b, 1.0) == b;
    }
    Checkpoint ha(cfg), hb(cfg);
    ha.add("w", Tensor({1, 1, 1, 4}, {1.0f, -2.0f, 0.25f, 8.0f}));
    hb.add("w", Tensor({1, 1, 1, 4}, {3.0f, 2.0f, 0.75f, -8.0f}));
    const bool hand = interpolate_checkpoints(ha, hb, 0.5).get("w").data() == std::vector<float>{2.0f, 0.0f, 0.5f, 0.0f};
    double worst = 0;
    std::mt19937_64 rng(33);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 20; ++t) {
        const auto a = make_random_checkpoint(cfg, 100 + t), b = make_random_checkpoint(cfg, 200 + t);
        const double s = u(rng), q = u(rng);
        const auto lhs = interpolate_checkpoints(interpolate_checkpoints(a, b, s), b, q);
        const auto rhs = interpolate_checkpoints(a, b, s + q - s * q);
        for (std::size_t i = 0; i < lhs.size(); ++i) {
            for (std::size_t j = 0; j < lhs.values()[i].size(); ++j) {
                worst = std::max(worst, static_cast<double>(std::abs(lhs.values()[i].data()[j] - rhs.values()[i].data()[j])));
            }
        }
    }
    Outcome out;
    out.pass = endpoints && hand && worst <= 1e-6;
    out.detail = fmt("endpoints bit-exact: %s; hand midpoint exact: %s; composition max err %.1e", endpoints ? "yes" : "no",
                     hand ? "yes" : "no", worst);
    return out;
}

// ------------------------------------------------------------------ 4
Outcome generator_fidelity() {
    double worst = 0;
    bool shapes = true;
    const std::vector<GeneratorConfig> configs{tiny(1, 6, 2, 3), tiny(2, 8, 1, 4), tiny(4, 4, 2, 2), tiny(2, 5, 1, 3, 3)};
    for (std::size_t c = 0; c < configs.size(); ++c) {
        const auto ck = make_random_checkpoint(configs[c], 500 + c, 0.15f);
        for (std::uint64_t k = 0; k < 10; ++k) {
            std::mt19937_64 rng(k * 31 + c);
            std::uniform_real_distribution<float> u(0.0f, 1.0f);
            Tensor x({1, static_cast<std::size_t>(configs[c].in_channels), 4 + k % 3, 5 + k % 4});
            for (auto& v : x.data()) v = u(rng);
            const Tensor y = generator_forward(x, ck);
            const auto ref = oracle::generator(ck, oracle::from_tensor(x));
            const auto s = static_cast<std::size_t>(configs[c].scale_factor);
            shapes = shapes && y.shape() == Shape{1, static_cast<std::size_t>(configs[c].out_channels), x.shape().h * s, x.shape().w * s};
            double peak = 0, err = 0;
            for (std::size_t i = 0; i < ref.v.size(); ++i) {
                peak = std::max(peak, std::abs(ref.v[i]));
                err = std::max(err, std::abs(y.data()[i] - ref.v[i]));
            }
            worst = std::max(worst, err / peak);
        }
    }
    const auto ck = make_random_checkpoint(tiny(1, 6, 1, 3), 9);
    Tensor x({1, 6, 5, 7});
    std::mt19937_64 rng(1);
    for (auto& v : x.data()) v = std::uniform_real_distribution<float>(-1.0f, 1.0f)(rng);
    const bool identity = rrdb_forward(x, ParamSlice(ck, "body.0."), 0.0f) == x;
    Outcome out;
    out.pass = worst <= 1e-5 && shapes && identity;
    out.detail = fmt("%zu configs (scales 1, 2, 4) x 10 inputs: max rel err %.1e; shape law: %s; beta=0 identity: %s",
                     configs.size(), worst, shapes ? "yes" : "no", identity ? "yes" : "no");
    return out;
}

// ------------------------------------------------------------------ 5
Outcome temporal_alignment() {
    const Image2D ref = fixtures::texture(128, 128, 5);
    std::vector<int> ok(61 * 61, 0);
    pipeline::parallel_for(ok.size(), static_cast<int>(std::max(1u, std::thread::hardware_concurrency())), [&](std::size_t i) {
        const int dx = static_cast<int>(i % 61) - 30, dy = static_cast<int>(i / 61) - 30;
        const Shift s = find_shift(ref, shift_image(ref, dx, dy), 30);
        ok[i] = s.dx == dx && s.dy == dy;
        if ((dx % 6 == 0) && (dy % 6 == 0)) {
            const Shift e = find_shift(ref, shift_image(ref, dx, dy), 30, ShiftSearch::exhaustive);
            ok[i] = ok[i] && e.dx == dx && e.dy == dy;
        }
    });
    std::size_t exact = 0;
    for (int v : ok) exact += static_cast<std::size_t>(v);

    const auto seq = fixtures::jitter_sequence(12, 128, 8, 41);
    const auto total = align_sequence(seq.frames, 10, 2);
    bool recovered = true;
    std::vector<Image2D> aligned;
    for (std::size_t i = 0; i < seq.frames.size(); ++i) {
        recovered = recovered && total[i].dx == seq.offsets[0].first - seq.offsets[i].first &&
                    total[i].dy == seq.offsets[0].second - seq.offsets[i].second;
        aligned.push_back(shift_image(seq.frames[i], -total[i].dx, -total[i].dy));
    }
    bool zero = true;
    for (const auto& s : align_sequence(aligned, 10, 1)) zero = zero && s.dx == 0 && s.dy == 0;
    Outcome out;
    out.pass = exact == ok.size() && recovered && zero;
    out.detail = fmt("%zu/%zu shifts exact (121 also by exhaustive search); jitter recovered: %s; second pass all zero: %s",
                     exact, ok.size(), recovered ? "yes" : "no", zero ? "yes" : "no");
    return out;
}

// ------------------------------------------------------------------ 6
Outcome coalignment() {
    constexpr int kTrials = 50;
    std::vector<fixtures::TrialError> err(kTrials, {1e9, 1e9});
    const int workers = static_cast<int>(std::clamp(std::thread::hardware_concurrency(), 1u, 8u));
    pipeline::parallel_for(kTrials, workers, [&](std::size_t t) {
        const auto c = fixtures::coalign_trial(static_cast<int>(t));
        try {
            err[t] = fixtures::trial_error(c, coalign_pair(c.lr, c.lr_meta, c.hr, c.hr_meta).transform);
        } catch (const Error&) {
        }
    });
    int good = 0;
    double worst_rot = 0, worst_tr = 0;
    for (const auto& e : err) {
        if (e.rotation_deg < 0.2 && e.translation_px < 0.5) ++good;
        worst_rot = std::max(worst_rot, e.rotation_deg);
        worst_tr = std::max(worst_tr, e.translation_px);
    }
    Outcome out;
    out.pass = good >= 48;
    out.detail = fmt("%d/%d trials within 0.2 deg and 0.5 px; worst rotation %.3f deg, worst translation %.3f px", good,
                     kTrials, worst_rot, worst_tr);
    return out;
}

// ------------------------------------------------------------------ 7
Outcome spectra() {
    double parseval = 0;
    for (auto [w, h] : {std::pair{64, 64}, std::pair{50, 37}, std::pair{128, 96}}) {
        const Image2D img = fixtures::random_image(w, h, static_cast<std::uint64_t>(w + h), -3.0, 7.0);
        double energy = 0;
        for (double v : img.pixels()) energy += v * v;
        const double total = power_spectrum_2d(img).total();
        parseval = std::max(parseval, std::abs(total - w * h * energy) / total);
    }
    bool peaks = true;
    for (auto [kx, ky] : {std::pair{8, 0}, std::pair{5, 12}, std::pair{0, 21}}) {
        Image2D img(64, 64);
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 64; ++x) img.at(x, y) = 3.0 + std::cos(2 * std::numbers::pi * (kx * x + ky * y) / 64);
        const auto r = azimuthal_average(power_spectrum_2d(img));
        std::size_t best = 1;
        for (std::size_t i = 1; i < r.power.size(); ++i)
            if (r.power[i] > r.power[best]) best = i;
        peaks = peaks && r.bin[best] == static_cast<int>(std::floor(std::hypot(kx, ky)));
    }
    const Image2D lr = fixtures::texture(64, 64, 3);
    const double unit = spectra_report(bicubic_upscale(lr, 4), lr).high_frequency_ratio;
    Image2D sr = bicubic_upscale(lr, 4);
    const auto [lo, hi] = *lr.valid_range();
    const Image2D fine = fixtures::random_image(256, 256, 8, -0.05 * (hi - lo), 0.05 * (hi - lo));
    for (std::size_t i = 0; i < sr.size(); ++i) sr.pixels()[i] += fine.pixels()[i];
    const double raised = spectra_report(sr, lr).high_frequency_ratio;
    Outcome out;
    out.pass = parseval <= 1e-9 && peaks && std::abs(unit - 1.0) <= 1e-9 && raised > 1.0;
    out.detail = fmt("Parseval rel err %.1e; cosine peaks exact: %s; ratio upscaled %.12f; with texture %.3f", parseval,
                     peaks ? "yes" : "no", unit, raised);
    return out;
}

// ------------------------------------------------------------------ 8
Outcome fits_round_trip() {
    bool ok = true;
    std::string bitpixes;
    for (const char* name : {"int16_scaled.fits", "float32_nan.fits", "float64_ext.fits"}) {
        const auto bytes = fits::read_file(std::string(SOLARSR_FIXTURE_DIR) + "/" + name);
        const auto parsed = fits::parse_fits(bytes);
        ok = ok && fits::serialize_fits(parsed) == bytes;
        const int bitpix = static_cast<int>(*parsed.hdus[0].header.get_int("BITPIX"));
        bitpixes += (bitpixes.empty() ? "" : ", ") + std::to_string(bitpix);
        fits::MetadataKeys keys;
        keys.strict = false;
        const auto [img, meta] = fits::read_image_hdu(parsed, 0, keys);
        const auto written = fits::write_fits(img, parsed.hdus[0].header.cards(), bitpix);
        const auto reparsed = fits::parse_fits(written);
        const auto [back, meta2] = fits::read_image_hdu(reparsed, 0, keys);
        ok = ok && fits::serialize_fits(reparsed) == written && back.mask() == img.mask();
        for (std::size_t i = 0; i < img.size(); ++i) ok = ok && (!img.mask()[i] || back.pixels()[i] == img.pixels()[i]);
        ok = ok && fits::write_fits(back, reparsed.hdus[0].header.cards(), bitpix) == written;
    }
    Outcome out;
    out.pass = ok;
    out.detail = "BITPIX " + bitpixes + ": parse/serialize and write/parse/write byte-exact: " + (ok ? "yes" : "no");
    return out;
}

// ------------------------------------------------------------------ 9
std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

bool same_tree(const fs::path& a, const fs::path& b) {
    std::vector<fs::path> fa, fb;
    for (const auto& e : fs::recursive_directory_iterator(a))
        if (e.is_regular_file()) fa.push_back(fs::relative(e.path(), a));
    for (const auto& e : fs::recursive_directory_iterator(b))
        if (e.is_regular_file()) fb.push_back(fs::relative(e.path(), b));
    std::sort(fa.begin(), fa.end());
    std::sort(fb.begin(), fb.end());
    if (fa != fb) return false;
    for (const auto& f : fa)
        if (slurp(a / f) != slurp(b / f)) return false;
    return true;
}

std::vector<Json> jsonl(const fs::path& p) {
    std::vector<Json> rows;
    std::ifstream in(p);
    for (std::string line; std::getline(in, line);)
        if (!line.empty()) rows.push_back(Json::parse(line));
    return rows;
}

Outcome end_to_end() {
    Outcome out;
    const fs::path root = fs::temp_directory_path() / ("solarsr_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root);
    const auto sh = [](const std::string& cmd) { return std::system(cmd.c_str()); };
    if (sh(std::string(SOLARSR_SYNTH) + " --out " + (root / "day").string() + " >/dev/null") != 0) return {false, "synthetic day generation failed"};
    const std::string conf = (root / "day" / "day.conf").string();
    for (const char* run : {"run1", "run2"}) {
        const std::string jobs = std::string(run) == "run2" ? " -j 4" : "";
        if (sh(std::string(SOLARSR_CLI) + " -c " + conf + jobs + " -o " + (root / run).string() + " all >/dev/null 2>" +
               (root / (std::string(run) + ".err")).string()) != 0) {
            return {false, std::string(run) + " failed: " + slurp(root / (std::string(run) + ".err"))};
        }
    }
    const fs::path out_dir = root / "run1";
    const auto truth = Json::parse(slurp(root / "day" / "truth.json"));
    const auto manifest = jsonl(out_dir / "pair" / "manifest.jsonl");
    std::vector<std::string> splits;
    double min_residual = 1.0;
    bool dims = true, tables = true;
    for (const auto& r : manifest) {
        splits.push_back(r["split"]);
        if (!r["residual_score"].is_null()) min_residual = std::min(min_residual, r["residual_score"].get<double>());
        const auto id = r["pair_id"].get<std::string>();
        const auto lr = fits::parse_fits(fits::read_file((out_dir / r["lr_crop_path"].get<std::string>()).string()));
        const auto sr = fits::parse_fits(fits::read_file((out_dir / "infer" / (id + "_sr.fits")).string()));
        for (const char* ax : {"NAXIS1", "NAXIS2"}) dims = dims && *sr.hdus[0].header.get_int(ax) == 2 * *lr.hdus[0].header.get_int(ax);
        const auto csv = slurp(out_dir / "spectrum" / (id + "_spectrum.csv"));
        tables = tables && csv.rfind("# pair_id=" + id, 0) == 0 && std::count(csv.begin(), csv.end(), '\n') > 10;
    }
    const bool split_ok = Json(splits) == truth["expected_splits"];

    const auto rows = jsonl(out_dir / "eval" / "metrics.jsonl");
    std::vector<ImageMetrics> per;
    double recompute = 0;
    for (const auto& r : rows) {
        if (r["record"] != "pair") continue;
        per.push_back({r["mse"], r["rmse"], r["cc"], r["pixels"]});
        fits::MetadataKeys keys;
        keys.strict = false;
        keys.plate_scale_keyword = "SRNOKEY";
        const auto id = r["pair_id"].get<std::string>();
        const auto sr = fits::read_image_hdu(fits::parse_fits(fits::read_file((out_dir / "infer" / (id + "_sr.fits")).string())), 0, keys).first;
        const auto hr = fits::read_image_hdu(fits::parse_fits(fits::read_file((out_dir / "pair" / (id + "_hr.fits")).string())), 0, keys).first;
        const auto m = image_metrics(sr, hr);
        recompute = std::max({recompute, std::abs(m.mse - per.back().mse) / m.mse, std::abs(m.cc - per.back().cc)});
    }
    const auto agg = aggregate_metrics(per);
    const auto& a = rows.back();
    const bool agg_ok = a["record"] == "aggregate" && a["pairs"] == per.size() && a["mean_mse"] == agg.mean_mse &&
                        a["mean_rmse"] == agg.mean_rmse && a["mean_cc"] == agg.mean_cc;
    const bool spectra_ok = tables && jsonl(out_dir / "spectrum" / "summary.jsonl").size() == manifest.size();
    const bool deterministic = same_tree(root / "run1", root / "run2");

    out.pass = split_ok && min_residual > 0.9 && dims && recompute <= 1e-12 && agg_ok && spectra_ok && deterministic;
    out.detail = fmt("splits match: %s; min residual %.3f; SR = 2x LR: %s; metrics recomputed (err %.1e), aggregate consistent: %s; "
                     "spectra tables: %s; run1 == run2 (-j 4): %s; mean cc %.4f",
                     split_ok ? "yes" : "no", min_residual, dims ? "yes" : "no", recompute, agg_ok ? "yes" : "no",
                     spectra_ok ? "yes" : "no", deterministic ? "yes" : "no", agg.mean_cc);
    fs::remove_all(root);
    return out;
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* title;
        double budget_s;
        std::function<Outcome()> fn;
    };
    const std::vector<Criterion> criteria{
        {1, "aggregate metrics vs oracle", 1.0, metrics_aggregate},
        {2, "RaGAN losses and gradients", 1.0, ragan_kernel},
        {3, "network interpolation", 1.0, interpolation},
        {4, "generator forward fidelity", 30.0, generator_fidelity},
        {5, "temporal alignment", 120.0, temporal_alignment},
        {6, "LR/HR co-alignment", 300.0, coalignment},
        {7, "power spectra", 30.0, spectra},
        {8, "FITS round trip", 1.0, fits_round_trip},
        {9, "end-to-end synthetic day", 300.0, end_to_end},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool pass = o.pass && s <= c.budget_s;
        failed += pass ? 0 : 1;
        std::printf("%s  %d  %-28s %s  (%.2f s / budget %.0f s)\n", pass ? "PASS" : "FAIL", c.id, c.title, o.detail.c_str(), s,
                    c.budget_s);
        std::fflush(stdout);
    }
    return failed;
}
