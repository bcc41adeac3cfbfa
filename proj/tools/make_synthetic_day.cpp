// make_synthetic_day: writes a fully synthetic observing day.
//
//   make_synthetic_day --out DIR [--seed N]
//
// DIR/lr/*.fits      10 LR frames, 1 minute cadence, integer pointing jitter
// DIR/hr/*.fits      3 HR frames with known similarity transforms
// DIR/psnr.ckpt, DIR/gan.ckpt   tiny near-identity generators (x2)
// DIR/day.conf       pipeline configuration (output_dir left to the caller)
// DIR/truth.json     jitter, HR geometry and expected splits

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "solarsr/checkpoint_io.hpp"
#include "solarsr/fits_io.hpp"
#include "solarsr/pipeline/synthetic.hpp"
#include "solarsr/timeutil.hpp"

namespace fs = std::filesystem;
using namespace solarsr;

namespace {

constexpr int kLrSize = 128;
constexpr int kHrSize = 2600;
constexpr double kLrPlateScale = 1.0;
constexpr double kHrPlateScale = 0.029;
constexpr double kNoiseFraction = 0.02;

struct HrFrame {
    const char* time;
    double angle;  // header rotation, degrees
    double cx, cy; // LR point under the HR center, frame-0 coordinates
};

std::string stamp(int minute, int second) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "2023-08-31T16:%02d:%02d", minute, second);
    return buf;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Write a synthetic LR/HR observing day"};
    std::string out;
    std::uint64_t seed = 7;
    app.add_option("--out", out, "output directory")->required();
    app.add_option("--seed", seed, "scene and noise seed");
    CLI11_PARSE(app, argc, argv);

    try {
        const fs::path root = fs::absolute(out);
        fs::create_directories(root / "lr");
        fs::create_directories(root / "hr");

        synthetic::SceneParams sp;
        sp.width = kLrSize;
        sp.height = kLrSize;
        sp.seed = seed;
        const synthetic::Scene scene(sp);
        synthetic::Noise noise(seed * 7919 + 1);
        const double sigma = kNoiseFraction * (sp.high - sp.low);

        std::mt19937_64 rng(seed);
        std::uniform_int_distribution<int> jitter(-3, 3);
        nlohmann::ordered_json truth;
        truth["lr_jitter"] = nlohmann::ordered_json::array();
        int jx0 = 0, jy0 = 0;
        for (int i = 0; i < 10; ++i) {
            const int jx = jitter(rng), jy = jitter(rng);
            if (i == 0) jx0 = jx, jy0 = jy;
            const Image2D img = synthetic::render_lr(scene, kLrSize, kLrSize, jx, jy, sigma, noise);
            const std::vector<fits::Card> cards = {
                fits::Card::make_string("DATE-OBS", stamp(30 + i, 0)),
                fits::Card::make_real("CDELT1", kLrPlateScale),
                fits::Card::make_real("CDELT2", kLrPlateScale),
                fits::Card::make_string("TELESCOP", "SYNTH-LR"),
            };
            char name[32];
            std::snprintf(name, sizeof name, "lr_%02d.fits", i);
            fits::write_file((root / "lr" / name).string(), fits::write_fits(img, cards, 16));
            truth["lr_jitter"].push_back({jx, jy});
        }

        // Train [16:30, 16:34), test [16:34, 16:36). LR frames after the
        // last HR frame (16:36 .. 16:39) form the extended set.
        const std::vector<HrFrame> hr = {
            {"2023-08-31T16:31:10", 5.0, 63.0, 65.0},
            {"2023-08-31T16:33:05", -8.0, 66.0, 62.5},
            {"2023-08-31T16:35:20", 12.0, 62.0, 64.0},
        };
        const double ratio = kLrPlateScale / kHrPlateScale;
        truth["hr"] = nlohmann::ordered_json::array();
        for (std::size_t k = 0; k < hr.size(); ++k) {
            const auto& f = hr[k];
            // Scene coordinates are frame-0 coordinates plus frame-0 jitter.
            const Transform to_scene = synthetic::hr_geometry(kHrSize, kHrSize, ratio, f.angle, f.cx + jx0, f.cy + jy0);
            const Image2D img = synthetic::render_hr(scene, kHrSize, kHrSize, to_scene, sigma, noise);
            const std::vector<fits::Card> cards = {
                fits::Card::make_string("DATE-OBS", f.time),
                fits::Card::make_real("CDELT1", kHrPlateScale),
                fits::Card::make_real("CDELT2", kHrPlateScale),
                fits::Card::make_real("ROTANGLE", f.angle, "degrees"),
                fits::Card::make_string("TELESCOP", "SYNTH-HR"),
            };
            char name[32];
            std::snprintf(name, sizeof name, "hr_%02zu.fits", k);
            fits::write_file((root / "hr" / name).string(), fits::write_fits(img, cards, -32));
            const Transform to_lr = synthetic::hr_geometry(kHrSize, kHrSize, ratio, f.angle, f.cx, f.cy);
            truth["hr"].push_back({{"timestamp", f.time},
                                   {"header_angle", f.angle},
                                   {"hr_to_lr", {to_lr.scale, to_lr.rotation, to_lr.tx, to_lr.ty}}});
        }
        truth["expected_splits"] = {"train", "train", "test", "extended", "extended", "extended", "extended"};

        GeneratorConfig g;
        g.base_features = 8;
        g.num_rrdb = 1;
        g.growth_channels = 4;
        g.scale_factor = 2;
        checkpoint::save_file(synthetic::near_identity_checkpoint(g, seed + 100), root / "psnr.ckpt");
        checkpoint::save_file(synthetic::near_identity_checkpoint(g, seed + 200, 3e-3f), root / "gan.ckpt");

        std::ofstream conf(root / "day.conf");
        conf << "# synthetic day\n"
             << "lr_dir = " << (root / "lr").string() << '\n'
             << "hr_dir = " << (root / "hr").string() << '\n'
             << "rotation_keyword = ROTANGLE\n"
             << "train_start = 2023-08-31T16:30:00\n"
             << "train_end = 2023-08-31T16:34:00\n"
             << "test_start = 2023-08-31T16:34:00\n"
             << "test_end = 2023-08-31T16:36:00\n"
             << "max_shift = 10\n"
             << "scale_factor = 2\n"
             << "normalization_max = 4000\n"
             << "psnr_checkpoint = " << (root / "psnr.ckpt").string() << '\n'
             << "gan_checkpoint = " << (root / "gan.ckpt").string() << '\n'
             << "lambda = 0.005\n"
             << "eta = 0.01\n"
             << "alpha = 0.8\n"
             << "eval_splits = all\n"
             << "spectrum_frames = all\n"
             << "seed = " << seed << '\n';
        std::ofstream(root / "truth.json") << truth.dump(2) << '\n';
        std::cout << root.string() << '\n';
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "make_synthetic_day: " << e.what() << '\n';
        return 1;
    }
}
