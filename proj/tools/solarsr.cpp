// solarsr: pipeline driver.
//
//   solarsr [--config FILE] [--lr-dir D] [--hr-dir D] [--output-dir D]
//           [--workers N] [--seed S] [--resume] <stage>
//
// stage: ingest | align | pair | interp [--alpha A] | infer | eval |
//        spectrum | all
// The config path falls back to $SOLARSR_CONFIG. On success one JSON line
// is printed to stdout; on failure a JSON error summary goes to stderr and
// the exit status is 1 (2 for usage errors).

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "solarsr/pipeline/stages.hpp"

namespace sp = solarsr::pipeline;

int main(int argc, char** argv) {
    CLI::App app{"Solar image super-resolution pipeline"};
    app.set_version_flag("--version", std::string(SOLARSR_VERSION));
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::string> lr_dir, hr_dir, output_dir;
    std::optional<int> workers;
    std::optional<std::uint64_t> seed;
    std::optional<double> alpha;
    bool resume = false;

    app.add_option("-c,--config", config_path, "configuration file (default: $" + std::string(sp::kConfigEnvVar) + ")");
    app.add_option("--lr-dir", lr_dir, "directory of LR FITS frames");
    app.add_option("--hr-dir", hr_dir, "directory of HR FITS frames");
    app.add_option("-o,--output-dir", output_dir, "directory receiving all artifacts");
    app.add_option("-j,--workers", workers, "worker threads")->check(CLI::PositiveNumber);
    app.add_option("--seed", seed, "random seed");
    app.add_flag("--resume", resume, "skip stages whose provenance is current");

    sp::Stage stage = sp::Stage::all;
    for (auto s : {sp::Stage::ingest, sp::Stage::align, sp::Stage::pair, sp::Stage::interp, sp::Stage::infer,
                   sp::Stage::eval, sp::Stage::spectrum, sp::Stage::all}) {
        auto* sub = app.add_subcommand(sp::to_string(s));
        sub->callback([&stage, s] { stage = s; });
        if (s == sp::Stage::interp || s == sp::Stage::all) {
            sub->add_option("--alpha", alpha, "interpolation weight of the GAN checkpoint")->check(CLI::Range(0.0, 1.0));
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (config_path.empty()) {
            if (const char* env = std::getenv(sp::kConfigEnvVar)) config_path = env;
        }
        if (config_path.empty()) {
            throw solarsr::Error(solarsr::ErrorCode::ConfigError,
                                 "no configuration: pass --config or set " + std::string(sp::kConfigEnvVar));
        }
        auto cfg = sp::load_config(config_path);
        if (lr_dir) cfg.lr_dir = *lr_dir;
        if (hr_dir) cfg.hr_dir = *hr_dir;
        if (output_dir) cfg.output_dir = *output_dir;
        if (workers) cfg.workers = *workers;
        if (seed) cfg.seed = *seed;
        if (alpha) cfg.alpha = *alpha;

        sp::Runner runner(cfg);
        const auto ran = runner.run(stage, resume);
        sp::Json ok;
        ok["status"] = "ok";
        ok["stage"] = sp::to_string(stage);
        ok["config_hash"] = sp::config_hash(runner.config());
        ok["ran"] = sp::Json::array();
        for (auto s : ran) ok["ran"].push_back(sp::to_string(s));
        ok["output_dir"] = runner.config().output_dir;
        std::cout << ok.dump() << '\n';
        return 0;
    } catch (const solarsr::Error& e) {
        std::cerr << sp::error_summary(e).dump() << '\n';
    } catch (const std::exception& e) {
        sp::Json j{{"status", "error"}, {"stage", nullptr}, {"pair_id", nullptr}, {"code", "Internal"}, {"message", e.what()}};
        std::cerr << j.dump() << '\n';
    }
    return 1;
}
