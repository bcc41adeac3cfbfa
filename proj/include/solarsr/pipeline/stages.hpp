#pragma once

// Pipeline stages. Every stage reads artifacts of earlier stages from the
// output directory, writes its own artifacts under <output_dir>/<stage>/,
// and finishes with <stage>/provenance.json. Paths recorded in artifacts
// are relative to the output directory; input paths are kept as configured.
//
// Line-delimited records and their field order:
//   ingest/frames.jsonl     source, path, timestamp, width, height, bitpix,
//                           plate_scale, rotation_angle
//   align/shifts.jsonl      index, source_path, aligned_path, timestamp, dx,
//                           dy, score
//   pair/manifest.jsonl     see manifest.hpp
//   pair/warnings.jsonl     code, message
//   infer/outputs.jsonl     pair_id, split, sr_path, width, height, scale
//   eval/metrics.jsonl      record = "pair": pair_id, split, mse, rmse, cc,
//                           pixels, bicubic_mse, bicubic_rmse, bicubic_cc
//                           record = "aggregate" (last line): pairs,
//                           mean_mse, mean_rmse, mean_cc, bicubic_mean_mse,
//                           bicubic_mean_rmse, bicubic_mean_cc
//   spectrum/summary.jsonl  pair_id, split, size, upscale_factor,
//                           high_frequency_ratio, table

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <fftw3.h>
#include <json.hpp>

#include "solarsr/checkpoint_io.hpp"
#include "solarsr/error.hpp"
#include "solarsr/fits_io.hpp"
#include "solarsr/image.hpp"
#include "solarsr/losses_metrics.hpp"
#include "solarsr/pipeline/config.hpp"
#include "solarsr/pipeline/manifest.hpp"
#include "solarsr/pipeline/parallel.hpp"
#include "solarsr/registration.hpp"
#include "solarsr/spectra.hpp"
#include "solarsr/sr_engine.hpp"

#ifndef SOLARSR_VERSION
#define SOLARSR_VERSION "0.0.0"
#endif

namespace solarsr::pipeline {

namespace fs = std::filesystem;

enum class Stage { ingest, align, pair, interp, infer, eval, spectrum, all };

inline const char* to_string(Stage s) {
    switch (s) {
        case Stage::ingest: return "ingest";
        case Stage::align: return "align";
        case Stage::pair: return "pair";
        case Stage::interp: return "interp";
        case Stage::infer: return "infer";
        case Stage::eval: return "eval";
        case Stage::spectrum: return "spectrum";
        case Stage::all: return "all";
    }
    return "?";
}

/// Failure inside a stage, with the record it concerns when there is one.
class StageError : public Error {
public:
    StageError(Stage stage, std::string pair_id, const Error& cause)
        : Error(cause.code(), cause.message()), stage_(stage), pair_id_(std::move(pair_id)) {}

    [[nodiscard]] Stage stage() const noexcept { return stage_; }
    [[nodiscard]] const std::string& pair_id() const noexcept { return pair_id_; }

private:
    Stage stage_;
    std::string pair_id_;
};

/// Machine-readable failure summary, one JSON object.
inline Json error_summary(const Error& e) {
    Json j;
    j["status"] = "error";
    if (const auto* se = dynamic_cast<const StageError*>(&e)) {
        j["stage"] = to_string(se->stage());
        j["pair_id"] = se->pair_id().empty() ? Json(nullptr) : Json(se->pair_id());
    } else {
        j["stage"] = nullptr;
        j["pair_id"] = nullptr;
    }
    j["code"] = std::string(to_string(e.code()));
    j["message"] = e.message();
    return j;
}

namespace detail {

inline std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    require(static_cast<bool>(in), ErrorCode::IoError, "cannot open " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text(const fs::path& p, const std::string& text) {
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::IoError, "cannot write " + p.string());
    out << text;
    require(static_cast<bool>(out), ErrorCode::IoError, "short write to " + p.string());
}

inline void write_bytes(const fs::path& p, const fits::Bytes& bytes) {
    fs::create_directories(p.parent_path());
    fits::write_file(p.string(), bytes);
}

inline std::string jsonl(const std::vector<Json>& rows) {
    std::string s;
    for (const auto& r : rows) s += r.dump() + '\n';
    return s;
}

inline std::vector<Json> read_jsonl(const fs::path& p) {
    std::vector<Json> rows;
    std::istringstream in(read_text(p));
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            rows.push_back(Json::parse(line));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::IoError, p.string() + ": " + e.what());
        }
    }
    return rows;
}

inline std::string file_hash(const fs::path& p) { return hex64(fnv1a(read_text(p))); }

inline bool is_fits_name(const fs::path& p) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext == ".fits" || ext == ".fit" || ext == ".fts";
}

inline std::vector<std::string> list_fits(const std::string& dir) {
    std::vector<std::string> out;
    if (dir.empty()) return out;
    require(fs::is_directory(dir), ErrorCode::IoError, "not a directory: " + dir);
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && is_fits_name(e.path())) out.push_back(e.path().string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

struct LoadedImage {
    Image2D image;
    fits::ObsMetadata meta;
    std::vector<fits::Card> cards;
    int bitpix = -64;
};

inline LoadedImage load_fits(const std::string& path, const fits::MetadataKeys& keys) {
    const auto bytes = fits::read_file(path);
    const auto file = fits::parse_fits(bytes);
    auto [img, meta] = fits::read_image_hdu(file, 0, keys);
    return {std::move(img), meta, file.hdus[0].header.cards(), static_cast<int>(*file.hdus[0].header.get_int("BITPIX"))};
}

// Derived products carry rescaled plate scales, so they are read without
// metadata validation.
inline LoadedImage load_product(const fs::path& path) {
    fits::MetadataKeys keys;
    keys.strict = false;
    keys.plate_scale_keyword = "SRNOKEY";
    return load_fits(path.string(), keys);
}

// Cards for a floating-point product: integer scaling cards are dropped.
inline std::vector<fits::Card> float_cards(const std::vector<fits::Card>& cards) {
    std::vector<fits::Card> out;
    for (const auto& c : cards) {
        const auto k = c.keyword();
        if (k == "BSCALE" || k == "BZERO" || k == "BLANK" || k == "DATAMIN" || k == "DATAMAX") continue;
        out.push_back(c);
    }
    return out;
}

inline void set_card(std::vector<fits::Card>& cards, const fits::Card& card) {
    fits::Header h(cards);
    h.set(card);
    cards = h.cards();
}

// Largest physical value representable by an integer BITPIX file.
inline double bitpix_max(const LoadedImage& f) {
    fits::Header h(f.cards);
    const double bscale = h.get_real("BSCALE").value_or(1.0);
    const double bzero = h.get_real("BZERO").value_or(0.0);
    double raw = 0.0;
    switch (f.bitpix) {
        case 8: raw = 255.0; break;
        case 16: raw = 32767.0; break;
        case 32: raw = 2147483647.0; break;
        default: throw Error(ErrorCode::ConfigError, "normalization_max = bitpix needs integer LR data, got BITPIX " +
                                                         std::to_string(f.bitpix));
    }
    return raw * bscale + bzero;
}

}  // namespace detail

/// Runs pipeline stages for one configuration.
class Runner {
public:
    explicit Runner(PipelineConfig config) : cfg_(std::move(config)), root_(cfg_.output_dir) { validate(cfg_); }

    [[nodiscard]] const PipelineConfig& config() const noexcept { return cfg_; }
    [[nodiscard]] const fs::path& root() const noexcept { return root_; }

    /// Runs one stage, or every stage for Stage::all. With `resume`, a stage
    /// whose provenance matches the current configuration and inputs is
    /// skipped. Returns the stages that actually ran.
    std::vector<Stage> run(Stage stage, bool resume = false) {
        std::vector<Stage> order;
        if (stage == Stage::all) {
            order = {Stage::ingest, Stage::align, Stage::pair};
            if (cfg_.uses_interpolation() && cfg_.checkpoint.empty()) order.push_back(Stage::interp);
            order.insert(order.end(), {Stage::infer, Stage::eval, Stage::spectrum});
        } else {
            order = {stage};
        }
        std::vector<Stage> ran;
        for (Stage s : order) {
            if (resume && up_to_date(s)) continue;
            run_one(s);
            ran.push_back(s);
        }
        return ran;
    }

    /// True when <stage>/provenance.json records the current configuration
    /// hash and every recorded input and output still has its recorded hash.
    [[nodiscard]] bool up_to_date(Stage s) const {
        const auto p = root_ / to_string(s) / "provenance.json";
        if (!fs::exists(p)) return false;
        try {
            const auto j = Json::parse(detail::read_text(p));
            if (j.at("config_hash") != config_hash(cfg_) || j.at("version") != SOLARSR_VERSION) return false;
            for (const char* group : {"inputs", "outputs"}) {
                for (const auto& f : j.at(group)) {
                    const fs::path file = resolve(f.at("path").get<std::string>());
                    if (!fs::exists(file) || detail::file_hash(file) != f.at("fnv1a")) return false;
                }
            }
            return true;
        } catch (const std::exception&) {
            return false;
        }
    }

    void run_one(Stage s) {
        inputs_.clear();
        outputs_.clear();
        try {
            switch (s) {
                case Stage::ingest: ingest(); break;
                case Stage::align: align(); break;
                case Stage::pair: pair(); break;
                case Stage::interp: interp(); break;
                case Stage::infer: infer(); break;
                case Stage::eval: eval(); break;
                case Stage::spectrum: spectrum(); break;
                case Stage::all: run(Stage::all); return;
            }
        } catch (const StageError&) {
            throw;
        } catch (const Error& e) {
            throw StageError(s, "", e);
        } catch (const fs::filesystem_error& e) {
            throw StageError(s, "", Error(ErrorCode::IoError, e.what()));
        }
        write_provenance(s);
    }

private:
    PipelineConfig cfg_;
    fs::path root_;
    std::vector<std::string> inputs_;   // as recorded: relative for artifacts, configured for inputs
    std::vector<std::string> outputs_;  // relative to root_

    [[nodiscard]] fs::path resolve(const std::string& recorded) const {
        const fs::path p(recorded);
        return p.is_absolute() || !fs::exists(root_ / p) ? p : root_ / p;
    }

    // Paths of artifacts inside the output directory are recorded relative
    // to it; external inputs are recorded as configured.
    [[nodiscard]] fs::path artifact(const std::string& rel) const { return root_ / rel; }

    void note_input(const std::string& recorded) { inputs_.push_back(recorded); }

    void emit_text(const std::string& rel, const std::string& text) {
        detail::write_text(artifact(rel), text);
        outputs_.push_back(rel);
    }

    void emit_bytes(const std::string& rel, const fits::Bytes& bytes) {
        detail::write_bytes(artifact(rel), bytes);
        outputs_.push_back(rel);
    }

    // Resets the stage directory so stale artifacts from earlier runs with a
    // different input set cannot survive.
    void fresh_dir(Stage s) {
        const auto d = root_ / to_string(s);
        fs::remove_all(d);
        fs::create_directories(d);
    }

    void write_provenance(Stage s) {
        Json j;
        j["stage"] = to_string(s);
        j["config_hash"] = config_hash(cfg_);
        j["seed"] = cfg_.seed;
        j["version"] = SOLARSR_VERSION;
        j["fftw_version"] = std::string(fftw_version);
        auto files = [this](const std::vector<std::string>& v) {
            Json a = Json::array();
            for (const auto& f : v) a.push_back(Json{{"path", f}, {"fnv1a", detail::file_hash(resolve(f))}});
            return a;
        };
        j["inputs"] = files(inputs_);
        j["outputs"] = files(outputs_);
        detail::write_text(root_ / to_string(s) / "provenance.json", j.dump(2) + '\n');
    }

    std::vector<Json> read_stage_jsonl(const std::string& rel) {
        const auto p = artifact(rel);
        require(fs::exists(p), ErrorCode::IoError, rel + " is missing; run the earlier stage first");
        note_input(rel);
        return detail::read_jsonl(p);
    }

    std::vector<ManifestRecord> read_manifest() {
        std::vector<ManifestRecord> out;
        for (const auto& j : read_stage_jsonl("pair/manifest.jsonl")) out.push_back(record_from_json(j));
        return out;
    }

    template <class F>
    void for_records(Stage s, const std::vector<ManifestRecord>& recs, F&& fn) {
        parallel_for(recs.size(), cfg_.workers, [&](std::size_t i) {
            try {
                fn(i);
            } catch (const Error& e) {
                throw StageError(s, recs[i].pair_id, e);
            }
        });
    }

    // ---------------------------------------------------------------- ingest

    void ingest() {
        const auto lr = detail::list_fits(cfg_.lr_dir);
        const auto hr = detail::list_fits(cfg_.hr_dir);
        require(!lr.empty(), ErrorCode::EmptyInputs, "no FITS files in lr_dir '" + cfg_.lr_dir + "'");
        struct Entry {
            fits::Source source;
            std::string path;
            Json row;
            Timestamp ts;
        };
        std::vector<Entry> entries;
        for (const auto& p : lr) entries.push_back({fits::Source::LR_GONG, p, {}, {}});
        for (const auto& p : hr) entries.push_back({fits::Source::HR_GST, p, {}, {}});
        parallel_for(entries.size(), cfg_.workers, [&](std::size_t i) {
            auto& e = entries[i];
            try {
                const auto f = detail::load_fits(e.path, cfg_.metadata_keys(e.source));
                e.ts = f.meta.timestamp;
                Json j;
                j["source"] = std::string(fits::to_string(e.source));
                j["path"] = e.path;
                j["timestamp"] = format_timestamp(f.meta.timestamp);
                j["width"] = f.image.width();
                j["height"] = f.image.height();
                j["bitpix"] = f.bitpix;
                j["plate_scale"] = f.meta.plate_scale;
                j["rotation_angle"] = e.source == fits::Source::HR_GST ? Json(f.meta.rotation_angle) : Json(nullptr);
                e.row = std::move(j);
            } catch (const Error& err) {
                throw Error(err.code(), e.path + ": " + err.message());
            }
        });
        std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
            if (a.source != b.source) return a.source == fits::Source::LR_GONG;
            if (a.ts != b.ts) return a.ts < b.ts;
            return a.path < b.path;
        });
        std::vector<Json> rows;
        for (auto& e : entries) {
            note_input(e.path);
            rows.push_back(std::move(e.row));
        }
        fresh_dir(Stage::ingest);
        emit_text("ingest/frames.jsonl", detail::jsonl(rows));
    }

    // ----------------------------------------------------------------- align

    void align() {
        std::vector<Json> lr_rows;
        for (auto& j : read_stage_jsonl("ingest/frames.jsonl")) {
            if (j.at("source") == "LR_GONG") lr_rows.push_back(std::move(j));
        }
        require(!lr_rows.empty(), ErrorCode::EmptyInputs, "no LR frames ingested");
        std::vector<detail::LoadedImage> files(lr_rows.size());
        parallel_for(lr_rows.size(), cfg_.workers, [&](std::size_t i) {
            const auto path = lr_rows[i].at("path").get<std::string>();
            files[i] = detail::load_fits(path, cfg_.metadata_keys(fits::Source::LR_GONG));
            if (cfg_.lr_roi) {
                const Rect& r = *cfg_.lr_roi;
                require(r.x + r.width <= files[i].image.width() && r.y + r.height <= files[i].image.height(),
                        ErrorCode::ConfigError, "lr_roi exceeds frame " + path);
                files[i].image = files[i].image.crop(r);
            }
        });
        std::vector<Image2D> frames;
        for (const auto& f : files) {
            require(f.image.width() == files[0].image.width() && f.image.height() == files[0].image.height(),
                    ErrorCode::ShapeMismatch, "LR frames differ in size");
            frames.push_back(f.image);
        }
        const auto shifts = align_sequence(frames, cfg_.max_shift, cfg_.align_passes, cfg_.shift_search);

        fresh_dir(Stage::align);
        std::vector<Json> rows;
        for (std::size_t i = 0; i < files.size(); ++i) {
            const std::string path = lr_rows[i].at("path").get<std::string>();
            note_input(path);
            char name[32];
            std::snprintf(name, sizeof name, "align/lr_%04zu.fits", i);
            auto cards = files[i].cards;
            detail::set_card(cards, fits::Card::make_int("ALIGNDX", shifts[i].dx, "applied shift is -ALIGNDX"));
            detail::set_card(cards, fits::Card::make_int("ALIGNDY", shifts[i].dy, "applied shift is -ALIGNDY"));
            if (cfg_.lr_roi) {
                detail::set_card(cards, fits::Card::make_int("ROIX0", cfg_.lr_roi->x));
                detail::set_card(cards, fits::Card::make_int("ROIY0", cfg_.lr_roi->y));
            }
            const Image2D aligned = shift_image(frames[i], -shifts[i].dx, -shifts[i].dy);
            emit_bytes(name, fits::write_fits(aligned, cards, files[i].bitpix));
            Json j;
            j["index"] = i;
            j["source_path"] = path;
            j["aligned_path"] = name;
            j["timestamp"] = lr_rows[i].at("timestamp");
            j["dx"] = shifts[i].dx;
            j["dy"] = shifts[i].dy;
            j["score"] = shifts[i].score;
            rows.push_back(std::move(j));
        }
        emit_text("align/shifts.jsonl", detail::jsonl(rows));
    }

    // ------------------------------------------------------------------ pair

    void pair() {
        std::vector<FrameInfo> lr, hr;
        for (const auto& j : read_stage_jsonl("align/shifts.jsonl")) {
            lr.push_back({j.at("aligned_path").get<std::string>(), parse_timestamp_or_throw(j.at("timestamp").get<std::string>())});
        }
        for (const auto& j : read_stage_jsonl("ingest/frames.jsonl")) {
            if (j.at("source") == "HR_GST") {
                hr.push_back({j.at("path").get<std::string>(), parse_timestamp_or_throw(j.at("timestamp").get<std::string>())});
            }
        }
        require(!hr.empty(), ErrorCode::EmptyInputs, "no HR frames ingested");
        SplitWindows w{cfg_.train_start, cfg_.train_end, cfg_.test_start, cfg_.test_end,
                       std::chrono::milliseconds(static_cast<long long>(std::llround(cfg_.max_gap_seconds * 1000.0)))};
        auto split = make_splits(lr, hr, w);
        auto& recs = split.records;

        fresh_dir(Stage::pair);
        std::vector<std::size_t> paired, extended;
        for (std::size_t i = 0; i < recs.size(); ++i) (recs[i].split == Split::extended ? extended : paired).push_back(i);
        require(!paired.empty(), ErrorCode::EmptyInputs, "no HR frame was paired inside the split windows");

        const auto lr_keys = cfg_.metadata_keys(fits::Source::LR_GONG);
        const auto hr_keys = cfg_.metadata_keys(fits::Source::HR_GST);
        std::vector<fits::Bytes> lr_out(recs.size()), hr_out(recs.size());

        std::vector<ManifestRecord> pair_recs;
        for (auto i : paired) pair_recs.push_back(recs[i]);
        for_records(Stage::pair, pair_recs, [&](std::size_t k) {
            ManifestRecord& r = recs[paired[k]];
            const auto lf = detail::load_fits(artifact(r.lr_path).string(), lr_keys);
            const auto hf = detail::load_fits(*r.hr_path, hr_keys);
            auto opt = cfg_.coalign_options();
            opt.seed = cfg_.seed + paired[k];
            const AlignedPair ap = coalign_pair(lf.image, lf.meta, hf.image, hf.meta, opt);
            r.crop = ap.crop;
            r.transform = ap.transform;
            r.residual_score = ap.residual_score;
            r.matches = ap.matches;
            r.inliers = ap.inliers;
            r.lr_crop_path = "pair/" + r.pair_id + "_lr.fits";
            r.hr_crop_path = "pair/" + r.pair_id + "_hr.fits";

            auto lcards = lf.cards;
            detail::set_card(lcards, fits::Card::make_int("CROPX0", ap.crop.x));
            detail::set_card(lcards, fits::Card::make_int("CROPY0", ap.crop.y));
            lr_out[paired[k]] = fits::write_fits(ap.lr, lcards, lf.bitpix);

            auto hcards = detail::float_cards(hf.cards);
            const double ps = lf.meta.plate_scale / ap.hr_scale;
            detail::set_card(hcards, fits::Card::make_real(cfg_.plate_scale_keyword, ps));
            if (fits::Header(hcards).find("CDELT2")) detail::set_card(hcards, fits::Card::make_real("CDELT2", ps));
            detail::set_card(hcards, fits::Card::make_real(cfg_.rotation_keyword, 0.0, "derotated onto the LR grid"));
            detail::set_card(hcards, fits::Card::make_real("RESIDUAL", ap.residual_score));
            hr_out[paired[k]] = fits::write_fits(ap.hr, hcards, cfg_.output_bitpix);
        });

        // Extended frames reuse the crop of the last pair, shrunk to the
        // part that is valid in each frame.
        const Rect last_crop = *recs[paired.back()].crop;
        std::vector<ManifestRecord> ext_recs;
        for (auto i : extended) ext_recs.push_back(recs[i]);
        for_records(Stage::pair, ext_recs, [&](std::size_t k) {
            ManifestRecord& r = recs[extended[k]];
            const auto lf = detail::load_fits(artifact(r.lr_path).string(), lr_keys);
            const Image2D sub = lf.image.crop(last_crop);
            Rect inner = largest_valid_rect(sub);
            require(inner.area() > 0, ErrorCode::EmptyValidRegion, "no valid pixels inside the pair crop");
            const Rect crop{last_crop.x + inner.x, last_crop.y + inner.y, inner.width, inner.height};
            r.lr_crop_path = "pair/" + r.pair_id + "_lr.fits";
            auto lcards = lf.cards;
            detail::set_card(lcards, fits::Card::make_int("CROPX0", crop.x));
            detail::set_card(lcards, fits::Card::make_int("CROPY0", crop.y));
            lr_out[extended[k]] = fits::write_fits(lf.image.crop(crop), lcards, lf.bitpix);
            r.crop = crop;
        });

        std::vector<Json> rows, warn_rows;
        for (std::size_t i = 0; i < recs.size(); ++i) {
            note_input(recs[i].lr_path);
            if (recs[i].hr_path) note_input(*recs[i].hr_path);
            emit_bytes(recs[i].lr_crop_path, lr_out[i]);
            if (recs[i].hr_crop_path) emit_bytes(*recs[i].hr_crop_path, hr_out[i]);
            rows.push_back(to_json(recs[i]));
        }
        for (const auto& wn : split.warnings) warn_rows.push_back(Json{{"code", wn.code}, {"message", wn.message}});
        emit_text("pair/manifest.jsonl", detail::jsonl(rows));
        emit_text("pair/warnings.jsonl", detail::jsonl(warn_rows));
    }

    // ---------------------------------------------------------------- interp

    void interp() {
        require(cfg_.uses_interpolation(), ErrorCode::ConfigError, "interp needs psnr_checkpoint and gan_checkpoint");
        for (const auto* p : {&cfg_.psnr_checkpoint, &cfg_.gan_checkpoint}) {
            require(fs::exists(*p), ErrorCode::ConfigError, "checkpoint not found: " + *p);
        }
        const auto psnr = checkpoint::load_file(cfg_.psnr_checkpoint);
        const auto gan = checkpoint::load_file(cfg_.gan_checkpoint);
        const auto blended = interpolate_checkpoints(psnr, gan, cfg_.alpha);
        note_input(cfg_.psnr_checkpoint);
        note_input(cfg_.gan_checkpoint);
        fresh_dir(Stage::interp);
        const std::string rel = "interp/interpolated.ckpt";
        const auto bytes = checkpoint::save(blended);
        detail::write_bytes(artifact(rel), fits::Bytes(bytes.begin(), bytes.end()));
        outputs_.push_back(rel);
    }

    // ----------------------------------------------------------------- infer

    // Resolves and fully validates the generator before any file is read or
    // written by the stage.
    std::pair<std::string, Checkpoint> inference_checkpoint() const {
        std::string path;
        if (!cfg_.checkpoint.empty()) {
            path = cfg_.checkpoint;
        } else if (cfg_.uses_interpolation()) {
            path = (root_ / "interp" / "interpolated.ckpt").string();
        } else {
            throw Error(ErrorCode::ConfigError, "no checkpoint configured (checkpoint or psnr_checkpoint + gan_checkpoint)");
        }
        require(fs::is_regular_file(path), ErrorCode::ConfigError, "checkpoint not found: " + path);
        Checkpoint ckpt = checkpoint::load_file(path);
        validate_checkpoint(ckpt);
        const auto& a = ckpt.arch();
        require(a.in_channels == 1 && a.out_channels == 1, ErrorCode::ConfigError, "checkpoint must map 1 channel to 1 channel");
        require(a.scale_factor == cfg_.scale_factor, ErrorCode::ConfigError,
                "checkpoint scale " + std::to_string(a.scale_factor) + " differs from scale_factor " +
                    std::to_string(cfg_.scale_factor));
        return {path, std::move(ckpt)};
    }

    void infer() {
        auto ckpt = inference_checkpoint().second;
        const auto recs = read_manifest();
        note_input(cfg_.checkpoint.empty() ? std::string("interp/interpolated.ckpt") : cfg_.checkpoint);
        fresh_dir(Stage::infer);
        std::vector<fits::Bytes> out(recs.size());
        std::vector<Json> rows(recs.size());
        for_records(Stage::infer, recs, [&](std::size_t i) {
            const auto& r = recs[i];
            const auto lf = detail::load_product(artifact(r.lr_crop_path));
            const double norm = cfg_.normalization.from_bitpix ? detail::bitpix_max(lf) : cfg_.normalization.value;
            const Tensor x = image_to_tensor(lf.image, norm);
            const Tensor y = cfg_.tile_size > 0 ? generator_forward_tiled(x, ckpt, cfg_.tile_size, cfg_.tile_overlap)
                                                : generator_forward(x, ckpt);
            const Image2D sr = tensor_to_image(y, norm, &lf.image);
            auto cards = detail::float_cards(lf.cards);
            const double ps = lf.meta.plate_scale / cfg_.scale_factor;
            const fits::Header h(lf.cards);
            if (auto v = h.get_real(cfg_.plate_scale_keyword)) {
                detail::set_card(cards, fits::Card::make_real(cfg_.plate_scale_keyword, *v / cfg_.scale_factor));
            } else {
                detail::set_card(cards, fits::Card::make_real(cfg_.plate_scale_keyword, ps));
            }
            if (auto v = h.get_real("CDELT2"); v && cfg_.plate_scale_keyword != "CDELT2") {
                detail::set_card(cards, fits::Card::make_real("CDELT2", *v / cfg_.scale_factor));
            }
            detail::set_card(cards, fits::Card::make_int("SRSCALE", cfg_.scale_factor, "super-resolution factor"));
            detail::set_card(cards, fits::Card::make_real("SRNORM", norm, "intensity normalization"));
            out[i] = fits::write_fits(sr, cards, cfg_.output_bitpix);
            Json j;
            j["pair_id"] = r.pair_id;
            j["split"] = to_string(r.split);
            j["sr_path"] = "infer/" + r.pair_id + "_sr.fits";
            j["width"] = sr.width();
            j["height"] = sr.height();
            j["scale"] = cfg_.scale_factor;
            rows[i] = std::move(j);
        });
        for (std::size_t i = 0; i < recs.size(); ++i) {
            note_input(recs[i].lr_crop_path);
            emit_bytes(rows[i].at("sr_path").get<std::string>(), out[i]);
        }
        emit_text("infer/outputs.jsonl", detail::jsonl(rows));
    }

    // ------------------------------------------------------------------ eval

    [[nodiscard]] bool evaluated(Split s) const {
        if (s == Split::extended) return false;
        if (cfg_.eval_splits == "all") return true;
        return cfg_.eval_splits == to_string(s);
    }

    void eval() {
        const auto all = read_manifest();
        read_stage_jsonl("infer/outputs.jsonl");
        std::vector<ManifestRecord> recs;
        for (const auto& r : all) {
            if (evaluated(r.split)) recs.push_back(r);
        }
        require(!recs.empty(), ErrorCode::EmptyInput, "no pairs in eval_splits = " + cfg_.eval_splits);
        std::vector<ImageMetrics> sr_m(recs.size()), bic_m(recs.size());
        for_records(Stage::eval, recs, [&](std::size_t i) {
            const auto& r = recs[i];
            const auto sr = detail::load_product(artifact("infer/" + r.pair_id + "_sr.fits"));
            const auto hr = detail::load_product(artifact(*r.hr_crop_path));
            const auto lr = detail::load_product(artifact(r.lr_crop_path));
            sr_m[i] = image_metrics(sr.image, hr.image);
            bic_m[i] = image_metrics(bicubic_upscale(lr.image, cfg_.scale_factor), hr.image);
        });
        fresh_dir(Stage::eval);
        std::vector<Json> rows;
        for (std::size_t i = 0; i < recs.size(); ++i) {
            note_input("infer/" + recs[i].pair_id + "_sr.fits");
            note_input(*recs[i].hr_crop_path);
            Json j;
            j["record"] = "pair";
            j["pair_id"] = recs[i].pair_id;
            j["split"] = to_string(recs[i].split);
            j["mse"] = sr_m[i].mse;
            j["rmse"] = sr_m[i].rmse;
            j["cc"] = sr_m[i].cc;
            j["pixels"] = sr_m[i].pixels;
            j["bicubic_mse"] = bic_m[i].mse;
            j["bicubic_rmse"] = bic_m[i].rmse;
            j["bicubic_cc"] = bic_m[i].cc;
            rows.push_back(std::move(j));
        }
        const auto agg = aggregate_metrics(sr_m);
        const auto bagg = aggregate_metrics(bic_m);
        Json a;
        a["record"] = "aggregate";
        a["pairs"] = recs.size();
        a["mean_mse"] = agg.mean_mse;
        a["mean_rmse"] = agg.mean_rmse;
        a["mean_cc"] = agg.mean_cc;
        a["bicubic_mean_mse"] = bagg.mean_mse;
        a["bicubic_mean_rmse"] = bagg.mean_rmse;
        a["bicubic_mean_cc"] = bagg.mean_cc;
        rows.push_back(std::move(a));
        emit_text("eval/metrics.jsonl", detail::jsonl(rows));
    }

    // -------------------------------------------------------------- spectrum

    [[nodiscard]] bool spectrum_selected(Split s) const {
        const auto& f = cfg_.spectrum_frames;
        if (f == "all") return true;
        if (f == "pairs") return s != Split::extended;
        if (f == "extended") return s == Split::extended;
        return s == Split::test;
    }

    static std::string format_g(double v) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return buf;
    }

    void spectrum() {
        const auto all = read_manifest();
        read_stage_jsonl("infer/outputs.jsonl");
        std::vector<ManifestRecord> recs;
        for (const auto& r : all) {
            if (spectrum_selected(r.split)) recs.push_back(r);
        }
        require(!recs.empty(), ErrorCode::EmptyInput, "no frames selected by spectrum_frames = " + cfg_.spectrum_frames);
        std::vector<SpectraReport> reports(recs.size());
        for_records(Stage::spectrum, recs, [&](std::size_t i) {
            const auto sr = detail::load_product(artifact("infer/" + recs[i].pair_id + "_sr.fits"));
            const auto lr = detail::load_product(artifact(recs[i].lr_crop_path));
            reports[i] = spectra_report(sr.image, lr.image, cfg_.spectra_window);
        });
        fresh_dir(Stage::spectrum);
        std::vector<Json> rows;
        for (std::size_t i = 0; i < recs.size(); ++i) {
            const auto& rep = reports[i];
            note_input("infer/" + recs[i].pair_id + "_sr.fits");
            note_input(recs[i].lr_crop_path);
            std::string csv = "# pair_id=" + recs[i].pair_id + " split=" + to_string(recs[i].split) +
                              " size=" + std::to_string(rep.size) + " upscale_factor=" + std::to_string(rep.upscale_factor) +
                              " high_frequency_ratio=" + format_g(rep.high_frequency_ratio) + '\n';
            csv += "bin,bin_center,sr_power,lr_power,log10_sr_power,log10_lr_power\n";
            for (std::size_t k = 0; k < rep.sr.power.size(); ++k) {
                const double a = rep.sr.power[k], b = rep.lr.power[k];
                csv += std::to_string(rep.sr.bin[k]) + ',' + format_g(rep.sr.bin_center[k]) + ',' + format_g(a) + ',' +
                       format_g(b) + ',' + (a > 0 ? format_g(std::log10(a)) : "nan") + ',' +
                       (b > 0 ? format_g(std::log10(b)) : "nan") + '\n';
            }
            const std::string rel = "spectrum/" + recs[i].pair_id + "_spectrum.csv";
            emit_text(rel, csv);
            Json j;
            j["pair_id"] = recs[i].pair_id;
            j["split"] = to_string(recs[i].split);
            j["size"] = rep.size;
            j["upscale_factor"] = rep.upscale_factor;
            j["high_frequency_ratio"] = rep.high_frequency_ratio;
            j["table"] = rel;
            rows.push_back(std::move(j));
        }
        emit_text("spectrum/summary.jsonl", detail::jsonl(rows));
    }
};

}  // namespace solarsr::pipeline
