#pragma once

// Pipeline configuration: one `key = value` per line, `#` starts a comment.
// Unknown keys, duplicate keys and malformed values are rejected. Keys with
// no safe default (loss weights, interpolation alpha, rotation keyword,
// split windows, normalization) must be present.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "solarsr/error.hpp"
#include "solarsr/image.hpp"
#include "solarsr/registration.hpp"
#include "solarsr/spectra.hpp"
#include "solarsr/timeutil.hpp"

namespace solarsr::pipeline {

inline constexpr const char* kConfigEnvVar = "SOLARSR_CONFIG";

struct Normalization {
    bool from_bitpix = false;  // max representable physical value of the LR file
    double value = 0.0;
};

struct PipelineConfig {
    std::string lr_dir;
    std::string hr_dir;
    std::string output_dir;

    std::string rotation_keyword;
    std::string timestamp_keyword = "DATE-OBS";
    std::string time_keyword = "TIME-OBS";
    std::string plate_scale_keyword = "CDELT1";
    bool strict_metadata = true;

    std::optional<Rect> lr_roi;
    int max_shift = kDefaultMaxShift;
    int align_passes = 2;
    ShiftSearch shift_search = ShiftSearch::fft;

    double sift_ratio = 0.75;
    double sift_contrast = 0.03;
    double sift_edge = 10.0;
    int sift_octaves = 4;
    int ransac_iterations = 1000;
    double ransac_inlier_tol = 2.0;
    double residual_floor = 0.3;
    bool refine = true;
    double manual_dx = 0.0;
    double manual_dy = 0.0;

    double max_gap_seconds = 60.0;
    Timestamp train_start{};
    Timestamp train_end{};
    Timestamp test_start{};
    Timestamp test_end{};

    int scale_factor = 4;
    Normalization normalization{};
    std::string checkpoint;
    std::string psnr_checkpoint;
    std::string gan_checkpoint;
    int tile_size = 0;
    int tile_overlap = 8;
    int output_bitpix = -32;

    double lambda = 0.0;
    double eta = 0.0;
    double alpha = 0.0;

    Window spectra_window = Window::none;
    std::string spectrum_frames = "all";  // all | pairs | extended | test
    std::string eval_splits = "test";     // test | train | all

    std::uint64_t seed = 0;
    int workers = 1;

    [[nodiscard]] bool uses_interpolation() const { return !psnr_checkpoint.empty() || !gan_checkpoint.empty(); }

    [[nodiscard]] CoalignOptions coalign_options() const {
        CoalignOptions o;
        o.manual_dx = manual_dx;
        o.manual_dy = manual_dy;
        o.ratio = sift_ratio;
        o.sift.contrast_threshold = sift_contrast;
        o.sift.edge_ratio = sift_edge;
        o.sift.octaves = sift_octaves;
        o.inlier_tol = ransac_inlier_tol;
        o.ransac_iterations = ransac_iterations;
        o.refine = refine;
        o.seed = seed;
        o.residual_floor = residual_floor;
        o.hr_output_scale = scale_factor;
        return o;
    }

    [[nodiscard]] fits::MetadataKeys metadata_keys(fits::Source source) const {
        fits::MetadataKeys k;
        k.source = source;
        k.timestamp_keyword = timestamp_keyword;
        k.time_keyword = time_keyword;
        k.plate_scale_keyword = plate_scale_keyword;
        k.strict = strict_metadata;
        if (source == fits::Source::HR_GST) k.rotation_keyword = rotation_keyword;
        return k;
    }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] inline void config_error(const std::string& key, const std::string& msg) {
    throw Error(ErrorCode::ConfigError, key + ": " + msg);
}

inline double to_double(const std::string& key, std::string_view v) {
    double out = 0.0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size() || !std::isfinite(out)) config_error(key, "expected a number, got '" + std::string(v) + "'");
    return out;
}

inline long long to_int(const std::string& key, std::string_view v) {
    long long out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size()) config_error(key, "expected an integer, got '" + std::string(v) + "'");
    return out;
}

inline bool to_bool(const std::string& key, std::string_view v) {
    if (v == "true" || v == "yes" || v == "1") return true;
    if (v == "false" || v == "no" || v == "0") return false;
    config_error(key, "expected true or false, got '" + std::string(v) + "'");
}

inline Timestamp to_time(const std::string& key, std::string_view v) {
    auto t = parse_timestamp(v);
    if (!t) config_error(key, "unparseable timestamp '" + std::string(v) + "'");
    return *t;
}

inline std::string format_double(double v) {
    char buf[64];
    const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

}  // namespace detail

/// Parses configuration text. Paths are kept as written.
inline PipelineConfig parse_config(std::string_view text) {
    std::map<std::string, std::string> kv;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view s = line;
        if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
        s = detail::trim(s);
        if (s.empty()) continue;
        const auto eq = s.find('=');
        if (eq == std::string_view::npos) throw Error(ErrorCode::ConfigError, "line " + std::to_string(lineno) + ": expected key = value");
        const std::string key(detail::trim(s.substr(0, eq)));
        const std::string value(detail::trim(s.substr(eq + 1)));
        if (key.empty()) throw Error(ErrorCode::ConfigError, "line " + std::to_string(lineno) + ": empty key");
        if (!kv.emplace(key, value).second) detail::config_error(key, "duplicate key");
    }

    PipelineConfig c;
    std::set<std::string> seen;
    auto take = [&](const std::string& key) -> std::optional<std::string> {
        seen.insert(key);
        auto it = kv.find(key);
        if (it == kv.end()) return std::nullopt;
        return it->second;
    };
    auto required = [&](const std::string& key) {
        auto v = take(key);
        if (!v || v->empty()) detail::config_error(key, "required and has no default");
        return *v;
    };
    auto str = [&](const std::string& key, std::string& out) {
        if (auto v = take(key)) out = *v;
    };
    auto num = [&](const std::string& key, double& out) {
        if (auto v = take(key)) out = detail::to_double(key, *v);
    };
    auto integer = [&](const std::string& key, int& out) {
        if (auto v = take(key)) out = static_cast<int>(detail::to_int(key, *v));
    };
    auto boolean = [&](const std::string& key, bool& out) {
        if (auto v = take(key)) out = detail::to_bool(key, *v);
    };

    str("lr_dir", c.lr_dir);
    str("hr_dir", c.hr_dir);
    str("output_dir", c.output_dir);

    c.rotation_keyword = required("rotation_keyword");
    str("timestamp_keyword", c.timestamp_keyword);
    str("time_keyword", c.time_keyword);
    str("plate_scale_keyword", c.plate_scale_keyword);
    boolean("strict_metadata", c.strict_metadata);

    if (auto v = take("lr_roi"); v && !v->empty()) {
        std::vector<int> parts;
        std::string_view rest = *v;
        while (!rest.empty()) {
            const auto comma = rest.find(',');
            parts.push_back(static_cast<int>(detail::to_int("lr_roi", detail::trim(rest.substr(0, comma)))));
            rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
        }
        if (parts.size() != 4 || parts[0] < 0 || parts[1] < 0 || parts[2] <= 0 || parts[3] <= 0) {
            detail::config_error("lr_roi", "expected x, y, width, height");
        }
        c.lr_roi = Rect{parts[0], parts[1], parts[2], parts[3]};
    }
    integer("max_shift", c.max_shift);
    integer("align_passes", c.align_passes);
    if (auto v = take("shift_search")) {
        if (*v == "fft") c.shift_search = ShiftSearch::fft;
        else if (*v == "exhaustive") c.shift_search = ShiftSearch::exhaustive;
        else detail::config_error("shift_search", "expected fft or exhaustive");
    }

    num("sift_ratio", c.sift_ratio);
    num("sift_contrast", c.sift_contrast);
    num("sift_edge", c.sift_edge);
    integer("sift_octaves", c.sift_octaves);
    integer("ransac_iterations", c.ransac_iterations);
    num("ransac_inlier_tol", c.ransac_inlier_tol);
    num("residual_floor", c.residual_floor);
    boolean("refine", c.refine);
    num("manual_dx", c.manual_dx);
    num("manual_dy", c.manual_dy);

    num("max_gap_seconds", c.max_gap_seconds);
    c.train_start = detail::to_time("train_start", required("train_start"));
    c.train_end = detail::to_time("train_end", required("train_end"));
    c.test_start = detail::to_time("test_start", required("test_start"));
    c.test_end = detail::to_time("test_end", required("test_end"));

    integer("scale_factor", c.scale_factor);
    {
        const auto v = required("normalization_max");
        if (v == "bitpix") c.normalization.from_bitpix = true;
        else c.normalization.value = detail::to_double("normalization_max", v);
    }
    str("checkpoint", c.checkpoint);
    str("psnr_checkpoint", c.psnr_checkpoint);
    str("gan_checkpoint", c.gan_checkpoint);
    integer("tile_size", c.tile_size);
    integer("tile_overlap", c.tile_overlap);
    integer("output_bitpix", c.output_bitpix);

    c.lambda = detail::to_double("lambda", required("lambda"));
    c.eta = detail::to_double("eta", required("eta"));
    c.alpha = detail::to_double("alpha", required("alpha"));

    if (auto v = take("spectra_window")) {
        if (*v == "none") c.spectra_window = Window::none;
        else if (*v == "hann") c.spectra_window = Window::hann;
        else detail::config_error("spectra_window", "expected none or hann");
    }
    str("spectrum_frames", c.spectrum_frames);
    str("eval_splits", c.eval_splits);

    if (auto v = take("seed")) c.seed = static_cast<std::uint64_t>(detail::to_int("seed", *v));
    integer("workers", c.workers);

    for (const auto& [key, value] : kv) {
        if (!seen.contains(key)) detail::config_error(key, "unknown key");
    }
    return c;
}

/// Range and consistency checks, run after command-line overrides.
inline void validate(const PipelineConfig& c) {
    auto check = [](bool ok, const std::string& key, const std::string& msg) {
        if (!ok) detail::config_error(key, msg);
    };
    check(!c.rotation_keyword.empty(), "rotation_keyword", "required");
    check(c.max_shift >= 0, "max_shift", "must be >= 0");
    check(c.align_passes >= 1, "align_passes", "must be >= 1");
    check(c.sift_ratio > 0.0 && c.sift_ratio <= 1.0, "sift_ratio", "must lie in (0, 1]");
    check(c.sift_contrast >= 0.0, "sift_contrast", "must be >= 0");
    check(c.sift_edge > 1.0, "sift_edge", "must be > 1");
    check(c.sift_octaves >= 1, "sift_octaves", "must be >= 1");
    check(c.ransac_iterations >= 1, "ransac_iterations", "must be >= 1");
    check(c.ransac_inlier_tol > 0.0, "ransac_inlier_tol", "must be > 0");
    check(c.residual_floor >= -1.0 && c.residual_floor <= 1.0, "residual_floor", "must lie in [-1, 1]");
    check(c.max_gap_seconds >= 0.0, "max_gap_seconds", "must be >= 0");
    check(c.train_start <= c.train_end && c.train_end <= c.test_start && c.test_start <= c.test_end, "train_start",
          "split boundaries must be ordered train_start <= train_end <= test_start <= test_end");
    check(c.scale_factor >= 1 && c.scale_factor <= 8 && (c.scale_factor & (c.scale_factor - 1)) == 0, "scale_factor",
          "must be 1, 2, 4 or 8");
    check(c.normalization.from_bitpix || c.normalization.value > 0.0, "normalization_max", "must be > 0 or 'bitpix'");
    check(c.tile_size >= 0, "tile_size", "must be >= 0");
    check(c.tile_overlap >= 0, "tile_overlap", "must be >= 0");
    check(c.output_bitpix == -32 || c.output_bitpix == -64, "output_bitpix", "must be -32 or -64");
    check(c.lambda >= 0.0, "lambda", "must be >= 0");
    check(c.eta >= 0.0, "eta", "must be >= 0");
    check(c.alpha >= 0.0 && c.alpha <= 1.0, "alpha", "must lie in [0, 1]");
    check(c.psnr_checkpoint.empty() == c.gan_checkpoint.empty(), "psnr_checkpoint",
          "psnr_checkpoint and gan_checkpoint must be given together");
    check(c.spectrum_frames == "all" || c.spectrum_frames == "pairs" || c.spectrum_frames == "extended" ||
              c.spectrum_frames == "test",
          "spectrum_frames", "expected all, pairs, extended or test");
    check(c.eval_splits == "test" || c.eval_splits == "train" || c.eval_splits == "all", "eval_splits",
          "expected test, train or all");
    check(c.workers >= 1, "workers", "must be >= 1");
    check(!c.output_dir.empty(), "output_dir", "required (config or --output-dir)");
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::ConfigError, "cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

/// Canonical text of every setting that influences artifact content.
/// Output location and worker count are excluded.
inline std::string canonical_text(const PipelineConfig& c) {
    using detail::format_double;
    std::ostringstream o;
    auto line = [&o](const char* k, const std::string& v) { o << k << '=' << v << '\n'; };
    line("lr_dir", c.lr_dir);
    line("hr_dir", c.hr_dir);
    line("rotation_keyword", c.rotation_keyword);
    line("timestamp_keyword", c.timestamp_keyword);
    line("time_keyword", c.time_keyword);
    line("plate_scale_keyword", c.plate_scale_keyword);
    line("strict_metadata", c.strict_metadata ? "true" : "false");
    line("lr_roi", c.lr_roi ? std::to_string(c.lr_roi->x) + "," + std::to_string(c.lr_roi->y) + "," +
                                  std::to_string(c.lr_roi->width) + "," + std::to_string(c.lr_roi->height)
                            : "");
    line("max_shift", std::to_string(c.max_shift));
    line("align_passes", std::to_string(c.align_passes));
    line("shift_search", c.shift_search == ShiftSearch::fft ? "fft" : "exhaustive");
    line("sift_ratio", format_double(c.sift_ratio));
    line("sift_contrast", format_double(c.sift_contrast));
    line("sift_edge", format_double(c.sift_edge));
    line("sift_octaves", std::to_string(c.sift_octaves));
    line("ransac_iterations", std::to_string(c.ransac_iterations));
    line("ransac_inlier_tol", format_double(c.ransac_inlier_tol));
    line("residual_floor", format_double(c.residual_floor));
    line("refine", c.refine ? "true" : "false");
    line("manual_dx", format_double(c.manual_dx));
    line("manual_dy", format_double(c.manual_dy));
    line("max_gap_seconds", format_double(c.max_gap_seconds));
    line("train_start", format_timestamp(c.train_start));
    line("train_end", format_timestamp(c.train_end));
    line("test_start", format_timestamp(c.test_start));
    line("test_end", format_timestamp(c.test_end));
    line("scale_factor", std::to_string(c.scale_factor));
    line("normalization_max", c.normalization.from_bitpix ? "bitpix" : format_double(c.normalization.value));
    line("checkpoint", c.checkpoint);
    line("psnr_checkpoint", c.psnr_checkpoint);
    line("gan_checkpoint", c.gan_checkpoint);
    line("tile_size", std::to_string(c.tile_size));
    line("tile_overlap", std::to_string(c.tile_overlap));
    line("output_bitpix", std::to_string(c.output_bitpix));
    line("lambda", format_double(c.lambda));
    line("eta", format_double(c.eta));
    line("alpha", format_double(c.alpha));
    line("spectra_window", c.spectra_window == Window::none ? "none" : "hann");
    line("spectrum_frames", c.spectrum_frames);
    line("eval_splits", c.eval_splits);
    line("seed", std::to_string(c.seed));
    return o.str();
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char ch : data) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xF];
    return s;
}

inline std::string config_hash(const PipelineConfig& c) { return hex64(fnv1a(canonical_text(c))); }

}  // namespace solarsr::pipeline
