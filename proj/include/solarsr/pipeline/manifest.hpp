#pragma once

// Pairing of HR frames with LR frames, train/test/extended split
// assignment, and the line-delimited JSON manifest.
//
// Manifest record fields, in order:
//   pair_id, split, lr_path, hr_path, timestamp_lr, timestamp_hr,
//   lr_crop_path, hr_crop_path, crop, transform, residual_score,
//   matches, inliers
// Extended records carry null for every HR-derived field.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "solarsr/error.hpp"
#include "solarsr/image.hpp"
#include "solarsr/registration.hpp"
#include "solarsr/timeutil.hpp"

namespace solarsr::pipeline {

using Json = nlohmann::ordered_json;

enum class Split { train, test, extended };

inline const char* to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::test: return "test";
        case Split::extended: return "extended";
    }
    return "?";
}

inline Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "test") return Split::test;
    if (s == "extended") return Split::extended;
    throw Error(ErrorCode::IoError, "unknown split '" + s + "'");
}

struct FrameInfo {
    std::string path;
    Timestamp timestamp{};
};

struct SplitWindows {
    Timestamp train_start{};
    Timestamp train_end{};
    Timestamp test_start{};
    Timestamp test_end{};
    std::chrono::milliseconds max_gap{60'000};
};

struct ManifestRecord {
    std::string pair_id;
    Split split = Split::train;
    std::string lr_path;
    std::optional<std::string> hr_path;
    Timestamp timestamp_lr{};
    std::optional<Timestamp> timestamp_hr;
    std::string lr_crop_path;
    std::optional<std::string> hr_crop_path;
    std::optional<Rect> crop;
    std::optional<Transform> transform;
    std::optional<double> residual_score;
    std::optional<std::size_t> matches;
    std::optional<std::size_t> inliers;
};

struct SplitWarning {
    std::string code;  // AmbiguousMatch, Unmatched, OutsideWindows
    std::string message;
};

struct SplitResult {
    std::vector<ManifestRecord> records;
    std::vector<SplitWarning> warnings;
};

namespace detail {

inline std::string id(const char* prefix, std::size_t n) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s_%04zu", prefix, n);
    return buf;
}

}  // namespace detail

/// Pairs each HR frame with the closest LR frame within max_gap. LR frames
/// are claimed exclusively: candidate (HR, LR) links are taken in order of
/// time distance, so a contested LR frame goes to the closer HR frame and
/// the other HR frame falls back to its next-closest free LR frame. Equal
/// distances resolve toward the earlier HR frame and are reported as
/// AmbiguousMatch. Splits follow the HR timestamp over half-open windows.
/// Unpaired LR frames later than the last HR frame form the extended set.
inline SplitResult make_splits(const std::vector<FrameInfo>& lr, const std::vector<FrameInfo>& hr, const SplitWindows& w) {
    require(!lr.empty() && !hr.empty(), ErrorCode::EmptyInputs, "make_splits needs at least one LR and one HR frame");
    require(w.train_start <= w.train_end && w.train_end <= w.test_start && w.test_start <= w.test_end,
            ErrorCode::ConfigError, "split boundaries must be ordered");
    auto by_time = [](const std::vector<FrameInfo>& v) {
        std::vector<std::size_t> idx(v.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::stable_sort(idx.begin(), idx.end(), [&v](std::size_t a, std::size_t b) {
            return v[a].timestamp < v[b].timestamp || (v[a].timestamp == v[b].timestamp && v[a].path < v[b].path);
        });
        return idx;
    };
    const auto lr_order = by_time(lr);
    const auto hr_order = by_time(hr);

    struct Link {
        std::chrono::milliseconds gap;
        std::size_t hr_rank;
        std::size_t lr_rank;
    };
    std::vector<Link> links;
    for (std::size_t h = 0; h < hr_order.size(); ++h) {
        for (std::size_t l = 0; l < lr_order.size(); ++l) {
            const auto gap = std::chrono::abs(hr[hr_order[h]].timestamp - lr[lr_order[l]].timestamp);
            if (gap <= w.max_gap) links.push_back({gap, h, l});
        }
    }
    std::sort(links.begin(), links.end(), [](const Link& a, const Link& b) {
        if (a.gap != b.gap) return a.gap < b.gap;
        if (a.hr_rank != b.hr_rank) return a.hr_rank < b.hr_rank;
        return a.lr_rank < b.lr_rank;
    });

    SplitResult out;
    std::vector<std::optional<std::size_t>> hr_to_lr(hr_order.size());
    std::vector<std::optional<std::size_t>> lr_owner(lr_order.size());
    std::vector<std::chrono::milliseconds> lr_owner_gap(lr_order.size());
    for (const auto& k : links) {
        if (hr_to_lr[k.hr_rank]) continue;
        if (lr_owner[k.lr_rank]) {
            if (lr_owner_gap[k.lr_rank] == k.gap) {
                out.warnings.push_back({"AmbiguousMatch", hr[hr_order[k.hr_rank]].path + " and " +
                                                              hr[hr_order[*lr_owner[k.lr_rank]]].path +
                                                              " are equally close to " + lr[lr_order[k.lr_rank]].path +
                                                              "; kept the earlier HR frame"});
            }
            continue;
        }
        hr_to_lr[k.hr_rank] = k.lr_rank;
        lr_owner[k.lr_rank] = k.hr_rank;
        lr_owner_gap[k.lr_rank] = k.gap;
    }

    std::size_t pair_count = 0;
    for (std::size_t h = 0; h < hr_order.size(); ++h) {
        const FrameInfo& hf = hr[hr_order[h]];
        if (!hr_to_lr[h]) {
            out.warnings.push_back({"Unmatched", hf.path + " has no free LR frame within the maximum gap"});
            continue;
        }
        Split split;
        if (hf.timestamp >= w.train_start && hf.timestamp < w.train_end) {
            split = Split::train;
        } else if (hf.timestamp >= w.test_start && hf.timestamp < w.test_end) {
            split = Split::test;
        } else {
            out.warnings.push_back({"OutsideWindows", hf.path + " falls outside the train and test windows"});
            continue;
        }
        const FrameInfo& lf = lr[lr_order[*hr_to_lr[h]]];
        ManifestRecord r;
        r.pair_id = detail::id("pair", pair_count++);
        r.split = split;
        r.lr_path = lf.path;
        r.hr_path = hf.path;
        r.timestamp_lr = lf.timestamp;
        r.timestamp_hr = hf.timestamp;
        out.records.push_back(std::move(r));
    }

    const Timestamp last_hr = hr[hr_order.back()].timestamp;
    std::size_t ext_count = 0;
    for (std::size_t l = 0; l < lr_order.size(); ++l) {
        const FrameInfo& lf = lr[lr_order[l]];
        if (lr_owner[l] || lf.timestamp <= last_hr) continue;
        ManifestRecord r;
        r.pair_id = detail::id("ext", ext_count++);
        r.split = Split::extended;
        r.lr_path = lf.path;
        r.timestamp_lr = lf.timestamp;
        out.records.push_back(std::move(r));
    }
    return out;
}

inline Json to_json(const ManifestRecord& r) {
    Json j;
    auto opt_str = [](const std::optional<std::string>& s) { return s ? Json(*s) : Json(nullptr); };
    j["pair_id"] = r.pair_id;
    j["split"] = to_string(r.split);
    j["lr_path"] = r.lr_path;
    j["hr_path"] = opt_str(r.hr_path);
    j["timestamp_lr"] = format_timestamp(r.timestamp_lr);
    j["timestamp_hr"] = r.timestamp_hr ? Json(format_timestamp(*r.timestamp_hr)) : Json(nullptr);
    j["lr_crop_path"] = r.lr_crop_path;
    j["hr_crop_path"] = opt_str(r.hr_crop_path);
    if (r.crop) {
        j["crop"] = Json{{"x", r.crop->x}, {"y", r.crop->y}, {"width", r.crop->width}, {"height", r.crop->height}};
    } else {
        j["crop"] = nullptr;
    }
    if (r.transform) {
        j["transform"] = Json{{"scale", r.transform->scale},
                              {"rotation_deg", r.transform->rotation},
                              {"tx", r.transform->tx},
                              {"ty", r.transform->ty}};
    } else {
        j["transform"] = nullptr;
    }
    j["residual_score"] = r.residual_score ? Json(*r.residual_score) : Json(nullptr);
    j["matches"] = r.matches ? Json(*r.matches) : Json(nullptr);
    j["inliers"] = r.inliers ? Json(*r.inliers) : Json(nullptr);
    return j;
}

inline ManifestRecord record_from_json(const Json& j) {
    try {
        ManifestRecord r;
        r.pair_id = j.at("pair_id").get<std::string>();
        r.split = split_from_string(j.at("split").get<std::string>());
        r.lr_path = j.at("lr_path").get<std::string>();
        if (!j.at("hr_path").is_null()) r.hr_path = j.at("hr_path").get<std::string>();
        r.timestamp_lr = parse_timestamp_or_throw(j.at("timestamp_lr").get<std::string>());
        if (!j.at("timestamp_hr").is_null()) r.timestamp_hr = parse_timestamp_or_throw(j.at("timestamp_hr").get<std::string>());
        r.lr_crop_path = j.at("lr_crop_path").get<std::string>();
        if (!j.at("hr_crop_path").is_null()) r.hr_crop_path = j.at("hr_crop_path").get<std::string>();
        if (const auto& c = j.at("crop"); !c.is_null()) {
            r.crop = Rect{c.at("x").get<int>(), c.at("y").get<int>(), c.at("width").get<int>(), c.at("height").get<int>()};
        }
        if (const auto& t = j.at("transform"); !t.is_null()) {
            r.transform = Transform{t.at("scale").get<double>(), t.at("rotation_deg").get<double>(), t.at("tx").get<double>(),
                                    t.at("ty").get<double>()};
        }
        if (!j.at("residual_score").is_null()) r.residual_score = j.at("residual_score").get<double>();
        if (!j.at("matches").is_null()) r.matches = j.at("matches").get<std::size_t>();
        if (!j.at("inliers").is_null()) r.inliers = j.at("inliers").get<std::size_t>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::IoError, std::string("malformed manifest record: ") + e.what());
    }
}

}  // namespace solarsr::pipeline
