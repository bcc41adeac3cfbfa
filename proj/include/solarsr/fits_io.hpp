#pragma once

// Minimal FITS reader/writer: primary and IMAGE-extension HDUs only.
// Header cards are kept as raw 80-byte images so a parse/serialize cycle is
// byte-identical, including padding.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "solarsr/error.hpp"
#include "solarsr/image.hpp"
#include "solarsr/timeutil.hpp"

namespace solarsr::fits {

inline constexpr std::size_t kBlockSize = 2880;
inline constexpr std::size_t kCardSize = 80;

using Bytes = std::vector<std::uint8_t>;

/// One 80-character header card.
class Card {
public:
    Card() : image_(kCardSize, ' ') {}

    /// Wraps a raw card image; shorter input is space padded.
    static Card from_image(std::string_view raw) {
        require(raw.size() <= kCardSize, ErrorCode::HeaderOverflow, "card longer than 80 characters");
        Card c;
        std::copy(raw.begin(), raw.end(), c.image_.begin());
        return c;
    }

    /// Keyword/value card in fixed format: keyword in columns 1-8, "= " in
    /// columns 9-10, value right-justified to column 30 (strings quoted and
    /// left-justified from column 11).
    static Card make(std::string_view keyword, std::string_view value_text, std::string_view comment = {}) {
        require(keyword.size() <= 8, ErrorCode::HeaderOverflow, "keyword longer than 8 characters: " + std::string(keyword));
        std::string s(keyword);
        s.resize(8, ' ');
        s += "= ";
        if (!value_text.empty() && value_text.front() == '\'') {
            s += value_text;
        } else {
            std::string v(value_text);
            if (v.size() < 20) v.insert(0, 20 - v.size(), ' ');
            s += v;
        }
        if (!comment.empty()) {
            s += " / ";
            s += comment;
        }
        require(s.size() <= kCardSize, ErrorCode::HeaderOverflow,
                "card for " + std::string(keyword) + " exceeds 80 characters");
        return from_image(s);
    }

    static Card make_string(std::string_view keyword, std::string_view value, std::string_view comment = {}) {
        std::string q = "'";
        for (char ch : value) {
            q += ch;
            if (ch == '\'') q += '\'';
        }
        while (q.size() < 9) q += ' ';
        q += '\'';
        return make(keyword, q, comment);
    }

    static Card make_logical(std::string_view keyword, bool value, std::string_view comment = {}) {
        return make(keyword, value ? "T" : "F", comment);
    }

    static Card make_int(std::string_view keyword, long long value, std::string_view comment = {}) {
        return make(keyword, std::to_string(value), comment);
    }

    static Card make_real(std::string_view keyword, double value, std::string_view comment = {}) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17G", value);
        std::string v = buf;
        if (v.find_first_of(".EN") == std::string::npos) v += ".0";
        return make(keyword, v, comment);
    }

    [[nodiscard]] const std::string& image() const noexcept { return image_; }

    [[nodiscard]] std::string keyword() const {
        std::string k = image_.substr(0, 8);
        while (!k.empty() && k.back() == ' ') k.pop_back();
        return k;
    }

    [[nodiscard]] bool has_value() const { return image_.compare(8, 2, "= ") == 0; }

    /// Raw value field: quoted strings unescaped, other values trimmed.
    [[nodiscard]] std::optional<std::string> value() const {
        if (!has_value()) return std::nullopt;
        std::string_view rest(image_);
        rest.remove_prefix(10);
        while (!rest.empty() && rest.front() == ' ') rest.remove_prefix(1);
        if (!rest.empty() && rest.front() == '\'') {
            std::string out;
            for (std::size_t i = 1; i < rest.size(); ++i) {
                if (rest[i] == '\'') {
                    if (i + 1 < rest.size() && rest[i + 1] == '\'') {
                        out += '\'';
                        ++i;
                        continue;
                    }
                    break;
                }
                out += rest[i];
            }
            while (!out.empty() && out.back() == ' ') out.pop_back();
            return out;
        }
        const auto slash = rest.find('/');
        std::string v(rest.substr(0, slash));
        while (!v.empty() && v.back() == ' ') v.pop_back();
        return v;
    }

    [[nodiscard]] std::optional<std::string> comment() const {
        if (!has_value()) return std::nullopt;
        const std::string_view rest = std::string_view(image_).substr(10);
        std::size_t i = 0;
        while (i < rest.size() && rest[i] == ' ') ++i;
        if (i < rest.size() && rest[i] == '\'') {
            for (++i; i < rest.size(); ++i) {
                if (rest[i] == '\'') {
                    if (i + 1 < rest.size() && rest[i + 1] == '\'') {
                        ++i;
                        continue;
                    }
                    ++i;
                    break;
                }
            }
        }
        const auto slash = rest.find('/', i);
        if (slash == std::string_view::npos) return std::nullopt;
        std::string c(rest.substr(slash + 1));
        while (!c.empty() && c.front() == ' ') c.erase(c.begin());
        while (!c.empty() && c.back() == ' ') c.pop_back();
        return c;
    }

    friend bool operator==(const Card&, const Card&) = default;

private:
    std::string image_;
};

/// Ordered card list (END excluded) with typed lookups.
class Header {
public:
    Header() = default;
    explicit Header(std::vector<Card> cards) : cards_(std::move(cards)) {}

    [[nodiscard]] const std::vector<Card>& cards() const noexcept { return cards_; }
    [[nodiscard]] std::vector<Card>& cards() noexcept { return cards_; }

    [[nodiscard]] const Card* find(std::string_view keyword) const {
        for (const auto& c : cards_) {
            if (c.keyword() == keyword) return &c;
        }
        return nullptr;
    }

    [[nodiscard]] std::optional<std::string> get_string(std::string_view keyword) const {
        const Card* c = find(keyword);
        return c ? c->value() : std::nullopt;
    }

    [[nodiscard]] std::optional<long long> get_int(std::string_view keyword) const {
        auto v = get_string(keyword);
        if (!v || v->empty()) return std::nullopt;
        try {
            std::size_t used = 0;
            const long long r = std::stoll(*v, &used);
            if (used != v->size()) return std::nullopt;
            return r;
        } catch (const std::exception&) {
            return std::nullopt;
        }
    }

    [[nodiscard]] std::optional<double> get_real(std::string_view keyword) const {
        auto v = get_string(keyword);
        if (!v || v->empty()) return std::nullopt;
        std::string s = *v;
        std::replace(s.begin(), s.end(), 'D', 'E');
        try {
            std::size_t used = 0;
            const double r = std::stod(s, &used);
            if (used != s.size()) return std::nullopt;
            return r;
        } catch (const std::exception&) {
            return std::nullopt;
        }
    }

    [[nodiscard]] std::optional<bool> get_logical(std::string_view keyword) const {
        auto v = get_string(keyword);
        if (!v) return std::nullopt;
        if (*v == "T") return true;
        if (*v == "F") return false;
        return std::nullopt;
    }

    /// Replaces the first card with the same keyword, or appends.
    void set(Card card) {
        const auto key = card.keyword();
        for (auto& c : cards_) {
            if (c.keyword() == key) {
                c = std::move(card);
                return;
            }
        }
        cards_.push_back(std::move(card));
    }

    friend bool operator==(const Header&, const Header&) = default;

private:
    std::vector<Card> cards_;
};

struct Hdu {
    Header header;
    /// Raw bytes from the END card to the end of the last header block.
    std::string end_block = end_block_for(0);
    /// Unpadded big-endian data payload.
    Bytes data;
    /// Bytes between the payload and the next 2880 boundary.
    Bytes data_padding;

    static std::string end_block_for(std::size_t card_count) {
        const std::size_t used = (card_count + 1) * kCardSize;
        const std::size_t total = (used + kBlockSize - 1) / kBlockSize * kBlockSize;
        std::string s = "END";
        s.resize(total - card_count * kCardSize, ' ');
        return s;
    }

    friend bool operator==(const Hdu&, const Hdu&) = default;
};

struct FitsFile {
    std::vector<Hdu> hdus;
    friend bool operator==(const FitsFile&, const FitsFile&) = default;
};

inline bool is_supported_bitpix(long long bitpix) {
    return bitpix == 8 || bitpix == 16 || bitpix == 32 || bitpix == -32 || bitpix == -64;
}

namespace detail {

inline std::size_t padded(std::size_t n) { return (n + kBlockSize - 1) / kBlockSize * kBlockSize; }

inline std::size_t data_length(const Header& h) {
    const auto bitpix = h.get_int("BITPIX");
    require(bitpix.has_value(), ErrorCode::MalformedFile, "missing BITPIX");
    require(is_supported_bitpix(*bitpix), ErrorCode::UnsupportedBitpix, "BITPIX " + std::to_string(*bitpix));
    const auto naxis = h.get_int("NAXIS");
    require(naxis.has_value() && *naxis >= 0 && *naxis <= 999, ErrorCode::MalformedFile, "missing or invalid NAXIS");
    if (*naxis == 0) return 0;
    std::size_t count = 1;
    for (long long i = 1; i <= *naxis; ++i) {
        const auto n = h.get_int("NAXIS" + std::to_string(i));
        require(n.has_value() && *n >= 0, ErrorCode::MalformedFile, "missing NAXIS" + std::to_string(i));
        count *= static_cast<std::size_t>(*n);
    }
    const long long pcount = h.get_int("PCOUNT").value_or(0);
    const long long gcount = h.get_int("GCOUNT").value_or(1);
    return static_cast<std::size_t>(std::abs(*bitpix) / 8) * static_cast<std::size_t>(gcount) *
           (static_cast<std::size_t>(pcount) + count);
}

}  // namespace detail

/// Parses a complete FITS byte stream into HDUs.
inline FitsFile parse_fits(std::span<const std::uint8_t> bytes) {
    require(!bytes.empty(), ErrorCode::MalformedFile, "empty input");
    require(bytes.size() % kBlockSize == 0, ErrorCode::MalformedFile,
            "size " + std::to_string(bytes.size()) + " is not a multiple of 2880");
    FitsFile file;
    std::size_t offset = 0;
    while (offset < bytes.size()) {
        Hdu hdu;
        std::vector<Card> cards;
        bool found_end = false;
        std::size_t pos = offset;
        while (pos + kCardSize <= bytes.size()) {
            std::string_view card(reinterpret_cast<const char*>(bytes.data() + pos), kCardSize);
            if (card.substr(0, 8) == "END     ") {
                found_end = true;
                break;
            }
            cards.push_back(Card::from_image(card));
            pos += kCardSize;
        }
        require(found_end, ErrorCode::MalformedFile, "header without END card");
        const std::size_t header_end = detail::padded(pos + kCardSize - offset) + offset;
        hdu.end_block.assign(reinterpret_cast<const char*>(bytes.data() + pos), header_end - pos);
        hdu.header = Header(std::move(cards));

        const auto& hc = hdu.header.cards();
        const std::string first = hc.empty() ? std::string{} : hc.front().keyword();
        if (file.hdus.empty()) {
            require(first == "SIMPLE", ErrorCode::MalformedFile, "first keyword is not SIMPLE");
        } else {
            require(first == "XTENSION", ErrorCode::MalformedFile, "extension does not start with XTENSION");
            const auto kind = hdu.header.get_string("XTENSION").value_or("");
            require(kind == "IMAGE", ErrorCode::NotAnImage, "unsupported extension type '" + kind + "'");
        }
        const std::size_t len = detail::data_length(hdu.header);
        const std::size_t data_end = header_end + detail::padded(len);
        require(data_end <= bytes.size(), ErrorCode::MalformedFile, "data segment truncated");
        hdu.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header_end),
                        bytes.begin() + static_cast<std::ptrdiff_t>(header_end + len));
        hdu.data_padding.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header_end + len),
                                bytes.begin() + static_cast<std::ptrdiff_t>(data_end));
        file.hdus.push_back(std::move(hdu));
        offset = data_end;
    }
    return file;
}

/// Serializes HDUs exactly as stored (inverse of parse_fits).
inline Bytes serialize_fits(const FitsFile& file) {
    Bytes out;
    for (const auto& hdu : file.hdus) {
        for (const auto& c : hdu.header.cards()) out.insert(out.end(), c.image().begin(), c.image().end());
        out.insert(out.end(), hdu.end_block.begin(), hdu.end_block.end());
        out.insert(out.end(), hdu.data.begin(), hdu.data.end());
        out.insert(out.end(), hdu.data_padding.begin(), hdu.data_padding.end());
    }
    return out;
}

enum class Source { LR_GONG, HR_GST };

inline constexpr std::string_view to_string(Source s) { return s == Source::LR_GONG ? "LR_GONG" : "HR_GST"; }

/// Nominal plate scales in arcsec/pixel.
inline constexpr double kNominalPlateScaleGong = 1.0;
inline constexpr double kNominalPlateScaleGst = 0.029;
inline constexpr double kPlateScaleTolerance = 0.20;

struct ObsMetadata {
    Timestamp timestamp{};
    double plate_scale = kNominalPlateScaleGong;
    double rotation_angle = 0.0;  // degrees
    Source source = Source::LR_GONG;
};

/// Header keywords consulted when extracting metadata.
struct MetadataKeys {
    Source source = Source::LR_GONG;
    std::string timestamp_keyword = "DATE-OBS";
    std::string time_keyword = "TIME-OBS";  // used when the timestamp card holds only a date
    std::string plate_scale_keyword = "CDELT1";
    std::optional<std::string> rotation_keyword;  // no default: the GST keyword must be configured
    bool strict = true;
};

inline double nominal_plate_scale(Source s) {
    return s == Source::LR_GONG ? kNominalPlateScaleGong : kNominalPlateScaleGst;
}

/// Plate scale must be positive and, for header-supplied values, within 20%
/// of the instrument's nominal scale.
inline void validate_plate_scale(Source source, double plate_scale) {
    require(plate_scale > 0.0 && std::isfinite(plate_scale), ErrorCode::InvalidMetadata, "plate scale must be > 0");
    const double nominal = nominal_plate_scale(source);
    require(std::abs(plate_scale - nominal) <= kPlateScaleTolerance * nominal, ErrorCode::InvalidMetadata,
            "plate scale " + std::to_string(plate_scale) + " is not within 20% of nominal " +
                std::to_string(nominal) + " for " + std::string(to_string(source)));
}

namespace detail {

template <typename T>
T load_be(const std::uint8_t* p) {
    using U = std::conditional_t<sizeof(T) == 1, std::uint8_t,
              std::conditional_t<sizeof(T) == 2, std::uint16_t,
              std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>>;
    U u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) u = static_cast<U>((u << 8) | p[i]);
    return std::bit_cast<T>(u);
}

template <typename T>
void store_be(T value, std::uint8_t* p) {
    using U = std::conditional_t<sizeof(T) == 1, std::uint8_t,
              std::conditional_t<sizeof(T) == 2, std::uint16_t,
              std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>>;
    U u = std::bit_cast<U>(value);
    for (std::size_t i = sizeof(T); i-- > 0;) {
        p[i] = static_cast<std::uint8_t>(u & 0xFF);
        u = static_cast<U>(u >> 8);
    }
}

}  // namespace detail

/// Decodes HDU `index` as a 2D image in physical units (raw * BSCALE +
/// BZERO). Float NaNs and integer BLANK values are marked invalid.
inline std::pair<Image2D, ObsMetadata> read_image_hdu(const FitsFile& file, std::size_t index,
                                                      const MetadataKeys& keys = {}) {
    require(index < file.hdus.size(), ErrorCode::InvalidArgument, "HDU index out of range");
    const Hdu& hdu = file.hdus[index];
    const Header& h = hdu.header;
    const auto naxis = h.get_int("NAXIS").value_or(0);
    require(naxis == 2, ErrorCode::NotAnImage, "NAXIS = " + std::to_string(naxis));
    const auto bitpix = *h.get_int("BITPIX");
    const auto w = static_cast<int>(*h.get_int("NAXIS1"));
    const auto ht = static_cast<int>(*h.get_int("NAXIS2"));
    const double bscale = h.get_real("BSCALE").value_or(1.0);
    const double bzero = h.get_real("BZERO").value_or(0.0);
    const auto blank = h.get_int("BLANK");

    Image2D img(w, ht);
    const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(ht);
    const std::uint8_t* p = hdu.data.data();
    for (std::size_t i = 0; i < n; ++i) {
        double raw = 0.0;
        bool ok = true;
        switch (bitpix) {
            case 8: {
                const auto v = p[i];
                ok = !(blank && *blank == v);
                raw = v;
                break;
            }
            case 16: {
                const auto v = detail::load_be<std::int16_t>(p + 2 * i);
                ok = !(blank && *blank == v);
                raw = v;
                break;
            }
            case 32: {
                const auto v = detail::load_be<std::int32_t>(p + 4 * i);
                ok = !(blank && *blank == v);
                raw = v;
                break;
            }
            case -32: raw = detail::load_be<float>(p + 4 * i); break;
            case -64: raw = detail::load_be<double>(p + 8 * i); break;
            default: fail(ErrorCode::UnsupportedBitpix, std::to_string(bitpix));
        }
        const double value = raw * bscale + bzero;
        ok = ok && std::isfinite(value);
        img.pixels()[i] = ok ? value : 0.0;
        img.mask()[i] = ok ? 1 : 0;
    }

    ObsMetadata meta;
    meta.source = keys.source;
    std::optional<Timestamp> ts;
    if (auto s = h.get_string(keys.timestamp_keyword)) {
        ts = parse_timestamp(*s);
        if (ts && s->find_first_of("T ") == std::string::npos) {
            if (auto t = h.get_string(keys.time_keyword)) {
                if (auto tod = parse_time_of_day(*t)) *ts += *tod;
            }
        }
    }
    if (ts) {
        meta.timestamp = *ts;
    } else {
        require(!keys.strict, ErrorCode::MissingKeyword, "timestamp keyword " + keys.timestamp_keyword);
    }
    if (auto ps = h.get_real(keys.plate_scale_keyword)) {
        validate_plate_scale(keys.source, std::abs(*ps));
        meta.plate_scale = std::abs(*ps);
    } else {
        meta.plate_scale = nominal_plate_scale(keys.source);
    }
    if (keys.rotation_keyword) {
        if (auto rot = h.get_real(*keys.rotation_keyword)) {
            meta.rotation_angle = *rot;
        } else {
            require(!keys.strict, ErrorCode::MissingKeyword, "rotation keyword " + *keys.rotation_keyword);
        }
    }
    return {std::move(img), meta};
}

/// Encodes an image as a single primary HDU. Mandatory cards (SIMPLE,
/// BITPIX, NAXIS, NAXIS1, NAXIS2) come first; a supplied mandatory card is
/// reused verbatim when its value already matches. All other cards are
/// carried through unchanged. Integer BITPIX values are quantized with the
/// header's BSCALE/BZERO.
inline Bytes write_fits(const Image2D& image, const std::vector<Card>& cards, int bitpix = -64) {
    require(is_supported_bitpix(bitpix), ErrorCode::UnsupportedBitpix, std::to_string(bitpix));
    Header given(cards);
    const std::vector<std::pair<std::string, std::string>> mandatory = {
        {"SIMPLE", "T"},
        {"BITPIX", std::to_string(bitpix)},
        {"NAXIS", "2"},
        {"NAXIS1", std::to_string(image.width())},
        {"NAXIS2", std::to_string(image.height())},
    };
    Header out;
    for (const auto& [key, value] : mandatory) {
        const Card* c = given.find(key);
        if (c && c->value() == value) {
            out.cards().push_back(*c);
        } else if (key == "SIMPLE") {
            out.cards().push_back(Card::make_logical(key, true, "conforms to FITS standard"));
        } else {
            out.cards().push_back(Card::make(key, value));
        }
    }
    const bool has_invalid = !image.all_valid();
    for (const auto& c : cards) {
        const auto key = c.keyword();
        const bool is_mandatory = std::any_of(mandatory.begin(), mandatory.end(),
                                              [&](const auto& m) { return m.first == key; });
        if (is_mandatory || key == "END") continue;
        if (bitpix < 0 && (key == "BLANK")) continue;
        out.cards().push_back(c);
    }
    const double bscale = out.get_real("BSCALE").value_or(1.0);
    const double bzero = out.get_real("BZERO").value_or(0.0);
    require(bscale != 0.0, ErrorCode::InvalidArgument, "BSCALE must be nonzero");

    long long blank_value = 0;
    if (bitpix > 0 && has_invalid) {
        if (auto b = out.get_int("BLANK")) {
            blank_value = *b;
        } else {
            blank_value = bitpix == 8 ? 0 : bitpix == 16 ? std::numeric_limits<std::int16_t>::min()
                                                         : std::numeric_limits<std::int32_t>::min();
            out.cards().push_back(Card::make_int("BLANK", blank_value));
        }
    }

    Hdu hdu;
    hdu.header = std::move(out);
    hdu.end_block = Hdu::end_block_for(hdu.header.cards().size());
    const std::size_t bytes_per = static_cast<std::size_t>(std::abs(bitpix) / 8);
    hdu.data.resize(image.size() * bytes_per);
    auto quantize = [&](double v, double lo, double hi) {
        const double r = std::nearbyint((v - bzero) / bscale);
        return std::clamp(r, lo, hi);
    };
    for (std::size_t i = 0; i < image.size(); ++i) {
        const bool ok = image.mask()[i] != 0;
        const double v = image.pixels()[i];
        std::uint8_t* dst = hdu.data.data() + i * bytes_per;
        switch (bitpix) {
            case 8: *dst = ok ? static_cast<std::uint8_t>(quantize(v, 0, 255)) : static_cast<std::uint8_t>(blank_value); break;
            case 16:
                detail::store_be<std::int16_t>(ok ? static_cast<std::int16_t>(quantize(v, -32768, 32767))
                                                  : static_cast<std::int16_t>(blank_value), dst);
                break;
            case 32:
                detail::store_be<std::int32_t>(ok ? static_cast<std::int32_t>(quantize(v, -2147483648.0, 2147483647.0))
                                                  : static_cast<std::int32_t>(blank_value), dst);
                break;
            case -32:
                detail::store_be<float>(ok ? static_cast<float>((v - bzero) / bscale) : std::numeric_limits<float>::quiet_NaN(), dst);
                break;
            case -64:
                detail::store_be<double>(ok ? (bscale == 1.0 && bzero == 0.0 ? v : (v - bzero) / bscale)
                                            : std::numeric_limits<double>::quiet_NaN(), dst);
                break;
        }
    }
    hdu.data_padding.assign(detail::padded(hdu.data.size()) - hdu.data.size(), 0);
    FitsFile f;
    f.hdus.push_back(std::move(hdu));
    return serialize_fits(f);
}

inline Bytes read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorCode::IoError, "cannot open " + path);
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::IoError, "cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(out), ErrorCode::IoError, "short write to " + path);
}

}  // namespace solarsr::fits
