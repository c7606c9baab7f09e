// Attacked-image composition: white bands above and below the source image
// take the attack text, so the original pixels are never occluded. Rendering
// is pure and deterministic: same source, layout, attack, and font give
// byte-identical rasters.

#pragma once

#include "typobench/attack_types.hpp"
#include "typobench/detail/rng.hpp"
#include "typobench/detail/sha256.hpp"
#include "typobench/errors.hpp"
#include "typobench/image.hpp"

#include <opencv2/core/version.hpp>
#include <opencv2/imgproc.hpp>

#include <optional>
#include <string>
#include <vector>

namespace typobench::compositor {

enum class Band { top, bottom };

inline std::string to_string(Band b) { return b == Band::top ? "top" : "bottom"; }

inline Band band_from_string(const std::string& s) {
    if (s == "top") return Band::top;
    if (s == "bottom") return Band::bottom;
    throw ConfigError("unknown band '" + s + "'");
}

struct LayoutSpec {
    double band_height_fraction = 0.14;
    int font_px_max = 28;
    int margin_px = 4; // horizontal text inset; bands are whitespace already
    img::Rgb text_color = {0, 0, 0};
    img::Rgb band_color = {255, 255, 255};
    Band class_band = Band::top;
    Band description_band = Band::bottom;
    // prior-work comparison mode: class text at a seeded random location on
    // the image itself, no bands
    bool random_paste = false;

    void validate() const {
        if (!(band_height_fraction > 0.0 && band_height_fraction <= 0.5))
            throw ConfigError("band_height_fraction must be in (0, 0.5]");
        if (class_band == description_band)
            throw ConfigError("class_band and description_band must differ");
        if (font_px_max < kFontFloorPx) throw ConfigError("font_px_max below font floor");
        if (margin_px < 0) throw ConfigError("margin_px must be >= 0");
    }

    static constexpr int kFontFloorPx = 10;
    static constexpr int kFontStepPx = 2;
    static constexpr int kLineGapPx = 0; // glyph descent already separates lines
};

struct RenderedText {
    Band band = Band::top;
    std::string text; // as drawn, possibly truncated
    img::Rect box;
    bool truncated = false;
};

struct ComposedImage {
    img::Raster pixels;
    img::Rect original_rect;
    std::vector<RenderedText> rendered_texts;
    LayoutSpec layout;

    int band_height() const { return original_rect.y; }

    img::Rect band_rect(Band b) const {
        int bh = band_height();
        if (b == Band::top) return {0, 0, pixels.width(), bh};
        return {0, original_rect.y + original_rect.h, pixels.width(), bh};
    }

    bool any_truncated() const {
        for (const auto& t : rendered_texts)
            if (t.truncated) return true;
        return false;
    }
};

// ---------------------------------------------------------------------------
// glyph engine (Hershey duplex via OpenCV, integer rasterization)

namespace fontdetail {

inline constexpr int kFace = cv::FONT_HERSHEY_DUPLEX;
inline constexpr int kThickness = 1;

struct Metrics {
    int width = 0;
    int ascent = 0;  // above the baseline
    int descent = 0; // below the baseline
    int box_height() const { return ascent + descent; }
};

inline double scale_for(int px) {
    return cv::getFontScaleFromHeight(kFace, px, kThickness);
}

inline Metrics measure(const std::string& text, int px) {
    int baseline = 0;
    cv::Size sz = cv::getTextSize(text, kFace, scale_for(px), kThickness, &baseline);
    return {sz.width, sz.height, baseline};
}

/// Draw clipped to `clip`; returns the recorded box (canvas coordinates).
inline img::Rect draw(img::Raster& canvas, const img::Rect& clip, int x, int y_top,
                      const std::string& text, int px, img::Rgb color) {
    Metrics m = measure(text, px);
    cv::Mat view = canvas.cv_view();
    cv::Mat roi = view(cv::Rect(clip.x, clip.y, clip.w, clip.h));
    // the raster is RGB-ordered; OpenCV just writes scalar channels in order
    cv::putText(roi, text, cv::Point(x - clip.x, y_top - clip.y + m.ascent), kFace,
                scale_for(px), cv::Scalar(color.r, color.g, color.b), kThickness, cv::LINE_8);
    return {x, y_top, m.width, m.box_height()};
}

} // namespace fontdetail

inline std::string font_id() { return "hershey_duplex"; }

/// Stand-in for a font-file digest: the face is baked into OpenCV, so the
/// digest covers the face name and the library version that rasterizes it.
inline std::string font_hash() {
    return detail::sha256_hex(font_id() + "|opencv-" + CV_VERSION);
}

// ---------------------------------------------------------------------------

/// Band height for a given source height; zero means the layout degenerates.
inline int band_height_for(const LayoutSpec& layout, int source_height) {
    return static_cast<int>(layout.band_height_fraction * source_height);
}

/// Add the white bands. The source lands untouched at y = band height.
inline ComposedImage pad_image(const img::Raster& source, const LayoutSpec& layout) {
    layout.validate();
    if (source.empty()) throw ValidationError("pad_image: empty source");

    if (layout.random_paste) {
        ComposedImage out;
        out.pixels = source;
        out.original_rect = {0, 0, source.width(), source.height()};
        out.layout = layout;
        return out;
    }

    int bh = band_height_for(layout, source.height());
    if (bh <= 0)
        throw ValidationError("pad_image: band height rounds to 0 px for source height " +
                              std::to_string(source.height()));

    ComposedImage out;
    out.pixels = img::Raster(source.width(), source.height() + 2 * bh, layout.band_color);
    out.pixels.blit(source, 0, bh);
    out.original_rect = {0, bh, source.width(), source.height()};
    out.layout = layout;
    return out;
}

namespace fitdetail {

using fontdetail::measure;

inline bool fits(const std::string& text, int px, int usable_w, int usable_h) {
    auto m = measure(text, px);
    return m.width <= usable_w && m.box_height() <= usable_h;
}

/// Longest prefix of `text` that fits at `px` with "..." appended.
/// Empty result means not even the ellipsis fits.
inline std::string truncate_to_fit(const std::string& text, int px, int usable_w, int usable_h) {
    for (std::size_t keep = text.size(); keep > 0; --keep) {
        std::string candidate = text.substr(0, keep) + "...";
        if (fits(candidate, px, usable_w, usable_h)) return candidate;
    }
    if (fits("...", px, usable_w, usable_h)) return "...";
    return {};
}

/// Greedy word wrap; returns empty when a single word cannot fit a line.
inline std::vector<std::string> wrap_words(const std::vector<std::string>& words, int px,
                                           int usable_w) {
    std::vector<std::string> lines;
    std::string cur;
    for (const auto& w : words) {
        std::string candidate = cur.empty() ? w : cur + " " + w;
        if (measure(candidate, px).width <= usable_w) {
            cur = std::move(candidate);
        } else {
            if (cur.empty()) return {}; // lone word too wide at this size
            lines.push_back(std::move(cur));
            cur = w;
            if (measure(cur, px).width > usable_w) return {};
        }
    }
    if (!cur.empty()) lines.push_back(std::move(cur));
    return lines;
}

/// Hard character wrap used only at the font floor.
inline std::vector<std::string> wrap_hard(const std::string& text, int px, int usable_w) {
    std::vector<std::string> lines;
    std::string cur;
    for (char c : text) {
        if (c == '\n') c = ' ';
        std::string candidate = cur + c;
        if (measure(candidate, px).width <= usable_w || cur.empty()) {
            cur = std::move(candidate);
        } else {
            lines.push_back(std::move(cur));
            cur = std::string(1, c);
        }
    }
    if (!cur.empty()) lines.push_back(std::move(cur));
    return lines;
}

} // namespace fitdetail

/// Render the attack text into the bands: deceiving class centered in its
/// band, description (if any) word-wrapped in the other. Text shrinks in
/// 2 px steps to the 10 px floor, then truncates with "..." and flags the
/// rendered record; composition never fails on long input.
inline ComposedImage render_attack(const ComposedImage& canvas,
                                   const attacks::AttackInstance& attack) {
    if (!canvas.rendered_texts.empty())
        throw ValidationError("render_attack: canvas already carries rendered text");
    if (attack.deceiving_class.empty())
        throw ValidationError("render_attack: empty deceiving class");

    ComposedImage out = canvas;
    const LayoutSpec& layout = out.layout;

    if (layout.random_paste) {
        // prior-work mode: the class pasted straight onto the image
        std::string text = detail::collapse_ws(attack.deceiving_class);
        int usable_w = out.pixels.width();
        int usable_h = out.pixels.height();
        int px = layout.font_px_max;
        bool truncated = false;
        while (px > LayoutSpec::kFontFloorPx && !fitdetail::fits(text, px, usable_w, usable_h))
            px -= LayoutSpec::kFontStepPx;
        if (!fitdetail::fits(text, px, usable_w, usable_h)) {
            text = fitdetail::truncate_to_fit(text, px, usable_w, usable_h);
            truncated = true;
        }
        if (!text.empty()) {
            auto m = fontdetail::measure(text, px);
            auto rng = detail::keyed_rng(attack.seed, "random_paste", attack.sample_id);
            int max_x = std::max(0, out.pixels.width() - m.width);
            int max_y = std::max(0, out.pixels.height() - m.box_height());
            int x = static_cast<int>(rng.bounded(static_cast<std::uint64_t>(max_x) + 1));
            int y = static_cast<int>(rng.bounded(static_cast<std::uint64_t>(max_y) + 1));
            img::Rect box = fontdetail::draw(out.pixels, {0, 0, out.pixels.width(), out.pixels.height()},
                                             x, y, text, px, layout.text_color);
            out.rendered_texts.push_back({layout.class_band, text, box, truncated});
        } else {
            out.rendered_texts.push_back({layout.class_band, "", {0, 0, 0, 0}, true});
        }
        return out;
    }

    auto render_single = [&](Band band, const std::string& raw) {
        img::Rect rect = out.band_rect(band);
        int usable_w = rect.w - 2 * layout.margin_px;
        int usable_h = rect.h;
        std::string text = detail::collapse_ws(raw);
        bool truncated = false;

        int chosen_px = 0;
        for (int px = layout.font_px_max; px >= LayoutSpec::kFontFloorPx;
             px -= LayoutSpec::kFontStepPx) {
            if (usable_w > 0 && usable_h > 0 && fitdetail::fits(text, px, usable_w, usable_h)) {
                chosen_px = px;
                break;
            }
        }
        if (chosen_px == 0) {
            chosen_px = LayoutSpec::kFontFloorPx;
            text = usable_w > 0 && usable_h > 0
                       ? fitdetail::truncate_to_fit(text, chosen_px, usable_w, usable_h)
                       : std::string{};
            truncated = true;
        }
        if (text.empty()) {
            out.rendered_texts.push_back({band, "", {rect.x, rect.y, 0, 0}, true});
            return;
        }
        auto m = fontdetail::measure(text, chosen_px);
        int x = rect.x + (rect.w - m.width) / 2;
        int y = rect.y + (rect.h - m.box_height()) / 2;
        img::Rect box = fontdetail::draw(out.pixels, rect, x, y, text, chosen_px, layout.text_color);
        out.rendered_texts.push_back({band, text, box, truncated});
    };

    auto render_wrapped = [&](Band band, const std::string& raw) {
        img::Rect rect = out.band_rect(band);
        int usable_w = rect.w - 2 * layout.margin_px;
        int usable_h = rect.h;
        std::string text = detail::collapse_ws(raw);
        auto words = detail::split_words(text);

        std::vector<std::string> lines;
        int chosen_px = 0;
        for (int px = layout.font_px_max; px >= LayoutSpec::kFontFloorPx;
             px -= LayoutSpec::kFontStepPx) {
            if (usable_w <= 0 || usable_h <= 0) break;
            auto wrapped = fitdetail::wrap_words(words, px, usable_w);
            if (wrapped.empty()) continue;
            int line_h = fontdetail::measure("Ag", px).box_height();
            int block_h = static_cast<int>(wrapped.size()) * line_h +
                          (static_cast<int>(wrapped.size()) - 1) * LayoutSpec::kLineGapPx;
            if (block_h <= usable_h) {
                lines = std::move(wrapped);
                chosen_px = px;
                break;
            }
        }

        bool truncated = false;
        if (chosen_px == 0) {
            // font floor: hard-wrap, keep the lines that fit, elide the rest
            truncated = true;
            chosen_px = LayoutSpec::kFontFloorPx;
            if (usable_w > 0 && usable_h > 0) {
                int line_h = fontdetail::measure("Ag", chosen_px).box_height();
                auto wrapped = fitdetail::wrap_hard(text, chosen_px, usable_w);
                std::size_t max_lines = 0;
                while ((max_lines + 1) * line_h + max_lines * LayoutSpec::kLineGapPx <=
                       static_cast<std::size_t>(usable_h))
                    ++max_lines;
                if (max_lines > 0 && !wrapped.empty()) {
                    if (wrapped.size() > max_lines) wrapped.resize(max_lines);
                    std::string tail = fitdetail::truncate_to_fit(wrapped.back(), chosen_px,
                                                                  usable_w, usable_h);
                    wrapped.back() = tail.empty() ? "..." : tail;
                    lines = std::move(wrapped);
                }
            }
        }
        if (lines.empty()) {
            out.rendered_texts.push_back({band, "", {rect.x, rect.y, 0, 0}, true});
            return;
        }

        int line_h = fontdetail::measure("Ag", chosen_px).box_height();
        int block_h = static_cast<int>(lines.size()) * line_h +
                      (static_cast<int>(lines.size()) - 1) * LayoutSpec::kLineGapPx;
        int y = rect.y + (rect.h - block_h) / 2;
        img::Rect box{rect.x + rect.w, y, 0, block_h};
        std::string drawn;
        for (std::size_t i = 0; i < lines.size(); ++i) {
            auto m = fontdetail::measure(lines[i], chosen_px);
            int x = rect.x + (rect.w - m.width) / 2;
            fontdetail::draw(out.pixels, rect, x, y + static_cast<int>(i) * (line_h + LayoutSpec::kLineGapPx),
                             lines[i], chosen_px, layout.text_color);
            box.x = std::min(box.x, x);
            box.w = std::max(box.w, m.width);
            if (i) drawn += "\n";
            drawn += lines[i];
        }
        out.rendered_texts.push_back({band, drawn, box, truncated});
    };

    render_single(layout.class_band, attack.deceiving_class);
    if (attack.description && !attack.description->empty())
        render_wrapped(layout.description_band, *attack.description);
    return out;
}

} // namespace typobench::compositor
