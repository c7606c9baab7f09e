// RGB raster type plus decode/encode. OpenCV backs the codecs and the
// glyph rasterizer; everything above this header speaks Raster only.

#pragma once

#include "typobench/detail/sha256.hpp"
#include "typobench/errors.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace typobench::img {

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    bool operator==(const Rgb&) const = default;
};

/// Axis-aligned pixel rectangle, [x, x+w) x [y, y+h).
struct Rect {
    int x = 0, y = 0, w = 0, h = 0;
    bool operator==(const Rect&) const = default;

    bool contains(const Rect& inner) const {
        return inner.x >= x && inner.y >= y && inner.x + inner.w <= x + w &&
               inner.y + inner.h <= y + h;
    }
};

/// Interleaved 8-bit RGB image, row-major.
class Raster {
public:
    Raster() = default;
    Raster(int width, int height, Rgb fill = {0, 0, 0})
        : width_(width), height_(height),
          data_(static_cast<std::size_t>(width) * height * 3) {
        if (width <= 0 || height <= 0) throw ValidationError("Raster: non-positive dimensions");
        for (std::size_t i = 0; i < data_.size(); i += 3) {
            data_[i] = fill.r;
            data_[i + 1] = fill.g;
            data_[i + 2] = fill.b;
        }
    }

    int width() const { return width_; }
    int height() const { return height_; }
    bool empty() const { return data_.empty(); }

    Rgb at(int x, int y) const {
        std::size_t i = idx(x, y);
        return {data_[i], data_[i + 1], data_[i + 2]};
    }

    void set(int x, int y, Rgb c) {
        std::size_t i = idx(x, y);
        data_[i] = c.r;
        data_[i + 1] = c.g;
        data_[i + 2] = c.b;
    }

    const std::vector<std::uint8_t>& bytes() const { return data_; }
    std::uint8_t* data() { return data_.data(); }
    const std::uint8_t* data() const { return data_.data(); }

    bool operator==(const Raster& other) const {
        return width_ == other.width_ && height_ == other.height_ && data_ == other.data_;
    }

    /// Copy src so its top-left lands at (x, y). Caller keeps it in bounds.
    void blit(const Raster& src, int x, int y) {
        if (x < 0 || y < 0 || x + src.width() > width_ || y + src.height() > height_)
            throw ValidationError("Raster::blit: out of bounds");
        for (int row = 0; row < src.height(); ++row) {
            const std::uint8_t* s = src.data() + static_cast<std::size_t>(row) * src.width() * 3;
            std::uint8_t* d = data_.data() + (static_cast<std::size_t>(y + row) * width_ + x) * 3;
            std::copy(s, s + static_cast<std::size_t>(src.width()) * 3, d);
        }
    }

    Raster crop(const Rect& r) const {
        if (!Rect{0, 0, width_, height_}.contains(r))
            throw ValidationError("Raster::crop: rect out of bounds");
        Raster out(r.w, r.h);
        for (int row = 0; row < r.h; ++row) {
            const std::uint8_t* s = data_.data() + (static_cast<std::size_t>(r.y + row) * width_ + r.x) * 3;
            std::copy(s, s + static_cast<std::size_t>(r.w) * 3,
                      out.data() + static_cast<std::size_t>(row) * r.w * 3);
        }
        return out;
    }

    /// Mutable BGR view over this buffer for OpenCV drawing. Callers pass
    /// colors channel-swapped; the memory itself stays RGB-ordered.
    cv::Mat cv_view() {
        return cv::Mat(height_, width_, CV_8UC3, data_.data(),
                       static_cast<std::size_t>(width_) * 3);
    }

private:
    std::size_t idx(int x, int y) const {
        if (x < 0 || y < 0 || x >= width_ || y >= height_)
            throw ValidationError("Raster: pixel out of bounds");
        return (static_cast<std::size_t>(y) * width_ + x) * 3;
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> data_;
};

inline std::string raster_sha256(const Raster& r) {
    detail::Sha256 h;
    std::int32_t dims[2] = {r.width(), r.height()};
    h.update(dims, sizeof(dims));
    h.update(r.bytes().data(), r.bytes().size());
    return detail::to_hex(h.digest());
}

/// Decode any OpenCV-supported format (PNG/JPEG/...) into RGB.
inline Raster decode_image(const std::vector<std::uint8_t>& encoded) {
    cv::Mat bgr = cv::imdecode(encoded, cv::IMREAD_COLOR);
    if (bgr.empty()) throw ValidationError("decode_image: undecodable image");
    Raster out(bgr.cols, bgr.rows);
    for (int y = 0; y < bgr.rows; ++y) {
        const std::uint8_t* row = bgr.ptr<std::uint8_t>(y);
        for (int x = 0; x < bgr.cols; ++x)
            out.set(x, y, {row[3 * x + 2], row[3 * x + 1], row[3 * x]});
    }
    return out;
}

inline Raster load_image(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("load_image: cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    try {
        return decode_image(bytes);
    } catch (const ValidationError&) {
        throw ValidationError("load_image: undecodable image " + path.string());
    }
}

/// Lossless PNG bytes. Compression level pinned so identical rasters give
/// identical bytes run over run (cache keys and golden hashes depend on it).
inline std::vector<std::uint8_t> encode_png(const Raster& r) {
    cv::Mat bgr(r.height(), r.width(), CV_8UC3);
    for (int y = 0; y < r.height(); ++y) {
        std::uint8_t* row = bgr.ptr<std::uint8_t>(y);
        for (int x = 0; x < r.width(); ++x) {
            Rgb c = r.at(x, y);
            row[3 * x] = c.b;
            row[3 * x + 1] = c.g;
            row[3 * x + 2] = c.r;
        }
    }
    std::vector<std::uint8_t> out;
    if (!cv::imencode(".png", bgr, out, {cv::IMWRITE_PNG_COMPRESSION, 3}))
        throw ValidationError("encode_png: encoder failure");
    return out;
}

inline void save_png(const Raster& r, const std::filesystem::path& path) {
    auto bytes = encode_png(r);
    if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("save_png: cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

} // namespace typobench::img
