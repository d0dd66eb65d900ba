#pragma once

#include <png.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "pcaharm/image.hpp"

namespace pcaharm {

/// Raw 8-bit grayscale raster as stored on disk.
struct GrayBytes {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> bytes;
};

namespace detail {

struct PngImage {
    png_image img;
    PngImage() {
        std::memset(&img, 0, sizeof img);
        img.version = PNG_IMAGE_VERSION;
    }
    ~PngImage() { png_image_free(&img); }
    PngImage(const PngImage&) = delete;
    PngImage& operator=(const PngImage&) = delete;
};

inline std::uint8_t luma(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    double y = 0.299 * r + 0.587 * g + 0.114 * b;
    return static_cast<std::uint8_t>(y + 0.5);
}

}  // namespace detail

/// Reads an 8-bit (or lower, expanded) grayscale or RGB PNG; RGB is converted by luma weighting.
inline GrayBytes read_png_gray8(const std::filesystem::path& path) {
    detail::PngImage png;
    if (!png_image_begin_read_from_file(&png.img, path.string().c_str())) {
        throw IngestError("cannot read image '" + path.string() + "': " + png.img.message);
    }
    if (png.img.format & PNG_FORMAT_FLAG_LINEAR) {
        throw IngestError("unsupported bit depth (16-bit) in '" + path.string() + "'");
    }
    const bool color = (png.img.format & PNG_FORMAT_FLAG_COLOR) != 0;
    png.img.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    const std::size_t channels = color ? 3 : 1;
    GrayBytes out;
    out.width = png.img.width;
    out.height = png.img.height;
    std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(png.img));
    if (!png_image_finish_read(&png.img, nullptr, buffer.data(), 0, nullptr)) {
        throw IngestError("cannot decode image '" + path.string() + "': " + png.img.message);
    }
    if (!color) {
        out.bytes = std::move(buffer);
        return out;
    }
    out.bytes.resize(out.width * out.height);
    for (std::size_t i = 0; i < out.bytes.size(); ++i) {
        out.bytes[i] = detail::luma(buffer[i * channels], buffer[i * channels + 1], buffer[i * channels + 2]);
    }
    return out;
}

inline void write_png_gray8(const std::filesystem::path& path, const GrayBytes& raster) {
    if (raster.bytes.size() != raster.width * raster.height || raster.bytes.empty()) {
        throw IngestError("cannot write '" + path.string() + "': invalid raster");
    }
    detail::PngImage png;
    png.img.width = static_cast<png_uint_32>(raster.width);
    png.img.height = static_cast<png_uint_32>(raster.height);
    png.img.format = PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&png.img, path.string().c_str(), 0, raster.bytes.data(), 0, nullptr)) {
        throw IngestError("cannot write '" + path.string() + "': " + png.img.message);
    }
}

inline void write_png(const std::filesystem::path& path, const Image& img) {
    GrayBytes raster{img.width, img.height, std::vector<std::uint8_t>(img.size())};
    for (std::size_t i = 0; i < img.size(); ++i) raster.bytes[i] = quantize8(img.values[i]);
    write_png_gray8(path, raster);
}

/// Masks are written as 0/255.
inline void write_png(const std::filesystem::path& path, const Mask& mask) {
    GrayBytes raster{mask.width, mask.height, std::vector<std::uint8_t>(mask.size())};
    for (std::size_t i = 0; i < mask.size(); ++i) raster.bytes[i] = mask.values[i] ? 255 : 0;
    write_png_gray8(path, raster);
}

}  // namespace pcaharm
