#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pcaharm/common.hpp"

namespace pcaharm {

/// Grayscale intensities in [0,1], row-major.
struct Image {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<float> values;

    Image() = default;
    Image(std::size_t w, std::size_t h, float fill = 0.0f) : width(w), height(h), values(w * h, fill) {}
    Image(std::size_t w, std::size_t h, std::vector<float> v) : width(w), height(h), values(std::move(v)) {
        if (values.size() != width * height) throw Error("image value count does not match its dimensions");
    }

    std::size_t size() const { return values.size(); }
    float at(std::size_t x, std::size_t y) const { return values[y * width + x]; }
    float& at(std::size_t x, std::size_t y) { return values[y * width + x]; }

    friend bool operator==(const Image&, const Image&) = default;
};

/// Binary mask, values exactly 0 or 1, row-major.
struct Mask {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> values;

    Mask() = default;
    Mask(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), values(w * h, fill ? 1 : 0) {}
    Mask(std::size_t w, std::size_t h, std::vector<std::uint8_t> v) : width(w), height(h), values(std::move(v)) {
        if (values.size() != width * height) throw Error("mask value count does not match its dimensions");
        for (auto& p : values) {
            if (p > 1) throw Error("mask values must be 0 or 1");
        }
    }

    std::size_t size() const { return values.size(); }
    std::size_t foreground() const {
        std::size_t n = 0;
        for (auto p : values) n += p;
        return n;
    }
    std::uint8_t at(std::size_t x, std::size_t y) const { return values[y * width + x]; }

    friend bool operator==(const Mask&, const Mask&) = default;
};

template <typename A, typename B>
bool same_shape(const A& a, const B& b) {
    return a.width == b.width && a.height == b.height;
}

struct DatasetRecord {
    std::string id;
    Image image;
    std::optional<Mask> mask;
};

/// Nearest 8-bit level; pixel values written to PNG go through this.
inline std::uint8_t quantize8(float v) {
    if (!(v > 0.0f)) return 0;
    if (v >= 1.0f) return 255;
    return static_cast<std::uint8_t>(v * 255.0f + 0.5f);
}

inline Image quantized(const Image& img) {
    Image out = img;
    for (auto& v : out.values) v = static_cast<float>(quantize8(v)) / 255.0f;
    return out;
}

}  // namespace pcaharm
