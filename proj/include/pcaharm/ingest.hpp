#pragma once

#include <fnmatch.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "pcaharm/common.hpp"
#include "pcaharm/image.hpp"
#include "pcaharm/png_io.hpp"

namespace pcaharm {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Loading and resizing

inline Image load_image(const fs::path& path) {
    GrayBytes raster = read_png_gray8(path);
    Image img(raster.width, raster.height);
    for (std::size_t i = 0; i < raster.bytes.size(); ++i) {
        img.values[i] = static_cast<float>(raster.bytes[i]) / 255.0f;
    }
    return img;
}

/// Any non-zero pixel is foreground, so both 0/1 and 0/255 encodings load as binary.
inline Mask load_mask(const fs::path& path) {
    GrayBytes raster = read_png_gray8(path);
    Mask mask(raster.width, raster.height);
    for (std::size_t i = 0; i < raster.bytes.size(); ++i) mask.values[i] = raster.bytes[i] ? 1 : 0;
    return mask;
}

/// Bilinear resampling with pixel centres at half-integer coordinates (align_corners = false).
/// Source coordinates outside the image are clamped to the border.
inline Image resize_bilinear(const Image& img, std::size_t w, std::size_t h) {
    if (w == 0 || h == 0) throw IngestError("resize target must be at least 1x1");
    if (img.width == 0 || img.height == 0) throw IngestError("cannot resize an empty image");
    if (w == img.width && h == img.height) return img;

    auto axis = [](std::size_t dst, std::size_t dst_len, std::size_t src_len) {
        double s = (static_cast<double>(dst) + 0.5) * static_cast<double>(src_len) / static_cast<double>(dst_len) - 0.5;
        s = std::clamp(s, 0.0, static_cast<double>(src_len - 1));
        auto i0 = static_cast<std::size_t>(std::floor(s));
        std::size_t i1 = std::min(i0 + 1, src_len - 1);
        return std::tuple{i0, i1, s - static_cast<double>(i0)};
    };

    Image out(w, h);
    for (std::size_t y = 0; y < h; ++y) {
        auto [y0, y1, fy] = axis(y, h, img.height);
        for (std::size_t x = 0; x < w; ++x) {
            auto [x0, x1, fx] = axis(x, w, img.width);
            double top = (1.0 - fx) * img.at(x0, y0) + fx * img.at(x1, y0);
            double bottom = (1.0 - fx) * img.at(x0, y1) + fx * img.at(x1, y1);
            double v = (1.0 - fy) * top + fy * bottom;
            out.at(x, y) = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    }
    return out;
}

/// Nearest-neighbour resampling followed by a 0.5 re-threshold, keeping the mask binary.
inline Mask resize_nearest(const Mask& mask, std::size_t w, std::size_t h) {
    if (w == 0 || h == 0) throw IngestError("resize target must be at least 1x1");
    if (mask.width == 0 || mask.height == 0) throw IngestError("cannot resize an empty mask");
    if (w == mask.width && h == mask.height) return mask;
    auto pick = [](std::size_t dst, std::size_t dst_len, std::size_t src_len) {
        auto s = static_cast<std::size_t>((static_cast<double>(dst) + 0.5) * static_cast<double>(src_len) /
                                          static_cast<double>(dst_len));
        return std::min(s, src_len - 1);
    };
    Mask out(w, h);
    for (std::size_t y = 0; y < h; ++y) {
        std::size_t sy = pick(y, h, mask.height);
        for (std::size_t x = 0; x < w; ++x) {
            double v = mask.at(pick(x, w, mask.width), sy);
            out.values[y * w + x] = v >= 0.5 ? 1 : 0;
        }
    }
    return out;
}

inline DatasetRecord resize_record(const DatasetRecord& rec, std::size_t w, std::size_t h) {
    DatasetRecord out{rec.id, resize_bilinear(rec.image, w, h), std::nullopt};
    if (rec.mask) out.mask = resize_nearest(*rec.mask, w, h);
    return out;
}

// ---------------------------------------------------------------------------
// Dataset directories

/// How images and masks are named inside a dataset directory.
///
/// Images are the files in the directory matching `image_pattern` (a shell glob) that are not
/// themselves masks. The record id is the image file stem. The mask of record `id` is
/// `mask_pattern` with `{id}` substituted, looked up in `mask_dir` (or the image directory).
struct DatasetLayout {
    std::string image_pattern = "*.png";
    std::string mask_pattern = "{id}_mask.png";
    fs::path mask_dir;
    bool masks_required = true;
    /// Drop records whose mask has no foreground pixels.
    bool require_tumor = false;
};

namespace detail {

inline bool glob_match(const std::string& pattern, const std::string& name) {
    return ::fnmatch(pattern.c_str(), name.c_str(), 0) == 0;
}

inline std::string substitute_id(std::string pattern, const std::string& replacement) {
    const std::string key = "{id}";
    for (auto pos = pattern.find(key); pos != std::string::npos; pos = pattern.find(key, pos + replacement.size())) {
        pattern.replace(pos, key.size(), replacement);
    }
    return pattern;
}

}  // namespace detail

inline std::vector<DatasetRecord> load_dataset(const fs::path& dir, const DatasetLayout& layout = {}) {
    if (!fs::is_directory(dir)) throw IngestError("dataset directory '" + dir.string() + "' does not exist");
    const fs::path mask_dir = layout.mask_dir.empty() ? dir : layout.mask_dir;
    const std::string mask_glob = detail::substitute_id(layout.mask_pattern, "*");
    const bool masks_alongside = !fs::exists(mask_dir) || fs::equivalent(mask_dir, dir);

    std::vector<fs::path> image_paths;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string name = entry.path().filename().string();
        if (!detail::glob_match(layout.image_pattern, name)) continue;
        if (masks_alongside && detail::glob_match(mask_glob, name)) continue;
        image_paths.push_back(entry.path());
    }
    std::sort(image_paths.begin(), image_paths.end(),
              [](const fs::path& a, const fs::path& b) { return a.stem().string() < b.stem().string(); });

    std::vector<DatasetRecord> records;
    std::set<std::string> seen;
    std::size_t dropped_empty = 0;
    for (const auto& path : image_paths) {
        DatasetRecord rec;
        rec.id = path.stem().string();
        if (!seen.insert(rec.id).second) {
            throw IngestError("duplicate record id '" + rec.id + "' in '" + dir.string() + "'");
        }
        rec.image = load_image(path);
        const fs::path mask_path = mask_dir / detail::substitute_id(layout.mask_pattern, rec.id);
        if (fs::exists(mask_path)) {
            rec.mask = load_mask(mask_path);
            if (!same_shape(rec.image, *rec.mask)) {
                throw IngestError("dimension mismatch between image '" + path.string() + "' (" +
                                  std::to_string(rec.image.width) + "x" + std::to_string(rec.image.height) +
                                  ") and mask '" + mask_path.string() + "' (" + std::to_string(rec.mask->width) +
                                  "x" + std::to_string(rec.mask->height) + ")");
            }
        } else if (layout.masks_required) {
            throw IngestError("image '" + path.string() + "' has no mask (expected '" + mask_path.string() + "')");
        }
        if (layout.require_tumor && rec.mask && rec.mask->foreground() == 0) {
            ++dropped_empty;
            continue;
        }
        records.push_back(std::move(rec));
    }

    if (records.empty()) {
        log::warn("no images found in '" + dir.string() + "' matching '" + layout.image_pattern + "'");
    } else {
        log::info("loaded " + std::to_string(records.size()) + " records from '" + dir.string() + "'" +
                  (dropped_empty ? " (" + std::to_string(dropped_empty) + " without tumor excluded)" : ""));
    }
    return records;
}

// ---------------------------------------------------------------------------
// Splitting

enum class Split { train, val, test };

inline const char* to_string(Split s) {
    switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    }
    return "?";
}

struct SplitAssignment {
    std::vector<std::string> train_ids;
    std::vector<std::string> val_ids;
    std::vector<std::string> test_ids;
    std::uint64_t seed = 42;

    const std::vector<std::string>& ids(Split s) const {
        switch (s) {
        case Split::train: return train_ids;
        case Split::val: return val_ids;
        default: return test_ids;
        }
    }
    std::size_t total() const { return train_ids.size() + val_ids.size() + test_ids.size(); }

    friend bool operator==(const SplitAssignment&, const SplitAssignment&) = default;
};

struct SplitRatios {
    double train = 0.7;
    double val = 0.1;
    double test = 0.2;
};

/// Uniform integer in [0, bound) from a 64-bit Mersenne Twister, by rejection of the biased low range.
inline std::uint64_t uniform_below(std::mt19937_64& engine, std::uint64_t bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
        std::uint64_t r = engine();
        if (r >= threshold) return r % bound;
    }
}

/// Sorts ids, applies a Fisher-Yates shuffle driven by mt19937_64(seed) (walking i = n-1 down to 1 and
/// swapping with uniform_below(i+1)), then cuts floor(n*train), floor(n*val) and the remainder.
inline SplitAssignment split_ids(std::vector<std::string> ids, SplitRatios ratios = {}, std::uint64_t seed = 42) {
    if (ratios.train <= 0 || ratios.val <= 0 || ratios.test <= 0) {
        throw IngestError("split ratios must be positive");
    }
    if (std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
        throw IngestError("split ratios must sum to 1");
    }
    const std::size_t n = ids.size();
    if (n < 3) throw IngestError("need at least 3 records to populate train/val/test splits, got " + std::to_string(n));

    std::sort(ids.begin(), ids.end());
    std::mt19937_64 engine(seed);
    for (std::size_t i = n - 1; i > 0; --i) {
        std::size_t j = uniform_below(engine, i + 1);
        std::swap(ids[i], ids[j]);
    }

    // The epsilon keeps products such as 10 * 0.7 = 6.999... on the intended integer. Small
    // datasets (n < 10) would floor the validation share to zero, so val gets at least one and
    // train gives up records until test has one too.
    auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios.train + 1e-9));
    auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios.val + 1e-9));
    n_val = std::max<std::size_t>(n_val, 1);
    n_train = std::clamp<std::size_t>(n_train, 1, n - n_val - 1);
    if (n_train + n_val >= n) {
        throw IngestError("split of " + std::to_string(n) + " records leaves an empty partition");
    }

    SplitAssignment out;
    out.seed = seed;
    out.train_ids.assign(ids.begin(), ids.begin() + n_train);
    out.val_ids.assign(ids.begin() + n_train, ids.begin() + n_train + n_val);
    out.test_ids.assign(ids.begin() + n_train + n_val, ids.end());
    return out;
}

inline SplitAssignment split_dataset(const std::vector<DatasetRecord>& records, SplitRatios ratios = {},
                                     std::uint64_t seed = 42) {
    std::vector<std::string> ids;
    ids.reserve(records.size());
    for (const auto& r : records) ids.push_back(r.id);
    return split_ids(std::move(ids), ratios, seed);
}

/// CSV with header `id,split`; rows are grouped train, val, test in assignment order.
inline void write_split(const fs::path& path, const SplitAssignment& split) {
    std::ofstream out(path);
    if (!out) throw IngestError("cannot write split file '" + path.string() + "'");
    out << "id,split\n";
    for (Split s : {Split::train, Split::val, Split::test}) {
        for (const auto& id : split.ids(s)) out << id << ',' << to_string(s) << '\n';
    }
}

inline SplitAssignment read_split(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IngestError("cannot read split file '" + path.string() + "'");
    SplitAssignment split;
    std::string line;
    std::getline(in, line);
    if (line != "id,split") throw IngestError("split file '" + path.string() + "' has an unexpected header");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto comma = line.rfind(',');
        if (comma == std::string::npos) throw IngestError("malformed split line '" + line + "'");
        std::string id = line.substr(0, comma);
        std::string which = line.substr(comma + 1);
        if (which == "train") split.train_ids.push_back(id);
        else if (which == "val") split.val_ids.push_back(id);
        else if (which == "test") split.test_ids.push_back(id);
        else throw IngestError("unknown split '" + which + "' in '" + path.string() + "'");
    }
    return split;
}

// ---------------------------------------------------------------------------
// Flattening and the UMX1 matrix format

/// n x d row-major matrix of flattened images.
struct DataMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;
    std::vector<std::string> row_ids;

    DataMatrix() = default;
    DataMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0), row_ids(r) {}

    std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
    std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

enum class Channel { images, masks };

inline DataMatrix flatten(const std::vector<DatasetRecord>& records, Channel which = Channel::images) {
    if (records.empty()) return {};
    const std::size_t w = records.front().image.width;
    const std::size_t h = records.front().image.height;
    DataMatrix m(records.size(), w * h);
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& rec = records[i];
        m.row_ids[i] = rec.id;
        if (rec.image.width != w || rec.image.height != h) {
            throw IngestError("cannot flatten heterogeneous dimensions: '" + rec.id + "' is " +
                              std::to_string(rec.image.width) + "x" + std::to_string(rec.image.height) +
                              ", expected " + std::to_string(w) + "x" + std::to_string(h));
        }
        auto row = m.row(i);
        if (which == Channel::images) {
            std::copy(rec.image.values.begin(), rec.image.values.end(), row.begin());
        } else {
            if (!rec.mask) throw IngestError("record '" + rec.id + "' has no mask to flatten");
            std::copy(rec.mask->values.begin(), rec.mask->values.end(), row.begin());
        }
    }
    return m;
}

inline Image unflatten_row(const DataMatrix& m, std::size_t i, std::size_t width, std::size_t height) {
    if (width * height != m.cols) throw IngestError("image shape does not match matrix width");
    Image img(width, height);
    auto row = m.row(i);
    for (std::size_t j = 0; j < m.cols; ++j) img.values[j] = static_cast<float>(row[j]);
    return img;
}

/// Inverse of flatten(Channel::images); masks are not carried by the matrix.
inline std::vector<DatasetRecord> unflatten(const DataMatrix& m, std::size_t width, std::size_t height) {
    std::vector<DatasetRecord> out;
    out.reserve(m.rows);
    for (std::size_t i = 0; i < m.rows; ++i) {
        out.push_back({m.row_ids[i], unflatten_row(m, i, width, height), std::nullopt});
    }
    return out;
}

inline constexpr std::array<char, 4> kUmxMagic{'U', 'M', 'X', '1'};
inline constexpr std::uint32_t kUmxVersion = 1;

/// Writes `prefix` + ".umx" and the id sidecar `prefix` + ".ids".
inline void write_umx(const fs::path& umx_path, const DataMatrix& m, int scalar_width = 8) {
    if (scalar_width != 4 && scalar_width != 8) throw IngestError("UMX scalar width must be 4 or 8");
    std::ofstream out(umx_path, std::ios::binary);
    if (!out) throw IngestError("cannot write '" + umx_path.string() + "'");
    out.write(kUmxMagic.data(), kUmxMagic.size());
    io::write_le<std::uint32_t>(out, kUmxVersion);
    io::write_le<std::uint64_t>(out, m.rows);
    io::write_le<std::uint64_t>(out, m.cols);
    io::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(scalar_width));
    for (double v : m.data) {
        if (scalar_width == 8) io::write_le<double>(out, v);
        else io::write_le<float>(out, static_cast<float>(v));
    }
    if (!out) throw IngestError("failed writing '" + umx_path.string() + "'");

    fs::path ids_path = umx_path;
    ids_path.replace_extension(".ids");
    std::ofstream ids(ids_path);
    for (const auto& id : m.row_ids) ids << id << '\n';
}

inline DataMatrix read_umx(const fs::path& umx_path) {
    std::ifstream in(umx_path, std::ios::binary);
    if (!in) throw IngestError("cannot read '" + umx_path.string() + "'");
    std::array<char, 4> magic{};
    in.read(magic.data(), magic.size());
    if (!in || magic != kUmxMagic) throw IngestError("'" + umx_path.string() + "' is not a UMX1 file");
    auto version = io::read_le<std::uint32_t>(in);
    if (version != kUmxVersion) throw IngestError("unsupported UMX version " + std::to_string(version));
    DataMatrix m;
    m.rows = io::read_le<std::uint64_t>(in);
    m.cols = io::read_le<std::uint64_t>(in);
    auto width = io::read_le<std::uint8_t>(in);
    if (width != 4 && width != 8) throw IngestError("bad UMX scalar width " + std::to_string(width));
    m.data.resize(m.rows * m.cols);
    for (auto& v : m.data) v = width == 8 ? io::read_le<double>(in) : io::read_le<float>(in);

    fs::path ids_path = umx_path;
    ids_path.replace_extension(".ids");
    m.row_ids.resize(m.rows);
    std::ifstream ids(ids_path);
    if (ids) {
        std::size_t i = 0;
        std::string line;
        while (i < m.rows && std::getline(ids, line)) m.row_ids[i++] = line;
        if (i != m.rows) throw IngestError("id sidecar '" + ids_path.string() + "' has fewer lines than rows");
    } else {
        for (std::size_t i = 0; i < m.rows; ++i) m.row_ids[i] = std::to_string(i);
    }
    return m;
}

}  // namespace pcaharm
