#pragma once

// Dataset layout on disk:
//   images/%06d.png   labels/%06d.txt   meta/%06d.json
//   meta.csv          manifest.json     [debug/%06d_instance.png, debug/%06d_depth.pfm]

#include <aerosynth/annotate.hpp>
#include <aerosynth/errors.hpp>
#include <aerosynth/meta.hpp>
#include <aerosynth/renderer.hpp>
#include <aerosynth/rng.hpp>
#include <aerosynth/world.hpp>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace aerosynth {

namespace fs = std::filesystem;

inline std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// ---------------------------------------------------------------------------
// Files

inline void write_file(const fs::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

inline void write_text(const fs::path& path, std::string_view text) {
    write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

inline std::vector<std::uint8_t> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string read_text(const fs::path& path) {
    const auto bytes = read_file(path);
    return {bytes.begin(), bytes.end()};
}

// ---------------------------------------------------------------------------
// PNG

namespace detail {

inline void png_append(png_structp png, png_bytep data, png_size_t length) {
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + length);
}

inline void png_flush_noop(png_structp) {}

inline std::vector<std::uint8_t> encode_png_rows(int width, int height, int bit_depth, int color_type,
                                                 const std::vector<png_bytep>& rows) {
    std::vector<std::uint8_t> out;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("PNG encoding failed");
    }
    png_set_write_fn(png, &out, png_append, png_flush_noop);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth, color_type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 3);
    png_write_info(png, info);
    if (bit_depth == 16) png_set_swap(png);  // rows are host little-endian
    png_write_image(png, const_cast<png_bytepp>(rows.data()));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_png(const Image& img) {
    if (img.width <= 0 || img.height <= 0 || img.rgb.size() != static_cast<std::size_t>(img.width) * img.height * 3)
        throw InputError("encode_png: image size does not match its pixel data");
    std::vector<png_bytep> rows(img.height);
    for (int y = 0; y < img.height; ++y)
        rows[y] = const_cast<png_bytep>(img.rgb.data() + static_cast<std::size_t>(y) * img.width * 3);
    return detail::encode_png_rows(img.width, img.height, 8, PNG_COLOR_TYPE_RGB, rows);
}

/// 16-bit grayscale, used for debug instance maps.
inline std::vector<std::uint8_t> encode_png_gray16(int width, int height, std::span<const std::uint16_t> pixels) {
    if (pixels.size() != static_cast<std::size_t>(width) * height) throw InputError("encode_png_gray16: size mismatch");
    std::vector<png_bytep> rows(height);
    for (int y = 0; y < height; ++y)
        rows[y] = reinterpret_cast<png_bytep>(const_cast<std::uint16_t*>(pixels.data() + static_cast<std::size_t>(y) * width));
    return detail::encode_png_rows(width, height, 16, PNG_COLOR_TYPE_GRAY, rows);
}

/// Decodes any PNG into 8-bit RGB.
inline Image decode_png(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw ParseError("not a PNG stream");
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
        throw ParseError(std::string("PNG decoding failed: ") + image.message);
    image.format = PNG_FORMAT_RGB;
    Image img;
    img.width = static_cast<int>(image.width);
    img.height = static_cast<int>(image.height);
    img.rgb.resize(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, img.rgb.data(), 0, nullptr)) {
        const std::string message = image.message;
        png_image_free(&image);
        throw ParseError("PNG decoding failed: " + message);
    }
    return img;
}

// ---------------------------------------------------------------------------
// Labels

struct LabelBox {
    int class_index = 0;
    double x_center = 0, y_center = 0, width = 0, height = 0;  // normalized
};

inline LabelBox make_label(int class_index, const PixelBox& box, int image_width, int image_height) {
    LabelBox l;
    l.class_index = class_index;
    l.x_center = (box.x_min + box.x_max) / 2.0 / image_width;
    l.y_center = (box.y_min + box.y_max) / 2.0 / image_height;
    l.width = static_cast<double>(box.width()) / image_width;
    l.height = static_cast<double>(box.height()) / image_height;
    for (double v : {l.x_center, l.y_center, l.width, l.height})
        if (!(v >= 0.0 && v <= 1.0))
            throw IntegrityError(fmt::format("label for box ({},{},{},{}) leaves [0,1] in a {}x{} image", box.x_min,
                                             box.y_min, box.x_max, box.y_max, image_width, image_height));
    if (l.x_center - l.width / 2 < -1e-12 || l.x_center + l.width / 2 > 1 + 1e-12 ||
        l.y_center - l.height / 2 < -1e-12 || l.y_center + l.height / 2 > 1 + 1e-12)
        throw IntegrityError(fmt::format("box ({},{},{},{}) extends outside the {}x{} image", box.x_min, box.y_min,
                                         box.x_max, box.y_max, image_width, image_height));
    return l;
}

inline std::string format_label_line(const LabelBox& l) {
    return fmt::format("{} {:.6f} {:.6f} {:.6f} {:.6f}", l.class_index, l.x_center, l.y_center, l.width, l.height);
}

inline int class_index_of(ClassId cls, std::span<const ClassId> classes) {
    const auto it = std::find(classes.begin(), classes.end(), cls);
    if (it == classes.end())
        throw IntegrityError("annotation class '" + std::string(class_name(cls)) + "' is not in the dataset class list");
    return static_cast<int>(it - classes.begin());
}

inline std::string format_labels(std::span<const Annotation> annotations, std::span<const ClassId> classes,
                                 int image_width, int image_height) {
    std::string text;
    for (const auto& a : annotations) {
        text += format_label_line(make_label(class_index_of(a.cls, classes), a.bbox, image_width, image_height));
        text += '\n';
    }
    return text;
}

inline std::vector<LabelBox> parse_labels(std::string_view text) {
    std::vector<LabelBox> out;
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        LabelBox l;
        std::string extra;
        if (!(ls >> l.class_index >> l.x_center >> l.y_center >> l.width >> l.height) || (ls >> extra))
            throw ParseError(fmt::format("label line {}: expected 'class xc yc w h', got '{}'", line_no, line));
        out.push_back(l);
    }
    return out;
}

/// Label back to pixel corners (x_min, y_min, x_max, y_max), unrounded.
inline std::array<double, 4> label_to_pixels(const LabelBox& l, int image_width, int image_height) {
    return {(l.x_center - l.width / 2) * image_width, (l.y_center - l.height / 2) * image_height,
            (l.x_center + l.width / 2) * image_width, (l.y_center + l.height / 2) * image_height};
}

// ---------------------------------------------------------------------------
// Frames

struct FramePaths {
    std::string image;  // relative to the dataset root
    std::string label;
    std::string meta;
};

inline FramePaths frame_paths(std::uint64_t frame_id) {
    return {fmt::format("images/{:06d}.png", frame_id), fmt::format("labels/{:06d}.txt", frame_id),
            fmt::format("meta/{:06d}.json", frame_id)};
}

inline void ensure_layout(const fs::path& dir) {
    std::error_code ec;
    for (const char* sub : {"images", "labels", "meta"}) {
        fs::create_directories(dir / sub, ec);
        if (ec) throw IoError("cannot create " + (dir / sub).string() + ": " + ec.message());
    }
}

/// Writes image, label file and meta sidecar. Label class indices refer to
/// `classes`.
inline FramePaths write_frame(const fs::path& dir, std::uint64_t frame_id, const Image& image,
                              std::span<const Annotation> annotations, const MetaRecord& meta,
                              std::span<const ClassId> classes) {
    meta.validate();
    const std::string labels = format_labels(annotations, classes, image.width, image.height);
    ensure_layout(dir);
    const FramePaths paths = frame_paths(frame_id);
    write_file(dir / paths.image, encode_png(image));
    write_text(dir / paths.label, labels);
    write_text(dir / paths.meta, nlohmann::json(meta).dump(2) + "\n");
    return paths;
}

inline void dump_debug_buffers(const fs::path& dir, std::uint64_t frame_id, const FrameBuffers& fb) {
    std::error_code ec;
    fs::create_directories(dir / "debug", ec);
    if (ec) throw IoError("cannot create " + (dir / "debug").string() + ": " + ec.message());
    std::vector<std::uint16_t> ids(fb.instance.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<std::uint16_t>(fb.instance[i] & 0xffffu);
    write_file(dir / fmt::format("debug/{:06d}_instance.png", frame_id), encode_png_gray16(fb.width, fb.height, ids));

    // PFM, bottom-to-top rows, little-endian; sky stored as +inf.
    std::string pfm = fmt::format("Pf\n{} {}\n-1.0\n", fb.width, fb.height);
    const std::size_t header = pfm.size();
    pfm.resize(header + fb.depth.size() * sizeof(float));
    for (int y = 0; y < fb.height; ++y)
        std::memcpy(pfm.data() + header + static_cast<std::size_t>(fb.height - 1 - y) * fb.width * sizeof(float),
                    fb.depth.data() + static_cast<std::size_t>(y) * fb.width, fb.width * sizeof(float));
    write_text(dir / fmt::format("debug/{:06d}_depth.pfm", frame_id), pfm);
}

// ---------------------------------------------------------------------------
// Manifest

struct FrameEntry {
    std::uint64_t frame_id = 0;
    FramePaths paths;
    std::string split = "train";
};

struct DatasetManifest {
    std::string name;
    std::vector<std::string> classes;
    std::vector<FrameEntry> frames;
    std::string config_hash;  // FNV-1a 64 of the generator config, hex
    int image_width = 0;
    int image_height = 0;

    std::map<std::string, std::size_t> split_counts() const {
        std::map<std::string, std::size_t> counts;
        for (const auto& f : frames) ++counts[f.split];
        return counts;
    }
};

inline void to_json(nlohmann::json& j, const DatasetManifest& m) {
    nlohmann::json frames = nlohmann::json::array();
    for (const auto& f : m.frames)
        frames.push_back({{"frame_id", f.frame_id},
                          {"image", f.paths.image},
                          {"label", f.paths.label},
                          {"meta", f.paths.meta},
                          {"split", f.split}});
    j = {{"name", m.name},
         {"classes", m.classes},
         {"image_width", m.image_width},
         {"image_height", m.image_height},
         {"config_hash", m.config_hash},
         {"frames", frames}};
}

inline void from_json(const nlohmann::json& j, DatasetManifest& m) {
    m.name = j.at("name").get<std::string>();
    m.classes = j.at("classes").get<std::vector<std::string>>();
    m.image_width = j.at("image_width").get<int>();
    m.image_height = j.at("image_height").get<int>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.frames.clear();
    for (const auto& f : j.at("frames"))
        m.frames.push_back({f.at("frame_id").get<std::uint64_t>(),
                            {f.at("image").get<std::string>(), f.at("label").get<std::string>(),
                             f.at("meta").get<std::string>()},
                            f.at("split").get<std::string>()});
}

inline void save_manifest(const fs::path& dir, const DatasetManifest& m) {
    write_text(dir / "manifest.json", nlohmann::json(m).dump(2) + "\n");
}

inline DatasetManifest load_manifest(const fs::path& dir) {
    try {
        return nlohmann::json::parse(read_text(dir / "manifest.json")).get<DatasetManifest>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError((dir / "manifest.json").string() + ": " + e.what());
    }
}

/// Relative paths referenced by the manifest that are missing on disk.
inline std::vector<std::string> missing_files(const fs::path& dir, const DatasetManifest& m) {
    std::vector<std::string> missing;
    for (const auto& f : m.frames)
        for (const std::string* p : {&f.paths.image, &f.paths.label, &f.paths.meta})
            if (!fs::is_regular_file(dir / *p)) missing.push_back(*p);
    return missing;
}

inline void verify_integrity(const fs::path& dir, const DatasetManifest& m) {
    const auto missing = missing_files(dir, m);
    if (!missing.empty())
        throw IntegrityError(fmt::format("{} file(s) referenced by the manifest are missing, first: {}", missing.size(),
                                         missing.front()));
}

inline constexpr std::array<std::string_view, 3> kSplitNames = {"train", "val", "test"};

/// Seeded Fisher-Yates shuffle of frame order, then consecutive partition
/// with largest-remainder rounding of ratios * n.
inline DatasetManifest split(DatasetManifest manifest, std::span<const double> ratios, std::uint64_t seed) {
    if (ratios.empty() || ratios.size() > kSplitNames.size())
        throw InputError("split needs between 1 and 3 ratios");
    double total = 0;
    for (double r : ratios) {
        if (!(r >= 0)) throw InputError("split ratios must be non-negative");
        total += r;
    }
    if (std::abs(total - 1.0) > 1e-9) throw InputError("split ratios must sum to 1");

    const std::size_t n = manifest.frames.size();
    std::vector<std::size_t> counts(ratios.size());
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < ratios.size(); ++i) {
        const double exact = ratios[i] * static_cast<double>(n);
        counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
        assigned += counts[i];
        remainders.emplace_back(exact - counts[i], i);
    }
    std::stable_sort(remainders.begin(), remainders.end(), [](auto& a, auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++counts[remainders[k % remainders.size()].second];

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    std::size_t pos = 0;
    for (std::size_t s = 0; s < counts.size(); ++s)
        for (std::size_t k = 0; k < counts[s]; ++k) manifest.frames[order[pos++]].split = std::string(kSplitNames[s]);
    return manifest;
}

inline void write_meta_csv(const fs::path& dir, std::span<const MetaRecord> records) {
    std::string text(kMetaCsvHeader);
    text += '\n';
    for (const auto& r : records) {
        text += meta_csv_row(r);
        text += '\n';
    }
    write_text(dir / "meta.csv", text);
}

inline std::vector<MetaRecord> read_meta_csv(const fs::path& path) {
    std::istringstream in(read_text(path));
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path.string() + ": empty meta.csv");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kMetaCsvHeader) throw ParseError(path.string() + ": unexpected header '" + line + "'");
    std::vector<MetaRecord> out;
    while (std::getline(in, line))
        if (!line.empty()) out.push_back(parse_meta_csv_row(line));
    return out;
}

}  // namespace aerosynth
