#pragma once

// Instance buffer -> per-object boxes and visibility.

#include <aerosynth/camera.hpp>
#include <aerosynth/errors.hpp>
#include <aerosynth/mesh.hpp>
#include <aerosynth/raster.hpp>
#include <aerosynth/renderer.hpp>
#include <aerosynth/world.hpp>

#include <algorithm>
#include <cstdint>
#include <limits>
#include <unordered_map>
#include <vector>

namespace aerosynth {

inline constexpr std::size_t kDefaultMinPixels = 16;

/// Half-open pixel rectangle [x_min, x_max) x [y_min, y_max).
struct PixelBox {
    int x_min = 0, y_min = 0, x_max = 0, y_max = 0;

    int width() const { return x_max - x_min; }
    int height() const { return y_max - y_min; }
    bool empty() const { return x_max <= x_min || y_max <= y_min; }
    friend bool operator==(const PixelBox&, const PixelBox&) = default;
};

struct Annotation {
    ObjectId object_id = 0;
    ClassId cls = ClassId::car;
    PixelBox bbox;  // output pixels
    std::size_t visible_pixels = 0;     // at buffer resolution
    std::size_t unoccluded_pixels = 0;  // solo render, clipped to the frame
    double visibility = 0.0;
    bool truncated = false;

    friend bool operator==(const Annotation&, const Annotation&) = default;
};

/// Converts inclusive buffer-pixel bounds to an output-resolution box:
/// floor for the minimum, ceil for the (exclusive) maximum.
inline PixelBox downscale_bounds(int bx_min, int by_min, int bx_max, int by_max, int factor) {
    auto ceil_div = [](int a, int b) { return (a + b - 1) / b; };
    return {bx_min / factor, by_min / factor, ceil_div(bx_max + 1, factor), ceil_div(by_max + 1, factor)};
}

/// Number of buffer pixels the object covers when rendered alone.
inline std::size_t solo_coverage(const WorldObject& obj, const ViewTransform& view) {
    const std::vector<Triangle> mesh = object_mesh(obj);
    std::vector<ScreenTriangle> tris;
    setup_triangles(view, mesh, tris);
    if (tris.empty()) return 0;
    int x0 = std::numeric_limits<int>::max(), y0 = x0, x1 = -1, y1 = -1;
    for (const auto& t : tris) {
        x0 = std::min(x0, t.min_px);
        y0 = std::min(y0, t.min_py);
        x1 = std::max(x1, t.max_px);
        y1 = std::max(y1, t.max_py);
    }
    const int w = x1 - x0 + 1;
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(w) * (y1 - y0 + 1), 0);
    std::size_t covered = 0;
    for (const auto& t : tris) {
        for_each_covered(t, x0, x1, y0, y1, [&](int px, int py, double) {
            auto& m = mask[static_cast<std::size_t>(py - y0) * w + (px - x0)];
            covered += m == 0;
            m = 1;
        });
    }
    return covered;
}

/// Extracts one annotation per object id present in the instance buffer,
/// dropping objects with fewer than min_pixels visible buffer pixels.
/// Output is sorted by object id.
inline std::vector<Annotation> extract_annotations(const FrameBuffers& buffers, const WorldState& world,
                                                   const CameraPose& pose, const Intrinsics& intr,
                                                   const RenderSettings& settings,
                                                   std::size_t min_pixels = kDefaultMinPixels) {
    if (buffers.width != settings.buffer_width() || buffers.height != settings.buffer_height())
        throw IntegrityError("frame buffers do not match render settings");

    struct Stats {
        std::size_t count = 0;
        int x_min = std::numeric_limits<int>::max(), y_min = std::numeric_limits<int>::max(), x_max = -1, y_max = -1;
    };
    std::unordered_map<ObjectId, Stats> stats;
    for (int y = 0; y < buffers.height; ++y) {
        const ObjectId* row = buffers.instance.data() + static_cast<std::size_t>(y) * buffers.width;
        ObjectId last = kBackgroundId;
        Stats* cur = nullptr;
        for (int x = 0; x < buffers.width; ++x) {
            const ObjectId id = row[x];
            if (id == kBackgroundId) continue;
            if (id != last || cur == nullptr) {
                cur = &stats[id];
                last = id;
            }
            ++cur->count;
            cur->x_min = std::min(cur->x_min, x);
            cur->x_max = std::max(cur->x_max, x);
            cur->y_min = std::min(cur->y_min, y);
            cur->y_max = std::max(cur->y_max, y);
        }
    }

    const ViewTransform view = ViewTransform::make(pose, intr.scaled(settings.supersample));
    std::vector<Annotation> out;
    out.reserve(stats.size());
    for (const auto& [id, s] : stats) {
        const WorldObject* obj = world.find(id);
        if (obj == nullptr)
            throw IntegrityError("instance id " + std::to_string(id) + " has no matching world object");
        if (s.count < min_pixels) continue;
        Annotation a;
        a.object_id = id;
        a.cls = obj->cls;
        a.bbox = downscale_bounds(s.x_min, s.y_min, s.x_max, s.y_max, settings.supersample);
        a.visible_pixels = s.count;
        a.unoccluded_pixels = solo_coverage(*obj, view);
        if (a.unoccluded_pixels < a.visible_pixels)
            throw IntegrityError("solo coverage of object " + std::to_string(id) + " smaller than its visible mask");
        a.visibility = static_cast<double>(a.visible_pixels) / static_cast<double>(a.unoccluded_pixels);
        a.truncated = s.x_min == 0 || s.y_min == 0 || s.x_max == buffers.width - 1 || s.y_max == buffers.height - 1;
        out.push_back(a);
    }
    std::sort(out.begin(), out.end(), [](const Annotation& l, const Annotation& r) { return l.object_id < r.object_id; });
    return out;
}

}  // namespace aerosynth
