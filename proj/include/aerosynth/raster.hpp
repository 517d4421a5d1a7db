#pragma once

// Triangle setup and pixel coverage shared by the frame renderer and the
// per-object solo coverage pass of the annotator. Both must go through
// for_each_covered so that their pixel sets agree exactly.

#include <aerosynth/camera.hpp>
#include <aerosynth/mesh.hpp>

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <span>
#include <thread>
#include <vector>

namespace aerosynth {

/// Camera transform at buffer resolution.
struct ViewTransform {
    Eigen::Matrix3d rotation;
    Eigen::Vector3d origin;
    double focal = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 0;
    int height = 0;
    double near = kNearPlane;

    static ViewTransform make(const CameraPose& pose, const Intrinsics& buffer_intr) {
        return {camera_rotation(pose), pose.position, buffer_intr.focal(), buffer_intr.cx(), buffer_intr.cy(),
                buffer_intr.width, buffer_intr.height, kNearPlane};
    }

    /// World direction of the ray through a pixel center, scaled so that
    /// its camera-frame z component is 1 (ray parameter == depth).
    Eigen::Vector3d pixel_ray(int px, int py) const {
        const Eigen::Vector3d cam((px + 0.5 - cx) / focal, (py + 0.5 - cy) / focal, 1.0);
        return rotation.transpose() * cam;
    }
};

struct ScreenTriangle {
    std::array<double, 3> x, y, inv_z;
    double area;
    int min_px, max_px, min_py, max_py;  // inclusive pixel range, clamped to the image
    std::uint32_t source;                // index into the mesh
};

namespace detail {

inline double edge(double ax, double ay, double bx, double by, double px, double py) {
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
}

inline void emit_screen_triangle(const ViewTransform& view, const std::array<Eigen::Vector3d, 3>& cam,
                                 std::uint32_t source, std::vector<ScreenTriangle>& out) {
    ScreenTriangle t;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (int i = 0; i < 3; ++i) {
        t.x[i] = view.cx + view.focal * cam[i].x() / cam[i].z();
        t.y[i] = view.cy + view.focal * cam[i].y() / cam[i].z();
        t.inv_z[i] = 1.0 / cam[i].z();
        xmin = std::min(xmin, t.x[i]);
        xmax = std::max(xmax, t.x[i]);
        ymin = std::min(ymin, t.y[i]);
        ymax = std::max(ymax, t.y[i]);
    }
    t.area = edge(t.x[0], t.y[0], t.x[1], t.y[1], t.x[2], t.y[2]);
    if (t.area == 0.0 || !std::isfinite(t.area)) return;
    // Pixel centers sit at integer + 0.5.
    const double lo_x = std::max(std::ceil(xmin - 0.5), 0.0);
    const double hi_x = std::min(std::floor(xmax - 0.5), view.width - 1.0);
    const double lo_y = std::max(std::ceil(ymin - 0.5), 0.0);
    const double hi_y = std::min(std::floor(ymax - 0.5), view.height - 1.0);
    if (lo_x > hi_x || lo_y > hi_y) return;
    t.min_px = static_cast<int>(lo_x);
    t.max_px = static_cast<int>(hi_x);
    t.min_py = static_cast<int>(lo_y);
    t.max_py = static_cast<int>(hi_y);
    t.source = source;
    out.push_back(t);
}

}  // namespace detail

/// Transforms, near-clips and projects mesh triangles; drops triangles that
/// cover no pixel center's bounding range.
inline void setup_triangles(const ViewTransform& view, std::span<const Triangle> mesh,
                            std::vector<ScreenTriangle>& out) {
    out.clear();
    for (std::uint32_t index = 0; index < mesh.size(); ++index) {
        const Triangle& tri = mesh[index];
        std::array<Eigen::Vector3d, 3> cam;
        int in_front = 0;
        for (int i = 0; i < 3; ++i) {
            cam[i] = view.rotation * (tri.v[i] - view.origin);
            in_front += cam[i].z() >= view.near;
        }
        if (in_front == 3) {
            detail::emit_screen_triangle(view, cam, index, out);
            continue;
        }
        if (in_front == 0) continue;
        // Sutherland-Hodgman against z >= near; yields a triangle or a quad.
        std::array<Eigen::Vector3d, 4> poly;
        int n = 0;
        for (int i = 0; i < 3; ++i) {
            const Eigen::Vector3d& a = cam[i];
            const Eigen::Vector3d& b = cam[(i + 1) % 3];
            const bool a_in = a.z() >= view.near, b_in = b.z() >= view.near;
            if (a_in) poly[n++] = a;
            if (a_in != b_in) {
                const double s = (view.near - a.z()) / (b.z() - a.z());
                Eigen::Vector3d p = a + s * (b - a);
                p.z() = view.near;
                poly[n++] = p;
            }
        }
        for (int k = 1; k + 1 < n; ++k) detail::emit_screen_triangle(view, {poly[0], poly[k], poly[k + 1]}, index, out);
    }
}

/// Calls fn(px, py, depth) for every pixel center inside the triangle and
/// within [x0, x1] x [y0, y1] (inclusive). Edges are inclusive.
template <class Fn>
void for_each_covered(const ScreenTriangle& t, int x0, int x1, int y0, int y1, Fn&& fn) {
    x0 = std::max(x0, t.min_px);
    x1 = std::min(x1, t.max_px);
    y0 = std::max(y0, t.min_py);
    y1 = std::min(y1, t.max_py);
    const double inv_area = 1.0 / t.area;
    const bool positive = t.area > 0;
    for (int py = y0; py <= y1; ++py) {
        const double cy = py + 0.5;
        for (int px = x0; px <= x1; ++px) {
            const double cx = px + 0.5;
            const double e0 = detail::edge(t.x[1], t.y[1], t.x[2], t.y[2], cx, cy);
            const double e1 = detail::edge(t.x[2], t.y[2], t.x[0], t.y[0], cx, cy);
            const double e2 = detail::edge(t.x[0], t.y[0], t.x[1], t.y[1], cx, cy);
            const bool inside = positive ? (e0 >= 0 && e1 >= 0 && e2 >= 0) : (e0 <= 0 && e1 <= 0 && e2 <= 0);
            if (!inside) continue;
            const double inv_z = (e0 * t.inv_z[0] + e1 * t.inv_z[1] + e2 * t.inv_z[2]) * inv_area;
            fn(px, py, 1.0 / inv_z);
        }
    }
}

/// Runs fn(i) for i in [0, n) on up to hardware_concurrency threads.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    const std::size_t workers = std::min<std::size_t>(n, std::max(1u, std::thread::hardware_concurrency()));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace aerosynth
