#pragma once

// Triangle meshes for world objects. Every class is a composite of boxes
// and vertical prisms scaled to its footprint.

#include <aerosynth/camera.hpp>
#include <aerosynth/world.hpp>

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <vector>

namespace aerosynth {

struct Triangle {
    std::array<Eigen::Vector3d, 3> v;
    Eigen::Vector3d normal;  // outward, unit length
    ObjectId id = kBackgroundId;
    Rgb color;
};

inline constexpr int kCylinderSides = 8;

namespace detail {

struct ObjectFrame {
    Eigen::Vector3d origin;
    Eigen::Vector3d right;
    Eigen::Vector3d forward;

    Eigen::Vector3d to_world(double x, double y, double z) const {
        return origin + x * right + y * forward + Eigen::Vector3d(0, 0, z);
    }
};

inline Rgb shaded(Rgb c, double s) {
    auto ch = [s](std::uint8_t v) {
        return static_cast<std::uint8_t>(std::clamp(std::lround(v * s), 0L, 255L));
    };
    return {ch(c.r), ch(c.g), ch(c.b)};
}

inline void push_quad(std::vector<Triangle>& out, const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                      const Eigen::Vector3d& c, const Eigen::Vector3d& d, const Eigen::Vector3d& normal,
                      ObjectId id, Rgb color) {
    out.push_back({{a, b, c}, normal, id, color});
    out.push_back({{a, c, d}, normal, id, color});
}

// Box spanning local [x0,x1]x[y0,y1]x[z0,z1] meters.
inline void push_box(std::vector<Triangle>& out, const ObjectFrame& fr, double x0, double x1, double y0, double y1,
                     double z0, double z1, ObjectId id, Rgb color) {
    auto p = [&](double x, double y, double z) { return fr.to_world(x, y, z); };
    const Eigen::Vector3d up(0, 0, 1);
    push_quad(out, p(x0, y0, z1), p(x1, y0, z1), p(x1, y1, z1), p(x0, y1, z1), up, id, color);
    push_quad(out, p(x0, y0, z0), p(x0, y1, z0), p(x1, y1, z0), p(x1, y0, z0), -up, id, color);
    push_quad(out, p(x1, y0, z0), p(x1, y1, z0), p(x1, y1, z1), p(x1, y0, z1), fr.right, id, color);
    push_quad(out, p(x0, y0, z0), p(x0, y0, z1), p(x0, y1, z1), p(x0, y1, z0), -fr.right, id, color);
    push_quad(out, p(x0, y1, z0), p(x0, y1, z1), p(x1, y1, z1), p(x1, y1, z0), fr.forward, id, color);
    push_quad(out, p(x0, y0, z0), p(x1, y0, z0), p(x1, y0, z1), p(x0, y0, z1), -fr.forward, id, color);
}

inline void push_cylinder(std::vector<Triangle>& out, const ObjectFrame& fr, double x0, double x1, double y0,
                          double y1, double z0, double z1, ObjectId id, Rgb color) {
    const double cx = (x0 + x1) / 2, cy = (y0 + y1) / 2, rx = (x1 - x0) / 2, ry = (y1 - y0) / 2;
    std::array<Eigen::Vector2d, kCylinderSides> ring;
    for (int k = 0; k < kCylinderSides; ++k) {
        const double a = 2.0 * std::numbers::pi * (k + 0.5) / kCylinderSides;
        ring[k] = {cx + rx * std::cos(a), cy + ry * std::sin(a)};
    }
    const Eigen::Vector3d up(0, 0, 1);
    const Eigen::Vector3d top_c = fr.to_world(cx, cy, z1), bot_c = fr.to_world(cx, cy, z0);
    for (int k = 0; k < kCylinderSides; ++k) {
        const auto& a = ring[k];
        const auto& b = ring[(k + 1) % kCylinderSides];
        const Eigen::Vector3d a0 = fr.to_world(a.x(), a.y(), z0), b0 = fr.to_world(b.x(), b.y(), z0);
        const Eigen::Vector3d a1 = fr.to_world(a.x(), a.y(), z1), b1 = fr.to_world(b.x(), b.y(), z1);
        const Eigen::Vector2d mid = (a + b) / 2 - Eigen::Vector2d(cx, cy);
        Eigen::Vector3d n = mid.x() * fr.right + mid.y() * fr.forward;
        if (n.norm() > 0) n.normalize();
        push_quad(out, a0, b0, b1, a1, n, id, color);
        out.push_back({{top_c, a1, b1}, up, id, color});
        out.push_back({{bot_c, b0, a0}, -up, id, color});
    }
}

}  // namespace detail

/// Appends the world-space mesh of one object.
inline void append_object_mesh(const WorldObject& obj, std::vector<Triangle>& out) {
    const double h = deg2rad(obj.heading);
    const detail::ObjectFrame frame{obj.position, {std::cos(h), -std::sin(h), 0.0}, {std::sin(h), std::cos(h), 0.0}};
    const ObjectClass& cls = object_class(obj.cls);
    if (obj.box_shape) {
        const Extent3& e = *obj.box_shape;
        detail::push_box(out, frame, -e.width / 2, e.width / 2, -e.length / 2, e.length / 2, 0.0, e.height, obj.id,
                         cls.palette);
        return;
    }
    const Extent3& e = cls.footprint;
    for (const Part& part : cls.parts) {
        const Rgb color = detail::shaded(cls.palette, part.shade);
        const double x0 = part.x0 * e.width, x1 = part.x1 * e.width;
        const double y0 = part.y0 * e.length, y1 = part.y1 * e.length;
        const double z0 = part.z0 * e.height, z1 = part.z1 * e.height;
        if (part.kind == Part::Kind::box)
            detail::push_box(out, frame, x0, x1, y0, y1, z0, z1, obj.id, color);
        else
            detail::push_cylinder(out, frame, x0, x1, y0, y1, z0, z1, obj.id, color);
    }
}

inline std::vector<Triangle> object_mesh(const WorldObject& obj) {
    std::vector<Triangle> out;
    append_object_mesh(obj, out);
    return out;
}

/// All object triangles in ascending object id order. The terrain is the
/// analytic plane z = 0 and is not part of the mesh.
inline std::vector<Triangle> scene_mesh(const WorldState& world) {
    std::vector<Triangle> out;
    for (const auto& obj : world.objects) append_object_mesh(obj, out);
    return out;
}

}  // namespace aerosynth
