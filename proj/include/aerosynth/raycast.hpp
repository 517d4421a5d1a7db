#pragma once

// Brute-force ray caster used as a test oracle for the rasterizer: one ray
// per buffer pixel center, Moller-Trumbore against every object triangle
// and an exact ray/plane test for the ground. Shares only the scene mesh
// and camera model with the renderer.

#include <aerosynth/annotate.hpp>
#include <aerosynth/camera.hpp>
#include <aerosynth/mesh.hpp>
#include <aerosynth/renderer.hpp>
#include <aerosynth/world.hpp>

#include <Eigen/Core>

#include <algorithm>
#include <limits>
#include <optional>
#include <vector>

namespace aerosynth {

struct RayHit {
    double depth = std::numeric_limits<double>::infinity();  // ray parameter with unit camera z
    ObjectId id = kBackgroundId;
    bool hit = false;
};

class RayCaster {
public:
    RayCaster(const WorldState& world, double near = kNearPlane) : near_(near) {
        for (const auto& obj : world.objects) {
            Body body;
            body.id = obj.id;
            body.triangles = object_mesh(obj);
            body.lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
            body.hi = -body.lo;
            for (const auto& t : body.triangles)
                for (const auto& v : t.v) {
                    body.lo = body.lo.cwiseMin(v);
                    body.hi = body.hi.cwiseMax(v);
                }
            bodies_.push_back(std::move(body));
        }
    }

    /// Nearest hit with ray parameter >= near; the ground (z = 0) is tested
    /// first, then objects in ascending id order, using nearer_depth().
    RayHit cast(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) const {
        RayHit best;
        if (dir.z() < 0.0) {
            const double t = -origin.z() / dir.z();
            if (t >= near_) best = {t, kBackgroundId, true};
        }
        for (const auto& body : bodies_) {
            if (!slab_hit(origin, dir, body.lo, body.hi, best.depth)) continue;
            for (const auto& tri : body.triangles) {
                const auto t = intersect(origin, dir, tri);
                if (t && *t >= near_ && nearer_depth(*t, best.depth)) best = {*t, body.id, true};
            }
        }
        return best;
    }

    /// Moller-Trumbore with inclusive edges; returns the ray parameter.
    static std::optional<double> intersect(const Eigen::Vector3d& o, const Eigen::Vector3d& d, const Triangle& tri) {
        const Eigen::Vector3d e1 = tri.v[1] - tri.v[0];
        const Eigen::Vector3d e2 = tri.v[2] - tri.v[0];
        const Eigen::Vector3d pvec = d.cross(e2);
        const double det = e1.dot(pvec);
        if (det == 0.0) return std::nullopt;
        const double inv = 1.0 / det;
        const Eigen::Vector3d tvec = o - tri.v[0];
        const double u = tvec.dot(pvec) * inv;
        if (u < 0.0 || u > 1.0) return std::nullopt;
        const Eigen::Vector3d qvec = tvec.cross(e1);
        const double v = d.dot(qvec) * inv;
        if (v < 0.0 || u + v > 1.0) return std::nullopt;
        return e2.dot(qvec) * inv;
    }

private:
    struct Body {
        ObjectId id;
        std::vector<Triangle> triangles;
        Eigen::Vector3d lo, hi;
    };

    static bool slab_hit(const Eigen::Vector3d& o, const Eigen::Vector3d& d, const Eigen::Vector3d& lo,
                         const Eigen::Vector3d& hi, double t_max) {
        constexpr double pad = 1e-6;
        double t0 = -std::numeric_limits<double>::infinity(), t1 = t_max * (1 + 1e-9) + pad;
        for (int k = 0; k < 3; ++k) {
            if (d[k] == 0.0) {
                if (o[k] < lo[k] - pad || o[k] > hi[k] + pad) return false;
                continue;
            }
            double a = (lo[k] - pad - o[k]) / d[k], b = (hi[k] + pad - o[k]) / d[k];
            if (a > b) std::swap(a, b);
            t0 = std::max(t0, a);
            t1 = std::min(t1, b);
            if (t0 > t1) return false;
        }
        return true;
    }

    double near_;
    std::vector<Body> bodies_;
};

/// Per-pixel nearest-hit ids and depths at buffer resolution.
struct OracleFrame {
    int width = 0;
    int height = 0;
    int supersample = 1;
    std::vector<ObjectId> instance;
    std::vector<double> depth;
};

inline OracleFrame raycast_frame(const WorldState& world, const CameraPose& pose, const Intrinsics& intr,
                                 const RenderSettings& settings) {
    const Intrinsics bi = intr.scaled(settings.supersample);
    const Eigen::Matrix3d to_world = camera_rotation(pose).transpose();
    const double f = bi.focal(), cx = bi.cx(), cy = bi.cy();
    const RayCaster caster(world);
    OracleFrame frame;
    frame.width = bi.width;
    frame.height = bi.height;
    frame.supersample = settings.supersample;
    frame.instance.assign(static_cast<std::size_t>(bi.width) * bi.height, kBackgroundId);
    frame.depth.assign(frame.instance.size(), std::numeric_limits<double>::infinity());
    parallel_for(static_cast<std::size_t>(bi.height), [&](std::size_t row) {
        const int py = static_cast<int>(row);
        for (int px = 0; px < bi.width; ++px) {
            const Eigen::Vector3d dir = to_world * Eigen::Vector3d((px + 0.5 - cx) / f, (py + 0.5 - cy) / f, 1.0);
            const RayHit hit = caster.cast(pose.position, dir);
            const std::size_t i = static_cast<std::size_t>(py) * bi.width + px;
            frame.instance[i] = hit.id;
            frame.depth[i] = hit.depth;
        }
    });
    return frame;
}

/// Output-resolution box of the pixels where object_id is the nearest hit;
/// nullopt when the object is hidden, off-screen or behind the camera.
inline std::optional<PixelBox> bbox_from_frame(const OracleFrame& frame, ObjectId object_id) {
    int x0 = std::numeric_limits<int>::max(), y0 = x0, x1 = -1, y1 = -1;
    for (int y = 0; y < frame.height; ++y)
        for (int x = 0; x < frame.width; ++x)
            if (frame.instance[static_cast<std::size_t>(y) * frame.width + x] == object_id) {
                x0 = std::min(x0, x);
                x1 = std::max(x1, x);
                y0 = std::min(y0, y);
                y1 = std::max(y1, y);
            }
    if (x1 < 0) return std::nullopt;
    return downscale_bounds(x0, y0, x1, y1, frame.supersample);
}

inline std::size_t pixel_count(const OracleFrame& frame, ObjectId object_id) {
    return static_cast<std::size_t>(std::count(frame.instance.begin(), frame.instance.end(), object_id));
}

inline std::optional<PixelBox> bbox_oracle(const WorldState& world, const CameraPose& pose, const Intrinsics& intr,
                                           const RenderSettings& settings, ObjectId object_id) {
    if (world.find(object_id) == nullptr)
        throw IntegrityError("bbox_oracle: unknown object " + std::to_string(object_id));
    return bbox_from_frame(raycast_frame(world, pose, intr, settings), object_id);
}

}  // namespace aerosynth
