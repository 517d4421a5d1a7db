#pragma once

// UAV camera model. World frame is Z-up; the camera frame is +x right,
// +y down, +z forward along the optical axis. Orientation is built from
// yaw (about world Z, 0 = +Y, clockwise from above), then pitch about the
// camera right axis (0 = horizontal, 90 = straight down), then roll about
// the optical axis (positive roll turns the right axis toward the down
// axis). MetaRecord angles use the same convention.

#include <aerosynth/errors.hpp>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <numbers>
#include <optional>

namespace aerosynth {

inline constexpr double kNearPlane = 0.1;
inline constexpr double kDefaultHorizontalFov = 60.0;

/// Relative depth margin a surface must beat to replace the current one.
/// Coplanar faces therefore resolve to whichever was drawn first (ground,
/// then objects in ascending id order).
inline constexpr double kDepthTieEpsilon = 1e-9;

inline bool nearer_depth(double candidate, double current) {
    return candidate < current * (1.0 - kDepthTieEpsilon);
}

inline constexpr double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline constexpr double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

/// Maps any angle to [0, 360).
inline double normalize_yaw(double deg) {
    double y = std::fmod(deg, 360.0);
    if (y < 0) y += 360.0;
    return y >= 360.0 ? 0.0 : y;
}

struct CameraPose {
    Eigen::Vector3d position{0.0, 0.0, 50.0};  // z is the altitude above ground
    double yaw = 0.0;
    double pitch = 90.0;
    double roll = 0.0;

    double altitude() const { return position.z(); }

    void validate() const {
        if (!position.allFinite() || !std::isfinite(yaw) || !std::isfinite(pitch) || !std::isfinite(roll))
            throw ConfigError("camera pose must be finite");
        if (position.z() < 0) throw ConfigError("camera altitude must be >= 0");
        if (pitch < -90.0 || pitch > 90.0) throw ConfigError("camera pitch must lie in [-90, 90]");
    }
};

/// Pinhole intrinsics with square pixels and the principal point at the
/// image center.
struct Intrinsics {
    int width = 3840;
    int height = 2160;
    double horizontal_fov = kDefaultHorizontalFov;  // degrees

    double focal() const { return (width / 2.0) / std::tan(deg2rad(horizontal_fov) / 2.0); }
    double cx() const { return width / 2.0; }
    double cy() const { return height / 2.0; }

    /// Same field of view at k times the resolution.
    Intrinsics scaled(int k) const { return {width * k, height * k, horizontal_fov}; }

    void validate() const {
        if (width <= 0 || height <= 0) throw ConfigError("image dimensions must be positive");
        if (!(horizontal_fov > 0.0 && horizontal_fov < 180.0))
            throw ConfigError("horizontal field of view must lie in (0, 180)");
    }
};

/// World-to-camera rotation; its rows are the camera right, down and
/// forward axes expressed in world coordinates.
inline Eigen::Matrix3d camera_rotation(const CameraPose& pose) {
    const double y = deg2rad(pose.yaw), p = deg2rad(pose.pitch), r = deg2rad(pose.roll);
    const Eigen::Vector3d forward(std::sin(y) * std::cos(p), std::cos(y) * std::cos(p), -std::sin(p));
    const Eigen::Vector3d right0(std::cos(y), -std::sin(y), 0.0);
    const Eigen::Vector3d down0 = forward.cross(right0);
    Eigen::Matrix3d rot;
    rot.row(0) = std::cos(r) * right0 + std::sin(r) * down0;
    rot.row(1) = -std::sin(r) * right0 + std::cos(r) * down0;
    rot.row(2) = forward;
    return rot;
}

inline Eigen::Vector3d world_to_camera(const CameraPose& pose, const Eigen::Vector3d& point) {
    return camera_rotation(pose) * (point - pose.position);
}

inline Eigen::Vector3d camera_to_world(const CameraPose& pose, const Eigen::Vector3d& cam_point) {
    return camera_rotation(pose).transpose() * cam_point + pose.position;
}

struct PixelProjection {
    double u;
    double v;
    double depth;  // camera-frame z, meters
};

/// Pinhole projection; nullopt for points on or behind the camera plane.
inline std::optional<PixelProjection> project(const Intrinsics& intr, const Eigen::Vector3d& cam_point) {
    if (!(cam_point.z() > 0.0)) return std::nullopt;
    const double f = intr.focal();
    return PixelProjection{intr.cx() + f * cam_point.x() / cam_point.z(),
                           intr.cy() + f * cam_point.y() / cam_point.z(), cam_point.z()};
}

}  // namespace aerosynth
