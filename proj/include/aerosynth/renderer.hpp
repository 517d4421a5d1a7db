#pragma once

// CPU rasterizer producing color, depth and instance buffers at the
// supersampled buffer resolution.
//
// The terrain is the analytic plane z = 0: every pixel whose ray points
// downward starts with the exact ground depth, then object triangles are
// z-tested on top. Rendering is split into horizontal bands that are
// filled independently, so the result does not depend on thread count.

#include <aerosynth/camera.hpp>
#include <aerosynth/mesh.hpp>
#include <aerosynth/raster.hpp>
#include <aerosynth/rng.hpp>
#include <aerosynth/world.hpp>

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

namespace aerosynth {

enum class Quality : std::uint8_t { low, high };

inline std::string_view to_string(Quality q) { return q == Quality::low ? "low" : "high"; }

inline Quality parse_quality(std::string_view s) {
    if (s == "low") return Quality::low;
    if (s == "high") return Quality::high;
    throw ParseError("unknown quality '" + std::string(s) + "'");
}

struct RenderSettings {
    int out_width = 3840;
    int out_height = 2160;
    int supersample = 2;
    Quality quality = Quality::high;

    int buffer_width() const { return out_width * supersample; }
    int buffer_height() const { return out_height * supersample; }

    void validate() const {
        if (out_width <= 0 || out_height <= 0) throw ConfigError("output dimensions must be positive");
        if (supersample < 1) throw ConfigError("supersample factor must be >= 1");
    }
    friend bool operator==(const RenderSettings&, const RenderSettings&) = default;
};

inline RenderSettings set_quality(RenderSettings settings, Quality level) {
    settings.quality = level;
    return settings;
}

struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel
};

struct FrameBuffers {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> color;  // RGB8
    std::vector<float> depth;         // camera z in meters, +inf where empty
    std::vector<ObjectId> instance;   // 0 = terrain or sky

    std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
};

/// Sun elevation in degrees: rises at 06:00, peaks at noon, sets at 18:00.
inline double sun_elevation_deg(double clock) {
    const double e = 90.0 * std::sin(std::numbers::pi * (wrap_clock(clock) - 21600.0) / 43200.0);
    return std::max(0.0, e);
}

using Color = std::array<double, 3>;

struct Lighting {
    Eigen::Vector3d sun_dir;  // toward the sun
    double sun = 0.0;         // direct light intensity
    double ambient = 0.0;
    Color tint{1, 1, 1};
    Color sky{0, 0, 0};
    double fog_distance = 1.0;  // meters
};

inline Lighting lighting_for(double clock, Weather weather) {
    Lighting l;
    const double elev = deg2rad(sun_elevation_deg(clock));
    // Sun travels from east (06:00) over south to west (18:00).
    const double azimuth = deg2rad(90.0 + 180.0 * (wrap_clock(clock) - 21600.0) / 43200.0);
    l.sun_dir = {std::sin(azimuth) * std::cos(elev), std::cos(azimuth) * std::cos(elev), std::sin(elev)};
    const double day = std::sin(elev);
    double direct = 1.0;
    switch (weather) {
        case Weather::clear:
            l.tint = {1.0, 1.0, 1.0};
            l.fog_distance = 6000.0;
            break;
        case Weather::overcast:
            direct = 0.35;
            l.tint = {0.82, 0.84, 0.88};
            l.fog_distance = 3000.0;
            break;
        case Weather::rain:
            direct = 0.25;
            l.tint = {0.70, 0.74, 0.82};
            l.fog_distance = 1200.0;
            break;
        case Weather::fog:
            direct = 0.4;
            l.tint = {0.88, 0.88, 0.9};
            l.fog_distance = 250.0;
            break;
    }
    l.sun = 0.7 * day * direct;
    l.ambient = 0.04 + 0.36 * day;
    const double sky_level = 0.05 + 0.95 * day;
    l.sky = {0.53 * sky_level, 0.70 * sky_level, 0.92 * sky_level};
    return l;
}

namespace detail {

inline double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

/// Lattice value noise in [0, 1).
inline double value_noise(double x, double y, std::uint64_t salt) {
    const double fx = std::floor(x), fy = std::floor(y);
    const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy);
    auto h = [salt](std::int64_t a, std::int64_t b) {
        return hash01(hash_combine(hash_combine(salt, static_cast<std::uint64_t>(a)), static_cast<std::uint64_t>(b)));
    };
    const double tx = smooth(x - fx), ty = smooth(y - fy);
    const double a = h(ix, iy), b = h(ix + 1, iy), c = h(ix, iy + 1), d = h(ix + 1, iy + 1);
    return (a + (b - a) * tx) * (1 - ty) + (c + (d - c) * tx) * ty;
}

inline Color biome_base(Biome biome) {
    switch (biome) {
        case Biome::urban: return {0.46, 0.46, 0.48};
        case Biome::water: return {0.10, 0.30, 0.50};
        case Biome::pasture: return {0.30, 0.50, 0.20};
    }
    return {0.5, 0.5, 0.5};
}

inline Color terrain_texture(Biome biome, double x, double y) {
    Color c = biome_base(biome);
    switch (biome) {
        case Biome::urban: {
            // Road grid every 120 m, 12 m wide, dashed center line.
            constexpr double block = 120.0, half_road = 6.0;
            const double mx = x - block * std::floor(x / block), my = y - block * std::floor(y / block);
            const double dx = std::abs(mx - block / 2), dy = std::abs(my - block / 2);
            const double n = 0.92 + 0.16 * value_noise(x * 0.5, y * 0.5, 11);
            if (dx < half_road || dy < half_road) {
                c = {0.24, 0.24, 0.26};
                const bool dash_x = dx < 0.15 && std::fmod(std::abs(y), 6.0) < 3.0 && dy >= half_road;
                const bool dash_y = dy < 0.15 && std::fmod(std::abs(x), 6.0) < 3.0 && dx >= half_road;
                if (dash_x || dash_y) c = {0.9, 0.9, 0.85};
            }
            for (double& ch : c) ch *= n;
            break;
        }
        case Biome::water: {
            const double wave = std::sin(0.6 * x + 0.4 * y) * std::sin(0.5 * y - 0.3 * x);
            const double n = value_noise(x * 0.8, y * 0.8, 23);
            const double s = 1.0 + 0.15 * wave + 0.2 * (n - 0.5);
            for (double& ch : c) ch *= s;
            if (n > 0.93) c = {0.8, 0.85, 0.9};  // foam
            break;
        }
        case Biome::pasture: {
            const double n = 0.6 * value_noise(x * 0.1, y * 0.1, 37) + 0.4 * value_noise(x * 0.7, y * 0.7, 41);
            const double s = 0.8 + 0.4 * n;
            c = {c[0] * s, c[1] * s, c[2] * (0.9 + 0.2 * n)};
            break;
        }
    }
    return c;
}

inline double flat_face_factor(const Eigen::Vector3d& n) {
    if (n.z() > 0.5) return 0.9;
    if (n.z() < -0.5) return 0.3;
    return std::abs(n.x()) >= std::abs(n.y()) ? 0.7 : 0.55;
}

inline std::uint8_t to_byte(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

inline constexpr int kBandRows = 32;
inline constexpr std::int32_t kGround = -1;
inline constexpr std::int32_t kSky = -2;

}  // namespace detail

/// Renders the world from the given pose. The film grain of high-quality
/// frames is keyed by grain_seed (normally derived from the frame id).
inline FrameBuffers render(const WorldState& world, const CameraPose& pose, const Intrinsics& intr,
                           const RenderSettings& settings, std::uint64_t grain_seed = 0) {
    settings.validate();
    intr.validate();
    pose.validate();
    if (intr.width != settings.out_width || intr.height != settings.out_height)
        throw ConfigError("intrinsics do not match render output dimensions");

    const Intrinsics buffer_intr = intr.scaled(settings.supersample);
    const ViewTransform view = ViewTransform::make(pose, buffer_intr);
    const std::vector<Triangle> mesh = scene_mesh(world);
    std::vector<ScreenTriangle> tris;
    setup_triangles(view, mesh, tris);

    const int W = view.width, H = view.height;
    const int bands = (H + detail::kBandRows - 1) / detail::kBandRows;
    std::vector<std::vector<std::uint32_t>> binned(bands);
    for (std::uint32_t i = 0; i < tris.size(); ++i)
        for (int b = tris[i].min_py / detail::kBandRows; b <= tris[i].max_py / detail::kBandRows; ++b)
            binned[b].push_back(i);

    FrameBuffers fb;
    fb.width = W;
    fb.height = H;
    const std::size_t count = static_cast<std::size_t>(W) * H;
    fb.color.resize(count * 3);
    fb.depth.resize(count);
    fb.instance.resize(count);

    const Lighting light = lighting_for(world.clock, world.weather);
    const bool high = settings.quality == Quality::high;
    const Eigen::Matrix3d to_world = view.rotation.transpose();
    constexpr double kInf = std::numeric_limits<double>::infinity();

    parallel_for(static_cast<std::size_t>(bands), [&](std::size_t band) {
        const int y0 = static_cast<int>(band) * detail::kBandRows;
        const int y1 = std::min(H, y0 + detail::kBandRows) - 1;
        const std::size_t rows = static_cast<std::size_t>(y1 - y0 + 1);
        std::vector<double> depth(rows * W, kInf);
        std::vector<std::int32_t> surface(rows * W, detail::kSky);

        // Ground plane: depth along a ray with unit camera z is -h / dir.z.
        for (int py = y0; py <= y1; ++py) {
            const double cam_y = (py + 0.5 - view.cy) / view.focal;
            for (int px = 0; px < W; ++px) {
                const double cam_x = (px + 0.5 - view.cx) / view.focal;
                const double dz = to_world(2, 0) * cam_x + to_world(2, 1) * cam_y + to_world(2, 2);
                if (dz < 0.0) {
                    const double t = -view.origin.z() / dz;
                    if (t >= view.near) {
                        const std::size_t i = static_cast<std::size_t>(py - y0) * W + px;
                        depth[i] = t;
                        surface[i] = detail::kGround;
                    }
                }
            }
        }

        for (std::uint32_t ti : binned[band]) {
            const ScreenTriangle& t = tris[ti];
            for_each_covered(t, 0, W - 1, y0, y1, [&](int px, int py, double z) {
                const std::size_t i = static_cast<std::size_t>(py - y0) * W + px;
                if (nearer_depth(z, depth[i])) {
                    depth[i] = z;
                    surface[i] = static_cast<std::int32_t>(t.source);
                }
            });
        }

        for (int py = y0; py <= y1; ++py) {
            for (int px = 0; px < W; ++px) {
                const std::size_t li = static_cast<std::size_t>(py - y0) * W + px;
                const std::size_t gi = fb.index(px, py);
                const std::int32_t s = surface[li];
                const double z = depth[li];
                fb.depth[gi] = s == detail::kSky ? std::numeric_limits<float>::infinity() : static_cast<float>(z);
                fb.instance[gi] = s >= 0 ? mesh[s].id : kBackgroundId;

                Color c;
                if (s == detail::kSky) {
                    c = light.sky;
                    if (high) {
                        const Eigen::Vector3d dir = view.pixel_ray(px, py).normalized();
                        const double haze = std::exp(-6.0 * std::max(0.0, dir.z()));
                        const double level = light.ambient + light.sun;
                        for (int k = 0; k < 3; ++k) c[k] += (0.8 * level - c[k]) * haze * 0.5;
                    }
                } else {
                    Eigen::Vector3d normal(0, 0, 1);
                    Color base;
                    if (s == detail::kGround) {
                        base = detail::biome_base(world.biome);
                    } else {
                        const Triangle& tri = mesh[s];
                        normal = tri.normal;
                        base = {tri.color.r / 255.0, tri.color.g / 255.0, tri.color.b / 255.0};
                    }
                    if (!high) {
                        const double lit = light.ambient + light.sun * detail::flat_face_factor(normal);
                        for (int k = 0; k < 3; ++k) c[k] = base[k] * lit;
                    } else {
                        const Eigen::Vector3d p = view.origin + z * view.pixel_ray(px, py);
                        double texture = 1.0;
                        if (s == detail::kGround)
                            base = detail::terrain_texture(world.biome, p.x(), p.y());
                        else
                            texture = 0.92 + 0.16 * detail::value_noise(p.x() * 4.0, p.y() * 4.0 + p.z() * 4.0, 53);
                        const double lit = light.ambient + light.sun * std::max(0.0, normal.dot(light.sun_dir));
                        const double fog = 1.0 - std::exp(-z / light.fog_distance);
                        const double fog_level = 0.8 * (light.ambient + light.sun);
                        for (int k = 0; k < 3; ++k) {
                            const double surface_c = base[k] * lit * texture;
                            c[k] = surface_c + (fog_level - surface_c) * fog;
                        }
                    }
                }
                if (high) {
                    const double grain =
                        0.03 * (hash01(hash_combine(grain_seed, static_cast<std::uint64_t>(gi))) - 0.5);
                    for (double& ch : c) ch += grain;
                }
                for (int k = 0; k < 3; ++k) fb.color[gi * 3 + k] = detail::to_byte(c[k] * light.tint[k]);
            }
        }
    });
    return fb;
}

/// Box-filters the color buffer down by an integer factor.
inline Image downsample(const FrameBuffers& fb, int factor) {
    if (factor < 1 || fb.width % factor != 0 || fb.height % factor != 0)
        throw ConfigError("downsample factor must divide the buffer size");
    Image img;
    img.width = fb.width / factor;
    img.height = fb.height / factor;
    img.rgb.resize(static_cast<std::size_t>(img.width) * img.height * 3);
    const int n = factor * factor;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            std::array<int, 3> sum{0, 0, 0};
            for (int sy = 0; sy < factor; ++sy)
                for (int sx = 0; sx < factor; ++sx) {
                    const std::size_t i = fb.index(x * factor + sx, y * factor + sy) * 3;
                    for (int k = 0; k < 3; ++k) sum[k] += fb.color[i + k];
                }
            const std::size_t o = (static_cast<std::size_t>(y) * img.width + x) * 3;
            for (int k = 0; k < 3; ++k) img.rgb[o + k] = static_cast<std::uint8_t>((sum[k] + n / 2) / n);
        }
    }
    return img;
}

/// Mean Rec. 709 luma in [0, 1].
inline double mean_luminance(std::span<const std::uint8_t> rgb) {
    double acc = 0.0;
    const std::size_t n = rgb.size() / 3;
    for (std::size_t i = 0; i < n; ++i)
        acc += 0.2126 * rgb[3 * i] + 0.7152 * rgb[3 * i + 1] + 0.0722 * rgb[3 * i + 2];
    return n ? acc / (255.0 * n) : 0.0;
}

}  // namespace aerosynth
