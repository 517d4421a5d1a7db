#pragma once

// Procedural world state: object catalog, spawn/despawn lifecycle and
// random-waypoint motion. Coordinates are right-handed, Z-up, in meters;
// the ground (or water surface) is the plane z = 0.

#include <aerosynth/errors.hpp>
#include <aerosynth/rng.hpp>

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace aerosynth {

using ObjectId = std::uint32_t;

/// Reserved instance id for terrain and sky.
inline constexpr ObjectId kBackgroundId = 0;
inline constexpr double kSecondsPerDay = 86400.0;
/// Objects may live this far outside the scenario area.
inline constexpr double kAreaMargin = 500.0;
inline constexpr double kWaypointRadius = 100.0;
inline constexpr double kDefaultMaxAge = 200.0;

enum class ClassId : std::uint8_t {
    people,
    bicycle,
    car,
    truck,
    van,
    motor,
    bus,
    swimmer,
    floater,
    boat,
    swimmer_on_boat,
    floater_on_boat,
    cow,
};
inline constexpr std::size_t kClassCount = 13;

enum class Biome : std::uint8_t { urban, water, pasture };
enum class Weather : std::uint8_t { clear, overcast, rain, fog };

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Object size: length along the heading, width across it, height up.
struct Extent3 {
    double length = 1.0;
    double width = 1.0;
    double height = 1.0;
    friend bool operator==(const Extent3&, const Extent3&) = default;
};

/// One solid of a class mesh, in unit-footprint coordinates: x across
/// [-0.5, 0.5], y along the heading [-0.5, 0.5], z up [0, 1]. Cylinders are
/// vertical and inscribed in their x/y bounds.
struct Part {
    enum class Kind : std::uint8_t { box, cylinder };
    Kind kind = Kind::box;
    double x0, x1, y0, y1, z0, z1;
    double shade = 1.0;
};

struct ObjectClass {
    ClassId id;
    std::string_view name;
    Extent3 footprint;
    Rgb palette;
    double speed;  // m/s, random-waypoint cruise speed
    std::span<const Part> parts;
};

namespace detail {

using K = Part::Kind;

inline constexpr Part kPeopleParts[] = {
    {K::box, -0.3, 0.3, -0.25, 0.25, 0.0, 0.48, 0.7},
    {K::box, -0.5, 0.5, -0.5, 0.5, 0.48, 0.84, 1.0},
    {K::cylinder, -0.22, 0.22, -0.3, 0.3, 0.86, 1.0, 1.2},
};
inline constexpr Part kBicycleParts[] = {
    {K::box, -0.1, 0.1, -0.5, -0.1, 0.0, 0.4, 0.4},
    {K::box, -0.1, 0.1, 0.1, 0.5, 0.0, 0.4, 0.4},
    {K::box, -0.15, 0.15, -0.3, 0.3, 0.3, 0.5, 1.0},
    {K::box, -0.5, 0.5, -0.2, 0.1, 0.5, 0.85, 0.8},
    {K::cylinder, -0.2, 0.2, -0.1, 0.15, 0.87, 1.0, 1.2},
};
inline constexpr Part kCarParts[] = {
    {K::box, -0.5, 0.5, -0.5, 0.5, 0.08, 0.55, 1.0},
    {K::box, -0.45, 0.45, -0.3, 0.2, 0.55, 1.0, 0.75},
};
inline constexpr Part kTruckParts[] = {
    {K::box, -0.45, 0.45, -0.5, 0.5, 0.0, 0.12, 0.4},
    {K::box, -0.5, 0.5, 0.28, 0.5, 0.1, 0.8, 0.85},
    {K::box, -0.5, 0.5, -0.5, 0.25, 0.1, 1.0, 1.0},
};
inline constexpr Part kVanParts[] = {
    {K::box, -0.5, 0.5, -0.5, 0.35, 0.08, 1.0, 1.0},
    {K::box, -0.5, 0.5, 0.35, 0.5, 0.08, 0.5, 0.85},
};
inline constexpr Part kMotorParts[] = {
    {K::box, -0.12, 0.12, -0.5, 0.5, 0.0, 0.35, 0.4},
    {K::box, -0.35, 0.35, -0.35, 0.35, 0.3, 0.55, 1.0},
    {K::box, -0.5, 0.5, -0.25, 0.1, 0.5, 0.85, 0.8},
    {K::cylinder, -0.22, 0.22, -0.12, 0.12, 0.86, 1.0, 1.2},
};
inline constexpr Part kBusParts[] = {
    {K::box, -0.48, 0.48, -0.5, 0.5, 0.0, 0.1, 0.3},
    {K::box, -0.5, 0.5, -0.5, 0.5, 0.1, 0.92, 1.0},
    {K::box, -0.4, 0.4, -0.4, 0.4, 0.92, 1.0, 0.8},
};
inline constexpr Part kSwimmerParts[] = {
    {K::box, -0.4, 0.4, -0.5, 0.3, 0.0, 0.7, 1.0},
    {K::cylinder, -0.35, 0.35, 0.3, 0.5, 0.0, 1.0, 1.2},
};
inline constexpr Part kFloaterParts[] = {
    {K::box, -0.5, 0.5, -0.5, 0.5, 0.0, 0.6, 1.0},
    {K::cylinder, -0.35, 0.35, -0.35, 0.35, 0.6, 1.0, 1.2},
};
inline constexpr Part kBoatParts[] = {
    {K::box, -0.5, 0.5, -0.5, 0.5, 0.0, 0.55, 1.0},
    {K::box, -0.35, 0.35, -0.2, 0.2, 0.55, 1.0, 0.8},
};
inline constexpr Part kSwimmerOnBoatParts[] = {
    {K::box, -0.5, 0.5, -0.5, 0.5, 0.0, 0.4, 1.0},
    {K::box, -0.12, 0.12, 0.05, 0.15, 0.4, 0.9, 0.5},
    {K::cylinder, -0.08, 0.08, 0.07, 0.13, 0.9, 1.0, 0.6},
};
inline constexpr Part kFloaterOnBoatParts[] = {
    {K::box, -0.5, 0.5, -0.5, 0.5, 0.0, 0.4, 1.0},
    {K::box, -0.3, 0.3, -0.35, -0.05, 0.4, 0.55, 0.5},
    {K::cylinder, -0.08, 0.08, -0.45, -0.37, 0.4, 0.6, 0.6},
};
inline constexpr Part kCowParts[] = {
    {K::box, -0.5, 0.5, -0.35, 0.3, 0.45, 0.92, 1.0},
    {K::box, -0.3, 0.3, 0.3, 0.5, 0.65, 1.0, 0.9},
    {K::cylinder, -0.45, -0.25, -0.3, -0.18, 0.0, 0.45, 0.7},
    {K::cylinder, 0.25, 0.45, -0.3, -0.18, 0.0, 0.45, 0.7},
    {K::cylinder, -0.45, -0.25, 0.15, 0.27, 0.0, 0.45, 0.7},
    {K::cylinder, 0.25, 0.45, 0.15, 0.27, 0.0, 0.45, 0.7},
};

inline constexpr std::array<ObjectClass, kClassCount> kCatalog = {{
    {ClassId::people, "people", {0.45, 0.5, 1.75}, {200, 60, 60}, 1.4, kPeopleParts},
    {ClassId::bicycle, "bicycle", {1.75, 0.55, 1.7}, {60, 160, 200}, 5.0, kBicycleParts},
    {ClassId::car, "car", {4.5, 1.8, 1.45}, {40, 90, 190}, 8.0, kCarParts},
    {ClassId::truck, "truck", {7.5, 2.5, 3.4}, {230, 160, 40}, 8.0, kTruckParts},
    {ClassId::van, "van", {5.0, 2.0, 2.1}, {220, 220, 220}, 8.0, kVanParts},
    {ClassId::motor, "motor", {2.1, 0.8, 1.45}, {150, 40, 150}, 8.0, kMotorParts},
    {ClassId::bus, "bus", {12.0, 2.55, 3.2}, {240, 200, 30}, 8.0, kBusParts},
    {ClassId::swimmer, "swimmer", {1.8, 0.6, 0.3}, {250, 120, 60}, 0.8, kSwimmerParts},
    {ClassId::floater, "floater", {0.6, 0.6, 0.6}, {250, 200, 60}, 0.3, kFloaterParts},
    {ClassId::boat, "boat", {6.0, 2.2, 1.3}, {235, 235, 240}, 4.0, kBoatParts},
    {ClassId::swimmer_on_boat, "swimmer-on-boat", {6.0, 2.2, 1.8}, {200, 230, 240}, 4.0, kSwimmerOnBoatParts},
    {ClassId::floater_on_boat, "floater-on-boat", {6.0, 2.2, 1.5}, {240, 230, 200}, 4.0, kFloaterOnBoatParts},
    {ClassId::cow, "cow", {2.4, 0.8, 1.5}, {120, 80, 50}, 0.7, kCowParts},
}};

}  // namespace detail

inline std::span<const ObjectClass, kClassCount> catalog() { return detail::kCatalog; }

inline const ObjectClass& object_class(ClassId id) {
    return detail::kCatalog[static_cast<std::size_t>(id)];
}

inline std::string_view class_name(ClassId id) { return object_class(id).name; }

/// Accepts catalog names plus the short forms "ppl" and "bike".
inline std::optional<ClassId> find_class(std::string_view name) {
    if (name == "ppl") return ClassId::people;
    if (name == "bike") return ClassId::bicycle;
    for (const auto& c : detail::kCatalog)
        if (c.name == name) return c.id;
    return std::nullopt;
}

inline ClassId parse_class(std::string_view name) {
    if (auto id = find_class(name)) return *id;
    throw ParseError("unknown object class '" + std::string(name) + "'");
}

inline std::string_view to_string(Biome b) {
    switch (b) {
        case Biome::urban: return "urban";
        case Biome::water: return "water";
        case Biome::pasture: return "pasture";
    }
    return "?";
}

inline Biome parse_biome(std::string_view s) {
    if (s == "urban") return Biome::urban;
    if (s == "water") return Biome::water;
    if (s == "pasture") return Biome::pasture;
    throw ParseError("unknown biome '" + std::string(s) + "'");
}

inline std::string_view to_string(Weather w) {
    switch (w) {
        case Weather::clear: return "clear";
        case Weather::overcast: return "overcast";
        case Weather::rain: return "rain";
        case Weather::fog: return "fog";
    }
    return "?";
}

inline Weather parse_weather(std::string_view s) {
    if (s == "clear") return Weather::clear;
    if (s == "overcast") return Weather::overcast;
    if (s == "rain") return Weather::rain;
    if (s == "fog") return Weather::fog;
    throw ParseError("unknown weather '" + std::string(s) + "'");
}

inline constexpr std::array<Weather, 4> kAllWeathers = {Weather::clear, Weather::overcast, Weather::rain,
                                                        Weather::fog};

/// Axis-aligned rectangle on the ground plane.
struct AreaRect {
    double x_min = -5000, y_min = -5000, x_max = 5000, y_max = 5000;

    bool contains(double x, double y, double margin = 0.0) const {
        return x >= x_min - margin && x <= x_max + margin && y >= y_min - margin && y <= y_max + margin;
    }
    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }
    friend bool operator==(const AreaRect&, const AreaRect&) = default;
};

struct WorldObject {
    ObjectId id = 0;
    ClassId cls = ClassId::car;
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    double heading = 0.0;  // degrees, 0 = +Y, clockwise seen from above
    double spawn_time = 0.0;
    Eigen::Vector2d waypoint = Eigen::Vector2d::Zero();
    double speed = 0.0;
    /// Replaces the class mesh with one box of this size (calibration targets).
    std::optional<Extent3> box_shape;

    Extent3 extent() const { return box_shape ? *box_shape : object_class(cls).footprint; }
    friend bool operator==(const WorldObject&, const WorldObject&) = default;
};

inline double wrap_clock(double seconds) {
    double c = std::fmod(seconds, kSecondsPerDay);
    if (c < 0) c += kSecondsPerDay;
    return c >= kSecondsPerDay ? 0.0 : c;
}

struct WorldState {
    Biome biome = Biome::pasture;
    AreaRect area;
    std::vector<WorldObject> objects;  // ascending id
    double clock = 43200.0;            // seconds of day
    Weather weather = Weather::clear;
    std::uint64_t rng_seed = 0;
    Rng rng;
    ObjectId next_id = 1;

    static WorldState create(Biome biome, AreaRect area, std::uint64_t seed) {
        WorldState w;
        w.biome = biome;
        w.area = area;
        w.rng_seed = seed;
        w.rng = Rng(seed);
        return w;
    }

    const WorldObject* find(ObjectId id) const {
        auto it = std::lower_bound(objects.begin(), objects.end(), id,
                                   [](const WorldObject& o, ObjectId v) { return o.id < v; });
        return it != objects.end() && it->id == id ? &*it : nullptr;
    }
    WorldObject* find(ObjectId id) {
        return const_cast<WorldObject*>(static_cast<const WorldState&>(*this).find(id));
    }

    void set_clock(double seconds) { clock = wrap_clock(seconds); }
};

namespace detail {

inline Eigen::Vector2d random_waypoint(WorldState& state, const Eigen::Vector2d& around) {
    const double angle = 2.0 * std::numbers::pi * state.rng.uniform01();
    const double radius = kWaypointRadius * std::sqrt(state.rng.uniform01());
    Eigen::Vector2d p = around + radius * Eigen::Vector2d(std::cos(angle), std::sin(angle));
    const auto& a = state.area;
    p.x() = std::clamp(p.x(), a.x_min - kAreaMargin, a.x_max + kAreaMargin);
    p.y() = std::clamp(p.y(), a.y_min - kAreaMargin, a.y_max + kAreaMargin);
    return p;
}

}  // namespace detail

/// Adds an object with a fresh id. Throws PositionError outside the area
/// expanded by kAreaMargin.
inline ObjectId spawn_object(WorldState& state, ClassId cls, const Eigen::Vector3d& position, double heading,
                             double now) {
    if (!state.area.contains(position.x(), position.y(), kAreaMargin)) {
        throw PositionError("spawn position (" + std::to_string(position.x()) + ", " +
                            std::to_string(position.y()) + ") outside area bounds");
    }
    WorldObject obj;
    obj.id = state.next_id++;
    obj.cls = cls;
    obj.position = position;
    obj.heading = heading;
    obj.spawn_time = now;
    obj.speed = object_class(cls).speed;
    obj.waypoint = detail::random_waypoint(state, position.head<2>());
    state.objects.push_back(std::move(obj));
    return state.objects.back().id;
}

/// Removes every object whose age has reached max_age; returns how many.
inline std::size_t despawn_expired(WorldState& state, double now, double max_age = kDefaultMaxAge) {
    if (now < 0) throw InputError("despawn_expired: negative time");
    return std::erase_if(state.objects, [&](const WorldObject& o) { return now - o.spawn_time >= max_age; });
}

/// Random-waypoint motion. Objects advance toward their waypoint at their
/// speed; within 1 m of it they draw a new one from the world RNG.
inline void step_motion(WorldState& state, double dt) {
    if (!(dt > 0)) throw InputError("step_motion: dt must be positive");
    for (auto& obj : state.objects) {
        if (obj.speed <= 0) continue;
        Eigen::Vector2d pos = obj.position.head<2>();
        const Eigen::Vector2d to = obj.waypoint - pos;
        const double dist = to.norm();
        const double step = obj.speed * dt;
        if (dist <= step) {
            pos = obj.waypoint;
        } else {
            pos += to * (step / dist);
        }
        if (dist > 0) obj.heading = std::fmod(std::atan2(to.x(), to.y()) * 180.0 / std::numbers::pi + 360.0, 360.0);
        obj.position.head<2>() = pos;
        if ((obj.waypoint - pos).norm() < 1.0) obj.waypoint = detail::random_waypoint(state, pos);
    }
}

using ClassWeights = std::map<ClassId, double>;

/// Draws a class with probability proportional to its weight.
inline ClassId sample_class(const ClassWeights& weights, Rng& rng) {
    double total = 0.0;
    for (const auto& [cls, w] : weights) {
        if (!(w >= 0) || !std::isfinite(w)) throw ConfigError("class weights must be finite and non-negative");
        total += w;
    }
    if (!(total > 0)) throw ConfigError("class weights are all zero");
    const double u = rng.uniform01() * total;
    double acc = 0.0;
    ClassId last = weights.begin()->first;
    for (const auto& [cls, w] : weights) {
        if (w <= 0) continue;
        acc += w;
        last = cls;
        if (u < acc) return cls;
    }
    return last;
}

}  // namespace aerosynth
