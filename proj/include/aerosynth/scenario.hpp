#pragma once

// Scenario scheduler: area traversal, camera sampling, spawn rules,
// capture cadence and object lifetime. The simulation advances in fixed
// one-second ticks.

#include <aerosynth/camera.hpp>
#include <aerosynth/errors.hpp>
#include <aerosynth/renderer.hpp>
#include <aerosynth/rng.hpp>
#include <aerosynth/world.hpp>

#include <Eigen/Core>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <array>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace aerosynth {

inline constexpr double kTickSeconds = 1.0;
inline constexpr double kAgentSpeed = 10.0;  // m/s, horizontal
inline constexpr std::size_t kHourBins = 24;

struct Range {
    double min = 0.0;
    double max = 0.0;

    bool contains(double v) const { return v >= min && v <= max; }
    double sample(Rng& rng) const { return min == max ? min : rng.uniform(min, max); }
    friend bool operator==(const Range&, const Range&) = default;
};

// Placement window for ambient (class_weights) spawns, relative to the camera.
inline constexpr Range kAmbientForward{20, 200};
inline constexpr Range kAmbientLateral{-150, 150};

struct SpawnRule {
    int count = 1;
    ClassId cls = ClassId::cow;
    double period = 1.0;  // seconds
    Range forward_range{50, 250};
    Range lateral_range{-160, 160};

    friend bool operator==(const SpawnRule&, const SpawnRule&) = default;
};

/// Parses "<count>x<class>@<period>[s]", e.g. "4xcow@2s". Ranges are left
/// at their defaults.
inline SpawnRule parse_spawn_spec(std::string_view text) {
    const std::string original(text);
    const auto x = text.find('x');
    const auto at = text.find('@');
    if (x == std::string_view::npos || at == std::string_view::npos || at < x)
        throw ParseError("malformed spawn spec '" + original + "': expected <count>x<class>@<period>s");

    const std::string_view count_tok = text.substr(0, x);
    const std::string_view class_tok = text.substr(x + 1, at - x - 1);
    std::string_view period_tok = text.substr(at + 1);
    if (!period_tok.empty() && period_tok.back() == 's') period_tok.remove_suffix(1);

    SpawnRule rule;
    const auto [cend, cerr] = std::from_chars(count_tok.data(), count_tok.data() + count_tok.size(), rule.count);
    if (count_tok.empty() || cerr != std::errc() || cend != count_tok.data() + count_tok.size())
        throw ParseError("spawn spec '" + original + "': bad count '" + std::string(count_tok) + "'");
    if (rule.count < 1)
        throw ParseError("spawn spec '" + original + "': count '" + std::string(count_tok) + "' must be >= 1");

    const auto cls = find_class(class_tok);
    if (!cls) throw ParseError("spawn spec '" + original + "': unknown class '" + std::string(class_tok) + "'");
    rule.cls = *cls;

    const auto [pend, perr] = std::from_chars(period_tok.data(), period_tok.data() + period_tok.size(), rule.period);
    if (period_tok.empty() || perr != std::errc() || pend != period_tok.data() + period_tok.size() ||
        !(rule.period > 0))
        throw ParseError("spawn spec '" + original + "': bad period '" + std::string(text.substr(at + 1)) + "'");
    return rule;
}

inline std::string format_spawn_spec(const SpawnRule& rule) {
    std::string period = fmt::format("{}", rule.period);
    return std::to_string(rule.count) + "x" + std::string(class_name(rule.cls)) + "@" + period + "s";
}

struct ClockPolicy {
    enum class Mode : std::uint8_t { fixed, uniform, distribution };
    Mode mode = Mode::fixed;
    double clock = 43200.0;                       // fixed mode
    std::array<double, kHourBins> histogram{};  // distribution mode, hourly weights
    friend bool operator==(const ClockPolicy&, const ClockPolicy&) = default;
};

struct WeatherPolicy {
    enum class Mode : std::uint8_t { fixed, uniform };
    Mode mode = Mode::fixed;
    Weather weather = Weather::clear;
    friend bool operator==(const WeatherPolicy&, const WeatherPolicy&) = default;
};

struct ScenarioConfig {
    std::string name = "scenario";
    Biome biome = Biome::pasture;
    AreaRect area;
    Range altitude_range{10, 80};
    Range pitch_range{20, 90};
    std::vector<SpawnRule> spawn_rules;
    ClassWeights class_weights;  // ambient spawning, one object per tick when non-empty
    double capture_period = 1.0;
    double retarget_period = 60.0;
    double despawn_age = kDefaultMaxAge;
    std::size_t frame_count = 100;
    ClockPolicy clock_policy;
    WeatherPolicy weather_policy;
    std::uint64_t seed = 0;
    RenderSettings render;
    double horizontal_fov = kDefaultHorizontalFov;

    Intrinsics intrinsics() const { return {render.out_width, render.out_height, horizontal_fov}; }

    /// Classes this scenario can produce, in catalog order. Label files
    /// index into this list.
    std::vector<ClassId> classes() const {
        std::set<ClassId> used;
        for (const auto& r : spawn_rules) used.insert(r.cls);
        for (const auto& [c, w] : class_weights)
            if (w > 0) used.insert(c);
        return {used.begin(), used.end()};
    }

    void validate() const {
        auto check_range = [](const Range& r, double lo, double hi, const char* what) {
            if (!(r.min <= r.max) || r.min < lo || r.max > hi)
                throw ConfigError(std::string(what) + " must satisfy " + std::to_string(lo) + " <= min <= max <= " +
                                  std::to_string(hi));
        };
        check_range(altitude_range, 0.0, 1000.0, "altitude_range");
        check_range(pitch_range, -90.0, 90.0, "pitch_range");
        if (!(area.x_min < area.x_max && area.y_min < area.y_max)) throw ConfigError("area must be non-empty");
        if (!(capture_period > 0) || !(retarget_period > 0) || !(despawn_age > 0))
            throw ConfigError("capture_period, retarget_period and despawn_age must be positive");
        for (const auto& r : spawn_rules) {
            if (r.count < 1 || !(r.period > 0)) throw ConfigError("spawn rule count/period invalid");
            if (!(r.forward_range.min <= r.forward_range.max) || !(r.lateral_range.min <= r.lateral_range.max))
                throw ConfigError("spawn rule ranges need min <= max");
        }
        for (const auto& [c, w] : class_weights)
            if (!(w >= 0) || !std::isfinite(w)) throw ConfigError("class weights must be finite and non-negative");
        if (clock_policy.mode == ClockPolicy::Mode::fixed && !(clock_policy.clock >= 0 && clock_policy.clock < kSecondsPerDay))
            throw ConfigError("fixed clock must lie in [0, 86400)");
        if (clock_policy.mode == ClockPolicy::Mode::distribution) {
            double total = 0;
            for (double h : clock_policy.histogram) {
                if (!(h >= 0)) throw ConfigError("clock histogram weights must be non-negative");
                total += h;
            }
            if (!(total > 0)) throw ConfigError("clock histogram is all zero");
        }
        render.validate();
        intrinsics().validate();
    }
};

// ---------------------------------------------------------------------------
// JSON

namespace detail {

inline Range range_from_json(const nlohmann::json& j, const char* key) {
    if (j.is_object() && j.contains("min") && j.contains("max") && j.size() == 2)
        return {j.at("min").get<double>(), j.at("max").get<double>()};
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
        throw ConfigError(std::string(key) + " must be [min, max] or {\"min\", \"max\"}");
    return {j[0].get<double>(), j[1].get<double>()};
}

inline void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed,
                                const char* where) {
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (auto a : allowed) ok = ok || key == a;
        if (!ok) throw ConfigError(std::string("unknown field '") + key + "' in " + where);
    }
}

}  // namespace detail

inline ScenarioConfig config_from_json(const nlohmann::json& j) {
    using nlohmann::json;
    if (!j.is_object()) throw ConfigError("scenario config must be a JSON object");
    detail::reject_unknown_keys(j,
                                {"name", "biome", "area", "altitude_range", "pitch_range", "spawn_rules",
                                 "class_weights", "capture_period", "retarget_period", "despawn_age", "frame_count",
                                 "clock_policy", "weather_policy", "seed", "render"},
                                "scenario config");
    ScenarioConfig c;
    try {
        c.name = j.value("name", c.name);
        c.biome = parse_biome(j.at("biome").get<std::string>());
        const json& a = j.at("area");
        detail::reject_unknown_keys(a, {"x_min", "y_min", "x_max", "y_max"}, "area");
        c.area = {a.at("x_min").get<double>(), a.at("y_min").get<double>(), a.at("x_max").get<double>(),
                  a.at("y_max").get<double>()};
        c.altitude_range = detail::range_from_json(j.at("altitude_range"), "altitude_range");
        c.pitch_range = detail::range_from_json(j.at("pitch_range"), "pitch_range");
        const json rules = j.value("spawn_rules", json::array());
        for (const json& r : rules) {
            detail::reject_unknown_keys(r, {"spec", "forward_range", "lateral_range"}, "spawn rule");
            SpawnRule rule = parse_spawn_spec(r.at("spec").get<std::string>());
            rule.forward_range = detail::range_from_json(r.at("forward_range"), "forward_range");
            rule.lateral_range = detail::range_from_json(r.at("lateral_range"), "lateral_range");
            c.spawn_rules.push_back(rule);
        }
        const json weights = j.value("class_weights", json::object());
        for (const auto& [name, w] : weights.items())
            c.class_weights[parse_class(name)] = w.get<double>();
        c.capture_period = j.value("capture_period", c.capture_period);
        c.retarget_period = j.value("retarget_period", c.retarget_period);
        c.despawn_age = j.value("despawn_age", c.despawn_age);
        c.frame_count = j.at("frame_count").get<std::size_t>();
        if (j.contains("clock_policy")) {
            const json& cp = j.at("clock_policy");
            detail::reject_unknown_keys(cp, {"mode", "clock", "histogram"}, "clock_policy");
            const std::string mode = cp.at("mode").get<std::string>();
            if (mode == "fixed") {
                c.clock_policy.mode = ClockPolicy::Mode::fixed;
                c.clock_policy.clock = cp.value("clock", 43200.0);
            } else if (mode == "uniform") {
                c.clock_policy.mode = ClockPolicy::Mode::uniform;
            } else if (mode == "distribution") {
                c.clock_policy.mode = ClockPolicy::Mode::distribution;
                const json& h = cp.at("histogram");
                if (!h.is_array() || h.size() != kHourBins) throw ConfigError("clock histogram needs 24 entries");
                for (std::size_t i = 0; i < kHourBins; ++i) c.clock_policy.histogram[i] = h[i].get<double>();
            } else {
                throw ConfigError("unknown clock_policy mode '" + mode + "'");
            }
        }
        if (j.contains("weather_policy")) {
            const json& wp = j.at("weather_policy");
            detail::reject_unknown_keys(wp, {"mode", "weather"}, "weather_policy");
            const std::string mode = wp.at("mode").get<std::string>();
            if (mode == "fixed") {
                c.weather_policy.mode = WeatherPolicy::Mode::fixed;
                c.weather_policy.weather = parse_weather(wp.value("weather", std::string("clear")));
            } else if (mode == "uniform") {
                c.weather_policy.mode = WeatherPolicy::Mode::uniform;
            } else {
                throw ConfigError("unknown weather_policy mode '" + mode + "'");
            }
        }
        c.seed = j.value("seed", std::uint64_t{0});
        if (j.contains("render")) {
            const json& r = j.at("render");
            detail::reject_unknown_keys(r, {"width", "height", "supersample", "quality", "horizontal_fov"}, "render");
            c.render.out_width = r.value("width", c.render.out_width);
            c.render.out_height = r.value("height", c.render.out_height);
            c.render.supersample = r.value("supersample", c.render.supersample);
            c.render.quality = parse_quality(r.value("quality", std::string("high")));
            c.horizontal_fov = r.value("horizontal_fov", c.horizontal_fov);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("scenario config: ") + e.what());
    } catch (const ParseError& e) {
        throw ConfigError(std::string("scenario config: ") + e.what());
    }
    c.validate();
    return c;
}

inline nlohmann::json config_to_json(const ScenarioConfig& c) {
    using nlohmann::json;
    json rules = json::array();
    for (const auto& r : c.spawn_rules)
        rules.push_back({{"spec", format_spawn_spec(r)},
                         {"forward_range", {r.forward_range.min, r.forward_range.max}},
                         {"lateral_range", {r.lateral_range.min, r.lateral_range.max}}});
    json weights = json::object();
    for (const auto& [cls, w] : c.class_weights) weights[std::string(class_name(cls))] = w;
    json clock;
    switch (c.clock_policy.mode) {
        case ClockPolicy::Mode::fixed: clock = {{"mode", "fixed"}, {"clock", c.clock_policy.clock}}; break;
        case ClockPolicy::Mode::uniform: clock = {{"mode", "uniform"}}; break;
        case ClockPolicy::Mode::distribution:
            clock = {{"mode", "distribution"}, {"histogram", c.clock_policy.histogram}};
            break;
    }
    json weather = c.weather_policy.mode == WeatherPolicy::Mode::fixed
                       ? json{{"mode", "fixed"}, {"weather", to_string(c.weather_policy.weather)}}
                       : json{{"mode", "uniform"}};
    return {{"name", c.name},
            {"biome", to_string(c.biome)},
            {"area", {{"x_min", c.area.x_min}, {"y_min", c.area.y_min}, {"x_max", c.area.x_max}, {"y_max", c.area.y_max}}},
            {"altitude_range", {c.altitude_range.min, c.altitude_range.max}},
            {"pitch_range", {c.pitch_range.min, c.pitch_range.max}},
            {"spawn_rules", rules},
            {"class_weights", weights},
            {"capture_period", c.capture_period},
            {"retarget_period", c.retarget_period},
            {"despawn_age", c.despawn_age},
            {"frame_count", c.frame_count},
            {"clock_policy", clock},
            {"weather_policy", weather},
            {"seed", c.seed},
            {"render",
             {{"width", c.render.out_width},
              {"height", c.render.out_height},
              {"supersample", c.render.supersample},
              {"quality", to_string(c.render.quality)},
              {"horizontal_fov", c.horizontal_fov}}}};
}

inline ScenarioConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open scenario config " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    if (j.is_object() && !j.contains("name")) j["name"] = path.stem().string();
    return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Scheduling

struct AgentState {
    Eigen::Vector2d position = Eigen::Vector2d::Zero();
    Eigen::Vector2d target = Eigen::Vector2d::Zero();
    double altitude = 50.0;
    double pitch = 90.0;
    double yaw = 0.0;
    Rng rng;
    std::optional<double> last_time;
    std::uint64_t frames_captured = 0;
    std::uint64_t spawned_total = 0;
    std::uint64_t spawns_rejected = 0;
};

inline CameraPose agent_pose(const AgentState& agent) {
    CameraPose pose;
    pose.position = {agent.position.x(), agent.position.y(), agent.altitude};
    pose.yaw = agent.yaw;
    pose.pitch = agent.pitch;
    pose.roll = 0.0;
    return pose;
}

/// Resamples altitude and pitch uniformly from their ranges; yaw follows
/// the agent's travel direction and roll is zero.
inline CameraPose sample_camera(const ScenarioConfig& config, AgentState& agent, Rng& rng) {
    agent.altitude = config.altitude_range.sample(rng);
    agent.pitch = config.pitch_range.sample(rng);
    return agent_pose(agent);
}

inline AgentState init_agent(const ScenarioConfig& config) {
    AgentState agent;
    agent.rng = Rng(hash_combine(config.seed, 0xa6e47ULL));
    agent.position = {agent.rng.uniform(config.area.x_min, config.area.x_max),
                      agent.rng.uniform(config.area.y_min, config.area.y_max)};
    agent.target = agent.position;
    return agent;
}

inline WorldState init_world(const ScenarioConfig& config) {
    WorldState w = WorldState::create(config.biome, config.area, config.seed);
    if (config.clock_policy.mode == ClockPolicy::Mode::fixed) w.set_clock(config.clock_policy.clock);
    w.weather = config.weather_policy.weather;
    return w;
}

struct Capture {
    std::uint64_t frame_id = 0;
    double time = 0.0;
    CameraPose pose;
};

struct TickResult {
    double time = 0.0;
    bool retargeted = false;
    std::size_t spawned = 0;
    std::size_t despawned = 0;
    std::optional<Capture> capture;
};

namespace detail {

inline bool is_multiple(double t, double period) {
    const double q = t / period;
    return std::abs(q - std::round(q)) < 1e-9;
}

inline double sample_clock(const ClockPolicy& policy, Rng& rng) {
    switch (policy.mode) {
        case ClockPolicy::Mode::fixed: return policy.clock;
        case ClockPolicy::Mode::uniform: return rng.uniform(0.0, kSecondsPerDay);
        case ClockPolicy::Mode::distribution: {
            double total = 0;
            for (double h : policy.histogram) total += h;
            const double u = rng.uniform01() * total;
            double acc = 0;
            std::size_t bin = 0;
            for (; bin + 1 < kHourBins; ++bin) {
                acc += policy.histogram[bin];
                if (u < acc && policy.histogram[bin] > 0) break;
            }
            while (policy.histogram[bin] <= 0) --bin;
            return wrap_clock((bin + rng.uniform01()) * 3600.0);
        }
    }
    return policy.clock;
}

inline bool spawn_relative(WorldState& world, AgentState& agent, ClassId cls, double forward, double lateral, double now) {
    const double y = deg2rad(agent.yaw);
    const Eigen::Vector2d fwd(std::sin(y), std::cos(y)), right(std::cos(y), -std::sin(y));
    const Eigen::Vector2d p = agent.position + forward * fwd + lateral * right;
    const double heading = agent.rng.uniform(0.0, 360.0);
    if (!world.area.contains(p.x(), p.y(), kAreaMargin)) {
        ++agent.spawns_rejected;
        return false;
    }
    spawn_object(world, cls, {p.x(), p.y(), 0.0}, heading, now);
    ++agent.spawned_total;
    return true;
}

}  // namespace detail

/// Advances the scenario to time t (seconds, monotone, normally whole
/// ticks). Order within a tick: retarget, motion, spawning, despawning,
/// capture.
inline TickResult step_scenario(const ScenarioConfig& config, WorldState& world, AgentState& agent, double t) {
    if (agent.last_time && t < *agent.last_time) throw InputError("scenario time must not go backwards");
    TickResult result;
    result.time = t;

    if (detail::is_multiple(t, config.retarget_period) || !agent.last_time) {
        agent.target = {agent.rng.uniform(config.area.x_min, config.area.x_max),
                        agent.rng.uniform(config.area.y_min, config.area.y_max)};
        sample_camera(config, agent, agent.rng);
        if (config.weather_policy.mode == WeatherPolicy::Mode::uniform)
            world.weather = kAllWeathers[agent.rng.below(kAllWeathers.size())];
        result.retargeted = true;
    }

    const Eigen::Vector2d to = agent.target - agent.position;
    if (to.norm() > 0) agent.yaw = normalize_yaw(rad2deg(std::atan2(to.x(), to.y())));
    const double dt = agent.last_time ? t - *agent.last_time : 0.0;
    if (dt > 0) {
        const double step = kAgentSpeed * dt;
        agent.position = to.norm() <= step ? agent.target : Eigen::Vector2d(agent.position + to.normalized() * step);
        step_motion(world, dt);
    }
    agent.last_time = t;

    for (const auto& rule : config.spawn_rules) {
        if (!detail::is_multiple(t, rule.period)) continue;
        for (int k = 0; k < rule.count; ++k) {
            const double f = rule.forward_range.sample(agent.rng);
            const double l = rule.lateral_range.sample(agent.rng);
            result.spawned += detail::spawn_relative(world, agent, rule.cls, f, l, t);
        }
    }
    if (!config.class_weights.empty()) {
        const ClassId cls = sample_class(config.class_weights, agent.rng);
        const double f = kAmbientForward.sample(agent.rng);
        const double l = kAmbientLateral.sample(agent.rng);
        result.spawned += detail::spawn_relative(world, agent, cls, f, l, t);
    }

    result.despawned = despawn_expired(world, t, config.despawn_age);

    if (detail::is_multiple(t, config.capture_period)) {
        world.set_clock(detail::sample_clock(config.clock_policy, agent.rng));
        result.capture = Capture{agent.frames_captured++, t, agent_pose(agent)};
    }
    return result;
}

/// Owns the world and agent of one scenario run and yields captures until
/// frame_count frames have been produced.
class ScenarioRunner {
public:
    explicit ScenarioRunner(ScenarioConfig config)
        : config_(std::move(config)), world_(init_world(config_)), agent_(init_agent(config_)) {
        config_.validate();
    }

    std::optional<Capture> next_capture() {
        while (agent_.frames_captured < config_.frame_count) {
            const TickResult r = step_scenario(config_, world_, agent_, time_);
            time_ += kTickSeconds;
            if (r.capture) return r.capture;
        }
        return std::nullopt;
    }

    bool done() const { return agent_.frames_captured >= config_.frame_count; }
    const ScenarioConfig& config() const { return config_; }
    const WorldState& world() const { return world_; }
    const AgentState& agent() const { return agent_; }
    double time() const { return time_; }

private:
    ScenarioConfig config_;
    WorldState world_;
    AgentState agent_;
    double time_ = 0.0;
};

}  // namespace aerosynth
