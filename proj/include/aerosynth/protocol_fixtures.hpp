#pragma once

// Canonical example messages. `aerosynth protocol-fixtures` writes them to
// docs/fixtures/<name>.bin; tests check the encoder still reproduces them.

#include <aerosynth/protocol.hpp>

#include <string>
#include <utility>
#include <vector>

namespace aerosynth {

struct Fixture {
    std::string name;
    std::vector<std::uint8_t> bytes;
};

inline std::vector<Fixture> protocol_fixtures() {
    using nlohmann::json;
    std::vector<Fixture> out;
    auto cmd = [&](std::string name, std::string c, std::int64_t id, json params) {
        out.push_back({std::move(name), encode(CommandMessage{std::move(c), id, std::move(params)})});
    };
    cmd("cmd_ping", "ping", 1, json::object());
    cmd("cmd_set_camera_pose", "set_camera_pose", 2,
        {{"position", {0.0, 0.0, 50.0}}, {"yaw", 0.0}, {"pitch", 90.0}, {"roll", 0.0}});
    cmd("cmd_set_clock", "set_clock", 3, {{"clock", 43200.0}});
    cmd("cmd_set_weather", "set_weather", 4, {{"weather", "fog"}});
    cmd("cmd_set_quality", "set_quality", 5, {{"quality", "low"}});
    cmd("cmd_spawn_relative", "spawn", 6, {{"class", "cow"}, {"forward", 100.0}, {"lateral", 0.0}});
    cmd("cmd_spawn_absolute", "spawn", 7, {{"class", "boat"}, {"position", {120.5, -40.0}}, {"heading", 90.0}});
    cmd("cmd_goto", "goto", 8, {{"position", {1000.0, 2000.0}}});
    cmd("cmd_request_frame", "request_frame", 9, json::object());
    cmd("cmd_start_scenario", "start_scenario", 10,
        {{"config",
          {{"name", "tiny"},
           {"biome", "pasture"},
           {"area", {{"x_min", 0}, {"y_min", 0}, {"x_max", 1000}, {"y_max", 1000}}},
           {"altitude_range", {10, 80}},
           {"pitch_range", {20, 90}},
           {"spawn_rules", {{{"spec", "4xcow@2s"}, {"forward_range", {50, 250}}, {"lateral_range", {-160, 160}}}}},
           {"frame_count", 2},
           {"seed", 1},
           {"render", {{"width", 64}, {"height", 36}, {"supersample", 2}, {"quality", "high"}}}}}});
    cmd("cmd_stop", "stop", 11, json::object());

    auto srv = [&](std::string name, const ServerMessage& m, std::vector<std::uint8_t> payload = {}) {
        out.push_back({std::move(name), encode(m, payload)});
    };
    srv("resp_pong", ResponseMessage{1, {{"pong", true}}});
    srv("resp_spawn", ResponseMessage{6, {{"object_id", 1}, {"position", {0.0, 100.0, 0.0}}}});
    srv("err_unknown_command", ErrorMessage{12, "unknown_command", "unknown command 'fly'"});
    srv("err_malformed", ErrorMessage{std::nullopt, "malformed", "'cmd' must be a string"});

    FrameMessage f;
    f.id = 9;
    f.frame_id = 0;
    f.meta.frame_id = 0;
    f.meta.altitude = 50.0;
    f.meta.yaw = 0.0;
    f.meta.pitch = 90.0;
    f.meta.roll = 0.0;
    f.meta.clock = 43200.0;
    f.meta.weather = Weather::clear;
    f.meta.quality = Quality::high;
    f.meta.seed = 7;
    Annotation a;
    a.object_id = 1;
    a.cls = ClassId::cow;
    a.bbox = {28, 14, 36, 22};
    a.visible_pixels = 180;
    a.unoccluded_pixels = 180;
    a.visibility = 1.0;
    a.truncated = false;
    f.annotations = {a};
    // Payload is opaque to the framing layer; a PNG signature stands in here.
    const std::vector<std::uint8_t> payload = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    f.payload_bytes = payload.size();
    srv("frame_with_payload", f, payload);
    srv("complete", CompleteMessage{10, 2, false});
    return out;
}

}  // namespace aerosynth
