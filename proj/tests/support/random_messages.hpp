#pragma once

// Random protocol messages for round-trip and fuzz checks.

#include <aerosynth/protocol.hpp>
#include <aerosynth/rng.hpp>

#include <string>

namespace testing_support {

using namespace aerosynth;
using nlohmann::json;

inline std::string random_string(Rng& rng, std::size_t max_len) {
    std::string s;
    const std::size_t n = rng.below(max_len + 1);
    for (std::size_t i = 0; i < n; ++i) s.push_back(static_cast<char>(' ' + rng.below(95)));
    return s;
}

inline json random_json(Rng& rng, int depth) {
    switch (depth <= 0 ? rng.below(4) : rng.below(6)) {
        case 0: return rng.below(2) == 1;
        case 1: return static_cast<std::int64_t>(rng.next() >> 20) - (std::int64_t{1} << 42);
        case 2: return rng.uniform(-1e6, 1e6);
        case 3: return random_string(rng, 12);
        case 4: {
            json a = json::array();
            for (std::size_t i = rng.below(4); i > 0; --i) a.push_back(random_json(rng, depth - 1));
            return a;
        }
        default: {
            json o = json::object();
            for (std::size_t i = rng.below(4); i > 0; --i) o[random_string(rng, 6)] = random_json(rng, depth - 1);
            return o;
        }
    }
}

inline MetaRecord random_meta(Rng& rng) {
    MetaRecord m;
    m.frame_id = rng.next() >> 12;
    m.altitude = rng.uniform(0, 1000);
    m.yaw = rng.uniform(0, 360);
    m.pitch = rng.uniform(-90, 90);
    m.roll = rng.uniform(-30, 30);
    m.clock = rng.uniform(0, 86400);
    m.weather = kAllWeathers[rng.below(4)];
    m.quality = rng.below(2) ? Quality::low : Quality::high;
    m.seed = rng.next();
    return m;
}

inline ServerMessage random_server_message(Rng& rng) {
    const auto id = static_cast<std::int64_t>(rng.next() >> 1) * (rng.below(2) ? 1 : -1);
    switch (rng.below(4)) {
        case 0: return ResponseMessage{id, random_json(rng, 3)};
        case 1: return ErrorMessage{rng.below(2) ? std::optional<std::int64_t>(id) : std::nullopt, random_string(rng, 10),
                                    random_string(rng, 40)};
        case 2: {
            FrameMessage f;
            f.id = id;
            f.frame_id = rng.next();
            f.meta = random_meta(rng);
            for (std::size_t i = rng.below(5); i > 0; --i) {
                Annotation a;
                a.object_id = static_cast<ObjectId>(rng.below(1u << 31));
                a.cls = static_cast<ClassId>(rng.below(kClassCount));
                a.bbox = {static_cast<int>(rng.below(4000)), static_cast<int>(rng.below(4000)),
                          static_cast<int>(rng.below(4000)), static_cast<int>(rng.below(4000))};
                a.visible_pixels = rng.below(1u << 30);
                a.unoccluded_pixels = rng.below(1u << 30);
                a.visibility = rng.uniform01();
                a.truncated = rng.below(2) == 1;
                f.annotations.push_back(a);
            }
            f.payload_bytes = rng.below(64);
            return f;
        }
        default: return CompleteMessage{id, rng.next() >> 1, rng.below(2) == 1};
    }
}

inline std::uint64_t payload_size(const ServerMessage& m) {
    const auto* f = std::get_if<FrameMessage>(&m);
    return f ? f->payload_bytes : 0;
}

}  // namespace testing_support
