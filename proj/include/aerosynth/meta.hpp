#pragma once

// Per-frame capture metadata and its JSON / CSV encodings.

#include <aerosynth/errors.hpp>
#include <aerosynth/renderer.hpp>
#include <aerosynth/world.hpp>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace aerosynth {

struct MetaRecord {
    std::uint64_t frame_id = 0;
    double altitude = 0.0;  // m
    double yaw = 0.0;       // deg
    double pitch = 0.0;
    double roll = 0.0;
    double clock = 0.0;  // seconds of day
    Weather weather = Weather::clear;
    Quality quality = Quality::high;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(altitude >= 0)) throw IntegrityError("meta altitude must be >= 0");
        if (!(clock >= 0 && clock < kSecondsPerDay)) throw IntegrityError("meta clock must lie in [0, 86400)");
    }
    friend bool operator==(const MetaRecord&, const MetaRecord&) = default;
};

inline void to_json(nlohmann::json& j, const MetaRecord& m) {
    j = nlohmann::json{{"frame_id", m.frame_id},
                       {"altitude", m.altitude},
                       {"yaw", m.yaw},
                       {"pitch", m.pitch},
                       {"roll", m.roll},
                       {"clock", m.clock},
                       {"weather", to_string(m.weather)},
                       {"quality", to_string(m.quality)},
                       {"seed", m.seed}};
}

inline void from_json(const nlohmann::json& j, MetaRecord& m) {
    m.frame_id = j.at("frame_id").get<std::uint64_t>();
    m.altitude = j.at("altitude").get<double>();
    m.yaw = j.at("yaw").get<double>();
    m.pitch = j.at("pitch").get<double>();
    m.roll = j.at("roll").get<double>();
    m.clock = j.at("clock").get<double>();
    m.weather = parse_weather(j.at("weather").get<std::string>());
    m.quality = parse_quality(j.at("quality").get<std::string>());
    m.seed = j.at("seed").get<std::uint64_t>();
}

inline constexpr std::string_view kMetaCsvHeader = "frame_id,altitude,yaw,pitch,roll,clock,weather,quality,seed";

inline std::string meta_csv_row(const MetaRecord& m) {
    return fmt::format("{},{},{},{},{},{},{},{},{}", m.frame_id, m.altitude, m.yaw, m.pitch, m.roll,
                       m.clock, to_string(m.weather), to_string(m.quality), m.seed);
}

inline std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        cells.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    if (!cells.empty() && !cells.back().empty() && cells.back().back() == '\r') cells.back().pop_back();
    return cells;
}

inline MetaRecord parse_meta_csv_row(std::string_view line) {
    const auto cells = split_csv_line(line);
    if (cells.size() != 9) throw ParseError("meta.csv row needs 9 fields: '" + std::string(line) + "'");
    try {
        MetaRecord m;
        m.frame_id = std::stoull(cells[0]);
        m.altitude = std::stod(cells[1]);
        m.yaw = std::stod(cells[2]);
        m.pitch = std::stod(cells[3]);
        m.roll = std::stod(cells[4]);
        m.clock = std::stod(cells[5]);
        m.weather = parse_weather(cells[6]);
        m.quality = parse_quality(cells[7]);
        m.seed = std::stoull(cells[8]);
        return m;
    } catch (const std::logic_error&) {
        throw ParseError("malformed meta.csv row: '" + std::string(line) + "'");
    }
}

}  // namespace aerosynth
