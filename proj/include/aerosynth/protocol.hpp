#pragma once

// Wire protocol: every message is a 4-byte big-endian length followed by
// that many bytes of UTF-8 JSON (compact, keys sorted). A "frame" message
// is additionally followed by exactly payload_bytes of PNG.

#include <aerosynth/annotate.hpp>
#include <aerosynth/errors.hpp>
#include <aerosynth/meta.hpp>

#include <nlohmann/json.hpp>

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace aerosynth {

inline constexpr std::size_t kMaxMessageBytes = 16u << 20;
inline constexpr std::uint16_t kDefaultPort = 8000;

inline constexpr std::array<std::string_view, 10> kCommands = {
    "set_camera_pose", "set_clock", "set_weather", "set_quality", "spawn",
    "goto",            "start_scenario", "request_frame", "stop", "ping"};

namespace error_code {
inline constexpr std::string_view malformed = "malformed";
inline constexpr std::string_view too_large = "too_large";
inline constexpr std::string_view unknown_command = "unknown_command";
inline constexpr std::string_view invalid_params = "invalid_params";
inline constexpr std::string_view config = "config";
inline constexpr std::string_view internal = "internal";
}  // namespace error_code

// ---------------------------------------------------------------------------
// Framing

inline std::vector<std::uint8_t> encode_length_prefixed(std::string_view body) {
    if (body.size() > kMaxMessageBytes) throw InputError("message exceeds 16 MiB");
    const auto n = static_cast<std::uint32_t>(body.size());
    std::vector<std::uint8_t> out{static_cast<std::uint8_t>(n >> 24), static_cast<std::uint8_t>(n >> 16),
                                  static_cast<std::uint8_t>(n >> 8), static_cast<std::uint8_t>(n)};
    out.insert(out.end(), body.begin(), body.end());
    return out;
}

inline std::string canonical_json(const nlohmann::json& j) {
    return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

inline std::vector<std::uint8_t> encode_json_message(const nlohmann::json& j) {
    return encode_length_prefixed(canonical_json(j));
}

struct RawMessage {
    std::uint32_t declared_length = 0;
    bool oversize = false;  // body was discarded
    std::string body;
};

/// Incremental length-prefix decoder. Oversize messages are reported once
/// their body has been skipped, so framing stays aligned.
class FrameDecoder {
public:
    explicit FrameDecoder(std::size_t max_bytes = kMaxMessageBytes) : max_bytes_(max_bytes) {}

    void feed(std::span<const std::uint8_t> bytes) { buffer_.insert(buffer_.end(), bytes.begin(), bytes.end()); }
    void feed(std::string_view bytes) {
        feed(std::span(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
    }

    std::optional<RawMessage> next() {
        while (true) {
            if (!length_) {
                if (buffer_.size() < 4) return std::nullopt;
                const std::uint32_t n = (std::uint32_t{buffer_[0]} << 24) | (std::uint32_t{buffer_[1]} << 16) |
                                        (std::uint32_t{buffer_[2]} << 8) | std::uint32_t{buffer_[3]};
                buffer_.erase(buffer_.begin(), buffer_.begin() + 4);
                length_ = n;
                skip_ = n > max_bytes_ ? n : 0;
            }
            if (skip_ > 0) {
                const std::size_t k = std::min<std::size_t>(skip_, buffer_.size());
                buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(k));
                skip_ -= k;
                if (skip_ > 0) return std::nullopt;
                RawMessage m{*length_, true, {}};
                length_.reset();
                return m;
            }
            if (buffer_.size() < *length_) return std::nullopt;
            RawMessage m{*length_, false, std::string(buffer_.begin(), buffer_.begin() + *length_)};
            buffer_.erase(buffer_.begin(), buffer_.begin() + *length_);
            length_.reset();
            return m;
        }
    }

    /// Takes exactly n raw bytes (a frame payload) if buffered.
    std::optional<std::vector<std::uint8_t>> take_raw(std::size_t n) {
        if (buffer_.size() < n) return std::nullopt;
        std::vector<std::uint8_t> out(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(n));
        buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(n));
        return out;
    }

    std::size_t buffered() const { return buffer_.size(); }
    bool mid_message() const { return length_.has_value(); }

private:
    std::size_t max_bytes_;
    std::deque<std::uint8_t> buffer_;
    std::optional<std::uint32_t> length_;
    std::size_t skip_ = 0;
};

// ---------------------------------------------------------------------------
// Messages

struct CommandMessage {
    std::string cmd;
    std::int64_t id = 0;
    nlohmann::json params = nlohmann::json::object();
    friend bool operator==(const CommandMessage&, const CommandMessage&) = default;
};

struct ResponseMessage {
    std::int64_t id = 0;
    nlohmann::json result = nlohmann::json::object();
    friend bool operator==(const ResponseMessage&, const ResponseMessage&) = default;
};

struct ErrorMessage {
    std::optional<std::int64_t> id;  // absent when the request could not be parsed
    std::string code;
    std::string message;
    friend bool operator==(const ErrorMessage&, const ErrorMessage&) = default;
};

struct FrameMessage {
    std::int64_t id = 0;
    std::uint64_t frame_id = 0;
    MetaRecord meta;
    std::vector<Annotation> annotations;
    std::uint64_t payload_bytes = 0;
    friend bool operator==(const FrameMessage&, const FrameMessage&) = default;
};

struct CompleteMessage {
    std::int64_t id = 0;
    std::uint64_t frames = 0;
    bool stopped = false;
    friend bool operator==(const CompleteMessage&, const CompleteMessage&) = default;
};

using ServerMessage = std::variant<ResponseMessage, ErrorMessage, FrameMessage, CompleteMessage>;

inline nlohmann::json annotation_to_json(const Annotation& a) {
    return {{"object_id", a.object_id},
            {"class", class_name(a.cls)},
            {"bbox", {a.bbox.x_min, a.bbox.y_min, a.bbox.x_max, a.bbox.y_max}},
            {"visible_pixels", a.visible_pixels},
            {"unoccluded_pixels", a.unoccluded_pixels},
            {"visibility", a.visibility},
            {"truncated", a.truncated}};
}

inline Annotation annotation_from_json(const nlohmann::json& j) {
    Annotation a;
    a.object_id = j.at("object_id").get<ObjectId>();
    a.cls = parse_class(j.at("class").get<std::string>());
    const auto& b = j.at("bbox");
    if (!b.is_array() || b.size() != 4) throw ParseError("bbox must have 4 entries");
    a.bbox = {b[0].get<int>(), b[1].get<int>(), b[2].get<int>(), b[3].get<int>()};
    a.visible_pixels = j.at("visible_pixels").get<std::size_t>();
    a.unoccluded_pixels = j.at("unoccluded_pixels").get<std::size_t>();
    a.visibility = j.at("visibility").get<double>();
    a.truncated = j.at("truncated").get<bool>();
    return a;
}

inline nlohmann::json to_json(const CommandMessage& m) { return {{"cmd", m.cmd}, {"id", m.id}, {"params", m.params}}; }

/// Throws ParseError with a reason when the JSON is not a command envelope.
inline CommandMessage command_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ParseError("command must be a JSON object");
    for (const auto& [k, v] : j.items())
        if (k != "cmd" && k != "id" && k != "params") throw ParseError("unexpected field '" + k + "'");
    if (!j.contains("cmd") || !j["cmd"].is_string()) throw ParseError("'cmd' must be a string");
    if (!j.contains("id") || !j["id"].is_number_integer()) throw ParseError("'id' must be an integer");
    CommandMessage m;
    m.cmd = j["cmd"].get<std::string>();
    m.id = j["id"].get<std::int64_t>();
    if (j.contains("params")) {
        if (!j["params"].is_object()) throw ParseError("'params' must be an object");
        m.params = j["params"];
    }
    return m;
}

inline nlohmann::json to_json(const ServerMessage& msg) {
    using nlohmann::json;
    return std::visit(
        [](const auto& m) -> json {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, ResponseMessage>) {
                return {{"type", "response"}, {"id", m.id}, {"result", m.result}};
            } else if constexpr (std::is_same_v<T, ErrorMessage>) {
                return {{"type", "error"},
                        {"id", m.id ? json(*m.id) : json(nullptr)},
                        {"error", {{"code", m.code}, {"message", m.message}}}};
            } else if constexpr (std::is_same_v<T, FrameMessage>) {
                json anns = json::array();
                for (const auto& a : m.annotations) anns.push_back(annotation_to_json(a));
                return {{"type", "frame"},        {"id", m.id},           {"frame_id", m.frame_id},
                        {"meta", json(m.meta)},   {"annotations", anns},  {"payload_bytes", m.payload_bytes}};
            } else {
                return {{"type", "complete"}, {"id", m.id}, {"frames", m.frames}, {"stopped", m.stopped}};
            }
        },
        msg);
}

inline ServerMessage server_message_from_json(const nlohmann::json& j) {
    try {
        const std::string type = j.at("type").get<std::string>();
        if (type == "response") return ResponseMessage{j.at("id").get<std::int64_t>(), j.at("result")};
        if (type == "error") {
            ErrorMessage e;
            if (!j.at("id").is_null()) e.id = j.at("id").get<std::int64_t>();
            e.code = j.at("error").at("code").get<std::string>();
            e.message = j.at("error").at("message").get<std::string>();
            return e;
        }
        if (type == "frame") {
            FrameMessage f;
            f.id = j.at("id").get<std::int64_t>();
            f.frame_id = j.at("frame_id").get<std::uint64_t>();
            f.meta = j.at("meta").get<MetaRecord>();
            for (const auto& a : j.at("annotations")) f.annotations.push_back(annotation_from_json(a));
            f.payload_bytes = j.at("payload_bytes").get<std::uint64_t>();
            return f;
        }
        if (type == "complete")
            return CompleteMessage{j.at("id").get<std::int64_t>(), j.at("frames").get<std::uint64_t>(),
                                   j.at("stopped").get<bool>()};
        throw ParseError("unknown message type '" + type + "'");
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad server message: ") + e.what());
    } catch (const Error& e) {
        throw ParseError(std::string("bad server message: ") + e.what());
    }
}

inline std::vector<std::uint8_t> encode(const CommandMessage& m) { return encode_json_message(to_json(m)); }

/// Header plus payload for frame messages; payload must be empty otherwise.
inline std::vector<std::uint8_t> encode(const ServerMessage& m, std::span<const std::uint8_t> payload = {}) {
    if (const auto* f = std::get_if<FrameMessage>(&m); f && f->payload_bytes != payload.size())
        throw InputError("frame payload_bytes does not match the attached payload");
    if (!std::holds_alternative<FrameMessage>(m) && !payload.empty())
        throw InputError("only frame messages carry a payload");
    auto out = encode_json_message(to_json(m));
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

inline CommandMessage decode_command(std::span<const std::uint8_t> bytes) {
    FrameDecoder d;
    d.feed(bytes);
    auto raw = d.next();
    if (!raw || raw->oversize || d.buffered() != 0) throw ParseError("expected exactly one complete message");
    try {
        return command_from_json(nlohmann::json::parse(raw->body));
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(e.what());
    }
}

struct ReceivedMessage {
    ServerMessage message;
    std::vector<std::uint8_t> payload;
};

/// Client-side stream decoder: JSON messages plus the raw payload that
/// follows frame headers.
class ServerStreamDecoder {
public:
    void feed(std::span<const std::uint8_t> bytes) { frames_.feed(bytes); }

    std::optional<ReceivedMessage> next() {
        if (!pending_) {
            auto raw = frames_.next();
            if (!raw) return std::nullopt;
            if (raw->oversize) throw ParseError("server message exceeds the size limit");
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(raw->body);
            } catch (const nlohmann::json::parse_error& e) {
                throw ParseError(e.what());
            }
            pending_ = server_message_from_json(j);
        }
        std::size_t need = 0;
        if (const auto* f = std::get_if<FrameMessage>(&*pending_)) need = f->payload_bytes;
        auto payload = frames_.take_raw(need);
        if (!payload) return std::nullopt;
        ReceivedMessage out{std::move(*pending_), std::move(*payload)};
        pending_.reset();
        return out;
    }

private:
    FrameDecoder frames_;
    std::optional<ServerMessage> pending_;
};

}  // namespace aerosynth
