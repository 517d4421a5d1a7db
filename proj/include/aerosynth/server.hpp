#pragma once

// Command session and single-client TCP server.

#include <aerosynth/dataset_io.hpp>
#include <aerosynth/pipeline.hpp>
#include <aerosynth/protocol.hpp>
#include <aerosynth/scenario.hpp>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstring>
#include <functional>
#include <string>

namespace aerosynth {

struct SessionDefaults {
    Biome biome = Biome::urban;
    AreaRect area;
    RenderSettings render;
    double horizontal_fov = kDefaultHorizontalFov;
    CameraPose pose{{0, 0, 100}, 0, 45, 0};
};

/// Receives outgoing messages in order. Frame messages come with their
/// PNG payload.
using MessageSink = std::function<void(const ServerMessage&, std::span<const std::uint8_t> payload)>;

/// Protocol state machine, independent of the transport.
class Session {
public:
    explicit Session(std::uint64_t seed, SessionDefaults defaults = {})
        : seed_(seed), defaults_(std::move(defaults)),
          world_(WorldState::create(defaults_.biome, defaults_.area, seed)), pose_(defaults_.pose),
          settings_(defaults_.render) {}

    /// Handles one raw message from the framing layer. `stop_requested`
    /// is polled between streamed scenario frames.
    void handle_raw(const RawMessage& raw, const MessageSink& sink,
                    const std::function<bool()>& stop_requested = {}) {
        if (raw.oversize) {
            sink(ErrorMessage{std::nullopt, std::string(error_code::too_large),
                              fmt::format("message of {} bytes exceeds the {} byte limit", raw.declared_length,
                                          kMaxMessageBytes)},
                 {});
            return;
        }
        CommandMessage cmd;
        try {
            cmd = command_from_json(nlohmann::json::parse(raw.body));
        } catch (const nlohmann::json::exception& e) {
            sink(ErrorMessage{std::nullopt, std::string(error_code::malformed), e.what()}, {});
            return;
        } catch (const ParseError& e) {
            std::optional<std::int64_t> id;
            try {
                const auto j = nlohmann::json::parse(raw.body);
                if (j.is_object() && j.contains("id") && j["id"].is_number_integer()) id = j["id"].get<std::int64_t>();
            } catch (...) {
            }
            sink(ErrorMessage{id, std::string(error_code::malformed), e.what()}, {});
            return;
        }
        handle(cmd, sink, stop_requested);
    }

    void handle(const CommandMessage& cmd, const MessageSink& sink, const std::function<bool()>& stop_requested = {}) {
        auto fail = [&](std::string_view code, const std::string& message) {
            sink(ErrorMessage{cmd.id, std::string(code), message}, {});
        };
        try {
            dispatch(cmd, sink, stop_requested);
        } catch (const ConfigError& e) {
            fail(error_code::config, e.what());
        } catch (const nlohmann::json::exception& e) {
            fail(error_code::invalid_params, e.what());
        } catch (const Error& e) {
            fail(error_code::invalid_params, e.what());
        } catch (const std::exception& e) {
            fail(error_code::internal, e.what());
        }
    }

    const WorldState& world() const { return world_; }
    const CameraPose& pose() const { return pose_; }
    const RenderSettings& settings() const { return settings_; }
    std::uint64_t frames_sent() const { return next_frame_id_; }

private:
    static double number(const nlohmann::json& params, const char* key) {
        const auto& v = params.at(key);
        if (!v.is_number()) throw InputError(std::string("'") + key + "' must be a number");
        const double d = v.get<double>();
        if (!std::isfinite(d)) throw InputError(std::string("'") + key + "' must be finite");
        return d;
    }

    static double number_or(const nlohmann::json& params, const char* key, double fallback) {
        return params.contains(key) ? number(params, key) : fallback;
    }

    static void allow_keys(const nlohmann::json& params, std::initializer_list<std::string_view> keys) {
        for (const auto& [k, v] : params.items()) {
            bool ok = false;
            for (auto a : keys) ok = ok || k == a;
            if (!ok) throw InputError("unexpected parameter '" + k + "'");
        }
    }

    static Eigen::Vector3d vec(const nlohmann::json& v, std::size_t min_size, double z_fallback) {
        if (!v.is_array() || v.size() < min_size || v.size() > 3)
            throw InputError("position must be an array of " + std::to_string(min_size) + " to 3 numbers");
        Eigen::Vector3d p(0, 0, z_fallback);
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_number() || !std::isfinite(v[i].get<double>())) throw InputError("position entries must be finite numbers");
            p[static_cast<int>(i)] = v[i].get<double>();
        }
        return p;
    }

    static nlohmann::json pose_json(const CameraPose& p) {
        return {{"position", {p.position.x(), p.position.y(), p.position.z()}},
                {"yaw", p.yaw},
                {"pitch", p.pitch},
                {"roll", p.roll}};
    }

    Intrinsics intrinsics() const { return {settings_.out_width, settings_.out_height, defaults_.horizontal_fov}; }

    void send_frame(std::int64_t id, const RenderedFrame& frame, std::uint64_t meta_frame_id, const MessageSink& sink) {
        const auto png = encode_png(frame.image);
        FrameMessage msg;
        msg.id = id;
        msg.frame_id = next_frame_id_++;
        msg.meta = frame.meta;
        msg.meta.frame_id = meta_frame_id;
        msg.annotations = frame.annotations;
        msg.payload_bytes = png.size();
        sink(msg, png);
    }

    void dispatch(const CommandMessage& cmd, const MessageSink& sink, const std::function<bool()>& stop_requested) {
        const auto& p = cmd.params;
        auto respond = [&](nlohmann::json result) { sink(ResponseMessage{cmd.id, std::move(result)}, {}); };

        if (cmd.cmd == "ping") {
            allow_keys(p, {});
            respond({{"pong", true}});
        } else if (cmd.cmd == "set_camera_pose") {
            allow_keys(p, {"position", "yaw", "pitch", "roll"});
            CameraPose next = pose_;
            next.position = vec(p.at("position"), 3, 0.0);
            next.yaw = number_or(p, "yaw", pose_.yaw);
            next.pitch = number_or(p, "pitch", pose_.pitch);
            next.roll = number_or(p, "roll", pose_.roll);
            next.validate();
            pose_ = next;
            respond({{"pose", pose_json(pose_)}});
        } else if (cmd.cmd == "goto") {
            allow_keys(p, {"position"});
            CameraPose next = pose_;
            next.position = vec(p.at("position"), 2, pose_.position.z());
            next.validate();
            pose_ = next;
            respond({{"pose", pose_json(pose_)}});
        } else if (cmd.cmd == "set_clock") {
            allow_keys(p, {"clock"});
            world_.set_clock(number(p, "clock"));
            respond({{"clock", world_.clock}});
        } else if (cmd.cmd == "set_weather") {
            allow_keys(p, {"weather"});
            world_.weather = parse_weather(p.at("weather").get<std::string>());
            respond({{"weather", to_string(world_.weather)}});
        } else if (cmd.cmd == "set_quality") {
            allow_keys(p, {"quality"});
            settings_ = set_quality(settings_, parse_quality(p.at("quality").get<std::string>()));
            respond({{"quality", to_string(settings_.quality)}});
        } else if (cmd.cmd == "spawn") {
            allow_keys(p, {"class", "forward", "lateral", "position", "heading"});
            const ClassId cls = parse_class(p.at("class").get<std::string>());
            Eigen::Vector3d at;
            if (p.contains("position")) {
                if (p.contains("forward") || p.contains("lateral"))
                    throw InputError("give either position or forward/lateral, not both");
                at = vec(p.at("position"), 2, 0.0);
                at.z() = 0.0;
            } else {
                const double f = number(p, "forward"), l = number_or(p, "lateral", 0.0);
                const double y = deg2rad(pose_.yaw);
                at = {pose_.position.x() + f * std::sin(y) + l * std::cos(y),
                      pose_.position.y() + f * std::cos(y) - l * std::sin(y), 0.0};
            }
            const ObjectId id = spawn_object(world_, cls, at, number_or(p, "heading", 0.0), 0.0);
            respond({{"object_id", id}, {"position", {at.x(), at.y(), at.z()}}});
        } else if (cmd.cmd == "request_frame") {
            allow_keys(p, {});
            const RenderedFrame frame = render_frame(world_, pose_, intrinsics(), settings_, next_frame_id_, seed_);
            send_frame(cmd.id, frame, next_frame_id_, sink);
        } else if (cmd.cmd == "start_scenario") {
            allow_keys(p, {"config"});
            ScenarioConfig config = config_from_json(p.at("config"));
            ScenarioRunner runner(config);
            std::uint64_t frames = 0;
            bool stopped = false;
            while (const auto capture = runner.next_capture()) {
                if (stop_requested && stop_requested()) {
                    stopped = true;
                    break;
                }
                send_frame(cmd.id, render_capture(config, runner.world(), *capture), capture->frame_id, sink);
                ++frames;
            }
            sink(CompleteMessage{cmd.id, frames, stopped}, {});
        } else if (cmd.cmd == "stop") {
            allow_keys(p, {});
            respond({{"stopped", true}});
        } else {
            sink(ErrorMessage{cmd.id, std::string(error_code::unknown_command), "unknown command '" + cmd.cmd + "'"}, {});
        }
    }

    std::uint64_t seed_;
    SessionDefaults defaults_;
    WorldState world_;
    CameraPose pose_;
    RenderSettings settings_;
    std::uint64_t next_frame_id_ = 0;
};

// ---------------------------------------------------------------------------
// Sockets

namespace detail {

inline void send_all(int fd, std::span<const std::uint8_t> bytes) {
    std::size_t sent = 0;
    while (sent < bytes.size()) {
        const ssize_t n = ::send(fd, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw IoError(std::string("send failed: ") + std::strerror(errno));
        }
        sent += static_cast<std::size_t>(n);
    }
}

class Fd {
public:
    explicit Fd(int fd = -1) : fd_(fd) {}
    Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
    Fd& operator=(Fd&& o) noexcept {
        if (this != &o) {
            reset();
            fd_ = std::exchange(o.fd_, -1);
        }
        return *this;
    }
    ~Fd() { reset(); }
    void reset() {
        if (fd_ >= 0) ::close(fd_);
        fd_ = -1;
    }
    int get() const { return fd_; }

private:
    int fd_;
};

}  // namespace detail

struct ServerOptions {
    std::uint16_t port = kDefaultPort;  // 0 picks an ephemeral port
    std::uint64_t seed = 0;
    std::string bind_address = "127.0.0.1";
    SessionDefaults defaults;
};

/// Accepts one client at a time; each connection gets a fresh session.
class Server {
public:
    explicit Server(ServerOptions options) : options_(std::move(options)) {
        listen_ = detail::Fd(::socket(AF_INET, SOCK_STREAM, 0));
        if (listen_.get() < 0) throw IoError(std::string("socket: ") + std::strerror(errno));
        const int one = 1;
        ::setsockopt(listen_.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(options_.port);
        if (::inet_pton(AF_INET, options_.bind_address.c_str(), &addr.sin_addr) != 1)
            throw ConfigError("bad bind address " + options_.bind_address);
        if (::bind(listen_.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0)
            throw IoError(fmt::format("bind {}:{}: {}", options_.bind_address, options_.port, std::strerror(errno)));
        if (::listen(listen_.get(), 4) < 0) throw IoError(std::string("listen: ") + std::strerror(errno));
        socklen_t len = sizeof addr;
        ::getsockname(listen_.get(), reinterpret_cast<sockaddr*>(&addr), &len);
        port_ = ntohs(addr.sin_port);
    }

    std::uint16_t port() const { return port_; }

    /// Thread-safe; makes serve() return within ~100 ms.
    void shutdown() { stopping_ = true; }

    void serve() {
        while (!stopping_) {
            pollfd pfd{listen_.get(), POLLIN, 0};
            const int r = ::poll(&pfd, 1, 100);
            if (r <= 0) continue;
            detail::Fd client(::accept(listen_.get(), nullptr, nullptr));
            if (client.get() < 0) continue;
            const int one = 1;
            ::setsockopt(client.get(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
            try {
                serve_client(client.get());
            } catch (const IoError&) {
                // client went away mid-write; wait for the next one
            }
        }
    }

private:
    // Reads available bytes into the decoder; false on EOF or error.
    bool pump(int fd, FrameDecoder& decoder, int timeout_ms) {
        pollfd pfd{fd, POLLIN, 0};
        const int r = ::poll(&pfd, 1, timeout_ms);
        if (r <= 0) return r == 0 || errno == EINTR;
        std::uint8_t buf[65536];
        const ssize_t n = ::recv(fd, buf, sizeof buf, 0);
        if (n <= 0) return n < 0 && errno == EINTR;
        decoder.feed(std::span(buf, static_cast<std::size_t>(n)));
        return true;
    }

    void serve_client(int fd) {
        Session session(options_.seed, options_.defaults);
        FrameDecoder decoder;
        std::deque<RawMessage> queued;
        const MessageSink sink = [fd](const ServerMessage& m, std::span<const std::uint8_t> payload) {
            detail::send_all(fd, encode(m, payload));
        };
        // While a scenario streams, later messages are read ahead; a stop
        // among them aborts the stream and is answered afterwards in order.
        bool connected = true;
        const auto stop_requested = [&]() {
            if (connected) connected = pump(fd, decoder, 0);
            while (auto m = decoder.next()) queued.push_back(std::move(*m));
            for (const auto& m : queued) {
                if (m.oversize) continue;
                try {
                    const auto j = nlohmann::json::parse(m.body);
                    if (j.is_object() && j.value("cmd", "") == "stop") return true;
                } catch (...) {
                }
            }
            return stopping_.load() || !connected;
        };
        while (!stopping_) {
            while (!queued.empty()) {
                RawMessage m = std::move(queued.front());
                queued.pop_front();
                session.handle_raw(m, sink, stop_requested);
            }
            if (auto m = decoder.next()) {
                session.handle_raw(*m, sink, stop_requested);
                continue;
            }
            if (!connected || !pump(fd, decoder, 100)) return;
        }
    }

    ServerOptions options_;
    detail::Fd listen_;
    std::uint16_t port_ = 0;
    std::atomic<bool> stopping_{false};
};

/// Minimal blocking client used by tests and tooling.
class Client {
public:
    Client(const std::string& host, std::uint16_t port) {
        fd_ = detail::Fd(::socket(AF_INET, SOCK_STREAM, 0));
        if (fd_.get() < 0) throw IoError(std::string("socket: ") + std::strerror(errno));
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(port);
        if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) throw ConfigError("bad host " + host);
        if (::connect(fd_.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0)
            throw IoError(fmt::format("connect {}:{}: {}", host, port, std::strerror(errno)));
        const int one = 1;
        ::setsockopt(fd_.get(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    }

    void send_raw(std::span<const std::uint8_t> bytes) { detail::send_all(fd_.get(), bytes); }
    void send(const CommandMessage& cmd) { send_raw(encode(cmd)); }

    ReceivedMessage receive(int timeout_ms = 60000) {
        while (true) {
            if (auto m = decoder_.next()) return std::move(*m);
            pollfd pfd{fd_.get(), POLLIN, 0};
            const int r = ::poll(&pfd, 1, timeout_ms);
            if (r == 0) throw IoError("timed out waiting for the server");
            if (r < 0) {
                if (errno == EINTR) continue;
                throw IoError(std::string("poll: ") + std::strerror(errno));
            }
            std::uint8_t buf[65536];
            const ssize_t n = ::recv(fd_.get(), buf, sizeof buf, 0);
            if (n == 0) throw IoError("server closed the connection");
            if (n < 0) {
                if (errno == EINTR) continue;
                throw IoError(std::string("recv: ") + std::strerror(errno));
            }
            decoder_.feed(std::span(buf, static_cast<std::size_t>(n)));
        }
    }

    ReceivedMessage call(const CommandMessage& cmd, int timeout_ms = 60000) {
        send(cmd);
        return receive(timeout_ms);
    }

private:
    detail::Fd fd_;
    ServerStreamDecoder decoder_;
};

}  // namespace aerosynth
