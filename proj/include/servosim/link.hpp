#pragma once

// Wire protocol between the controller and the perception stage, plus the
// channel machinery for running them in one process or two.
//
//   frames:   length-prefixed binary stream (reliable, ordered)
//   commands: small ASCII datagrams (best-effort, latest wins)
//
// Both transports are driven by the simulated clock: arrivals are stamped
// when the controller polls, which keeps runs reproducible.

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <deque>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "servosim/percept.hpp"
#include "servosim/simcam.hpp"

namespace servosim {

// ---------------------------------------------------------------- codecs --

inline constexpr char kFrameMagic[4] = {'F', 'R', 'M', '1'};
inline constexpr uint8_t kFrameKindPseudoDepth = 0;
inline constexpr size_t kFrameHeaderSize = 21;  // magic + seq + ts + w + h + kind

struct FrameMessage {
    uint32_t seq = 0;
    uint64_t timestamp_us = 0;
    uint16_t width = 0, height = 0;
    uint8_t kind = kFrameKindPseudoDepth;
    std::vector<uint16_t> samples;  // row-major raw16

    bool operator==(const FrameMessage&) const = default;
};

enum class FrameDecodeError { None, BadMagic, Truncated, LengthMismatch };
enum class CommandDecodeError { None, UnknownToken, NonNumeric, TrailingGarbage };

template <typename T, typename E>
struct Decoded {
    std::optional<T> value;
    E error = E::None;

    bool ok() const { return value.has_value(); }
    const T& operator*() const { return *value; }
    const T* operator->() const { return &*value; }
};

namespace wire {

inline void put_u16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(v & 0xff);
    out.push_back(v >> 8);
}

inline void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xff);
}

inline void put_u64(std::vector<uint8_t>& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back((v >> (8 * i)) & 0xff);
}

inline uint16_t get_u16(const uint8_t* p) { return uint16_t(p[0]) | uint16_t(p[1]) << 8; }

inline uint32_t get_u32(const uint8_t* p) {
    return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
}

inline uint64_t get_u64(const uint8_t* p) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(p[i]) << (8 * i);
    return v;
}

}  // namespace wire

// Full wire form: u32 length prefix, then header and payload.
inline std::vector<uint8_t> encode_frame(const FrameMessage& m) {
    size_t payload = m.samples.size() * 2;
    if (m.samples.size() != static_cast<size_t>(m.width) * m.height)
        throw std::invalid_argument("encode_frame: payload size does not match dimensions");
    std::vector<uint8_t> out;
    out.reserve(4 + kFrameHeaderSize + payload);
    wire::put_u32(out, static_cast<uint32_t>(kFrameHeaderSize + payload));
    out.insert(out.end(), kFrameMagic, kFrameMagic + 4);
    wire::put_u32(out, m.seq);
    wire::put_u64(out, m.timestamp_us);
    wire::put_u16(out, m.width);
    wire::put_u16(out, m.height);
    out.push_back(m.kind);
    for (uint16_t s : m.samples) wire::put_u16(out, s);
    return out;
}

struct DecodedFrame {
    FrameMessage message;
    size_t consumed = 0;  // bytes including the length prefix
};

inline Decoded<DecodedFrame, FrameDecodeError> decode_frame(std::span<const uint8_t> buf) {
    using R = Decoded<DecodedFrame, FrameDecodeError>;
    if (buf.size() < 4) return R{std::nullopt, FrameDecodeError::Truncated};
    uint32_t len = wire::get_u32(buf.data());
    if (len < kFrameHeaderSize) return R{std::nullopt, FrameDecodeError::LengthMismatch};
    if (buf.size() - 4 < len) return R{std::nullopt, FrameDecodeError::Truncated};
    const uint8_t* p = buf.data() + 4;
    if (std::memcmp(p, kFrameMagic, 4) != 0) return R{std::nullopt, FrameDecodeError::BadMagic};
    FrameMessage m;
    m.seq = wire::get_u32(p + 4);
    m.timestamp_us = wire::get_u64(p + 8);
    m.width = wire::get_u16(p + 16);
    m.height = wire::get_u16(p + 18);
    m.kind = p[20];
    size_t expected = kFrameHeaderSize + static_cast<size_t>(m.width) * m.height * 2;
    if (len != expected) return R{std::nullopt, FrameDecodeError::LengthMismatch};
    m.samples.resize(static_cast<size_t>(m.width) * m.height);
    for (size_t i = 0; i < m.samples.size(); ++i) m.samples[i] = wire::get_u16(p + 21 + 2 * i);
    return R{DecodedFrame{std::move(m), 4 + len}, FrameDecodeError::None};
}

inline FrameMessage frame_from_depth(const DepthMap& d, uint32_t seq, uint64_t timestamp_us) {
    FrameMessage m;
    m.seq = seq;
    m.timestamp_us = timestamp_us;
    m.width = static_cast<uint16_t>(d.width);
    m.height = static_cast<uint16_t>(d.height);
    m.samples.resize(d.values.size());
    for (size_t i = 0; i < d.values.size(); ++i)
        m.samples[i] = static_cast<uint16_t>(std::llround(clamp(d.values[i], 0.0, kDepthRawMax)));
    return m;
}

inline DepthMap depth_from_frame(const FrameMessage& m) {
    DepthMap d;
    d.width = m.width;
    d.height = m.height;
    d.values.resize(m.samples.size());
    for (size_t i = 0; i < m.samples.size(); ++i) d.values[i] = m.samples[i];
    return d;
}

// "LEFT 42 0.1200": direction token, decimal seq, fraction to 4 places.
inline std::vector<uint8_t> encode_command(const AvoidCommandMsg& msg) {
    char buf[64];
    int n = std::snprintf(buf, sizeof(buf), "%s %u %.4f", to_string(msg.direction), msg.seq,
                          msg.white_fraction);
    return std::vector<uint8_t>(buf, buf + n);
}

inline Decoded<AvoidCommandMsg, CommandDecodeError> decode_command(std::span<const uint8_t> bytes) {
    using R = Decoded<AvoidCommandMsg, CommandDecodeError>;
    std::string s(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    size_t sp1 = s.find(' ');
    if (sp1 == std::string::npos) return R{std::nullopt, CommandDecodeError::UnknownToken};
    std::string dir = s.substr(0, sp1);
    AvoidCommandMsg msg;
    if (dir == "LEFT") msg.direction = AvoidDirection::Left;
    else if (dir == "RIGHT") msg.direction = AvoidDirection::Right;
    else if (dir == "CENTER") msg.direction = AvoidDirection::Center;
    else return R{std::nullopt, CommandDecodeError::UnknownToken};
    size_t sp2 = s.find(' ', sp1 + 1);
    if (sp2 == std::string::npos) return R{std::nullopt, CommandDecodeError::NonNumeric};
    std::string seq_str = s.substr(sp1 + 1, sp2 - sp1 - 1);
    if (seq_str.empty() || seq_str.find_first_not_of("0123456789") != std::string::npos)
        return R{std::nullopt, CommandDecodeError::NonNumeric};
    msg.seq = static_cast<uint32_t>(std::strtoul(seq_str.c_str(), nullptr, 10));
    std::string frac = s.substr(sp2 + 1);
    if (frac.find(' ') != std::string::npos)
        return R{std::nullopt, CommandDecodeError::TrailingGarbage};
    char* end = nullptr;
    msg.white_fraction = std::strtod(frac.c_str(), &end);
    if (frac.empty() || end != frac.c_str() + frac.size() || !std::isfinite(msg.white_fraction))
        return R{std::nullopt, CommandDecodeError::NonNumeric};
    return R{msg, CommandDecodeError::None};
}

// -------------------------------------------------------------- channels --

struct LinkError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr const char* kDefaultFrameAddr = "127.0.0.1:47001";
inline constexpr const char* kDefaultCmdAddr = "127.0.0.1:47002";
inline constexpr double kDefaultStalenessWindow = 0.6;  // s
inline constexpr size_t kFrameQueueCap = 8;

inline std::string env_or(const char* name, const char* fallback) {
    const char* v = std::getenv(name);
    return v && *v ? v : fallback;
}

inline std::string default_frame_addr() { return env_or("SERVOSIM_FRAME_ADDR", kDefaultFrameAddr); }
inline std::string default_cmd_addr() { return env_or("SERVOSIM_CMD_ADDR", kDefaultCmdAddr); }

struct ReceivedCommand {
    AvoidCommandMsg msg;
    uint64_t arrival_us = 0;
};

// Controller-side duplex handle: pushes frames toward perception, exposes the
// newest command with staleness derived from the caller-supplied clock.
class ControllerLink {
  public:
    explicit ControllerLink(double staleness_window_s)
        : staleness_window_us_(static_cast<uint64_t>(staleness_window_s * 1e6)) {}
    virtual ~ControllerLink() = default;

    virtual void send_frame(const FrameMessage& frame,
                            std::shared_ptr<const std::vector<DepthRefSample>> refs = nullptr) = 0;

    // Lockstep: block (wall clock) until the reply for `seq` arrived.
    virtual bool wait_reply(uint32_t seq, int timeout_ms) = 0;

    // Ingest anything pending; arrivals are stamped with `now_us`.
    virtual void poll(uint64_t now_us) = 0;

    const std::optional<ReceivedCommand>& newest() const { return newest_; }

    bool is_stale(uint64_t now_us) const {
        return newest_ && now_us - newest_->arrival_us > staleness_window_us_;
    }

    std::optional<AvoidCommandMsg> fresh_command(uint64_t now_us) const {
        if (!newest_ || is_stale(now_us)) return std::nullopt;
        return newest_->msg;
    }

  protected:
    void deliver(const AvoidCommandMsg& msg, uint64_t now_us) { newest_ = {msg, now_us}; }

  private:
    std::optional<ReceivedCommand> newest_;
    uint64_t staleness_window_us_;
};

// ---- in-process pair ----

// Single-process mode: the perception stage is a cooperating task stepped
// synchronously inside wait_reply. Queue semantics match the socket path.
class InprocLink : public ControllerLink {
  public:
    InprocLink(const PerceptParams& params, double staleness_window_s = kDefaultStalenessWindow)
        : ControllerLink(staleness_window_s), pipeline_(params) {}

    void send_frame(const FrameMessage& frame,
                    std::shared_ptr<const std::vector<DepthRefSample>> refs = nullptr) override {
        if (frames_.size() >= kFrameQueueCap) {
            frames_.pop_front();
            ++frames_dropped_;
        }
        frames_.push_back({frame, std::move(refs)});
    }

    bool wait_reply(uint32_t seq, int) override {
        step_perception();
        for (const auto& c : pending_)
            if (c.seq >= seq) return true;
        return false;
    }

    void poll(uint64_t now_us) override {
        for (const auto& c : pending_) deliver(c, now_us);
        pending_.clear();
    }

    // Process the newest queued frame, dropping older ones.
    bool step_perception() {
        if (frames_.empty()) return false;
        frames_dropped_ += frames_.size() - 1;
        Item item = std::move(frames_.back());
        frames_.clear();
        pending_.push_back(
            pipeline_.process(depth_from_frame(item.frame), item.frame.seq, item.refs.get()));
        return true;
    }

    uint64_t frames_dropped() const { return frames_dropped_; }

  private:
    struct Item {
        FrameMessage frame;
        std::shared_ptr<const std::vector<DepthRefSample>> refs;
    };
    PerceptionPipeline pipeline_;
    std::deque<Item> frames_;
    std::vector<AvoidCommandMsg> pending_;
    uint64_t frames_dropped_ = 0;
};

// ---- sockets ----

namespace net {

struct Endpoint {
    std::string host;
    uint16_t port = 0;
};

inline Endpoint parse_endpoint(const std::string& addr) {
    size_t colon = addr.rfind(':');
    if (colon == std::string::npos) throw LinkError("bad address (expected host:port): " + addr);
    Endpoint ep;
    ep.host = addr.substr(0, colon);
    long port = std::strtol(addr.c_str() + colon + 1, nullptr, 10);
    if (port < 0 || port > 65535) throw LinkError("bad port in address: " + addr);
    ep.port = static_cast<uint16_t>(port);
    return ep;
}

inline sockaddr_in make_sockaddr(const Endpoint& ep) {
    sockaddr_in sa{};
    sa.sin_family = AF_INET;
    sa.sin_port = htons(ep.port);
    if (inet_pton(AF_INET, ep.host.c_str(), &sa.sin_addr) != 1)
        throw LinkError("bad IPv4 address: " + ep.host);
    return sa;
}

inline uint16_t bound_port(int fd) {
    sockaddr_in sa{};
    socklen_t len = sizeof(sa);
    if (getsockname(fd, reinterpret_cast<sockaddr*>(&sa), &len) != 0)
        throw LinkError("getsockname failed");
    return ntohs(sa.sin_port);
}

// RAII fd.
class Socket {
  public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    Socket(Socket&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }
    Socket& operator=(Socket&& o) noexcept {
        if (this != &o) {
            close_fd();
            fd_ = o.fd_;
            o.fd_ = -1;
        }
        return *this;
    }
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;
    ~Socket() { close_fd(); }

    int fd() const { return fd_; }
    bool valid() const { return fd_ >= 0; }
    void reset(int fd = -1) {
        close_fd();
        fd_ = fd;
    }

  private:
    void close_fd() {
        if (fd_ >= 0) ::close(fd_);
        fd_ = -1;
    }
    int fd_ = -1;
};

inline void set_nonblocking(int fd, bool on) {
    int flags = fcntl(fd, F_GETFL, 0);
    fcntl(fd, F_SETFL, on ? flags | O_NONBLOCK : flags & ~O_NONBLOCK);
}

}  // namespace net

// Two-process mode, controller side. Owns the TCP listener the perception
// process connects to and the UDP socket its command datagrams land on.
class SocketControllerLink : public ControllerLink {
  public:
    SocketControllerLink(const std::string& frame_addr, const std::string& cmd_addr,
                         double staleness_window_s = kDefaultStalenessWindow)
        : ControllerLink(staleness_window_s) {
        net::Endpoint fep = net::parse_endpoint(frame_addr);
        listen_.reset(::socket(AF_INET, SOCK_STREAM, 0));
        if (!listen_.valid()) throw LinkError("socket() failed");
        int one = 1;
        setsockopt(listen_.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
        sockaddr_in sa = net::make_sockaddr(fep);
        if (bind(listen_.fd(), reinterpret_cast<sockaddr*>(&sa), sizeof(sa)) != 0)
            throw LinkError("cannot bind frame endpoint " + frame_addr + ": " + std::strerror(errno));
        if (listen(listen_.fd(), 1) != 0) throw LinkError("listen() failed");
        frame_port_ = net::bound_port(listen_.fd());

        net::Endpoint cep = net::parse_endpoint(cmd_addr);
        udp_.reset(::socket(AF_INET, SOCK_DGRAM, 0));
        if (!udp_.valid()) throw LinkError("socket() failed");
        sockaddr_in ca = net::make_sockaddr(cep);
        if (bind(udp_.fd(), reinterpret_cast<sockaddr*>(&ca), sizeof(ca)) != 0)
            throw LinkError("cannot bind command endpoint " + cmd_addr + ": " + std::strerror(errno));
        cmd_port_ = net::bound_port(udp_.fd());
        host_ = fep.host;
    }

    std::string frame_addr() const { return host_ + ":" + std::to_string(frame_port_); }
    std::string cmd_addr() const { return host_ + ":" + std::to_string(cmd_port_); }

    bool accept_peer(int timeout_ms) {
        pollfd pfd{listen_.fd(), POLLIN, 0};
        if (::poll(&pfd, 1, timeout_ms) <= 0) return false;
        int fd = ::accept(listen_.fd(), nullptr, nullptr);
        if (fd < 0) return false;
        int one = 1;
        setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
        conn_.reset(fd);
        return true;
    }

    void send_frame(const FrameMessage& frame,
                    std::shared_ptr<const std::vector<DepthRefSample>> = nullptr) override {
        if (!conn_.valid()) throw LinkError("no perception peer connected");
        std::vector<uint8_t> bytes = encode_frame(frame);
        size_t off = 0;
        while (off < bytes.size()) {
            ssize_t n = ::send(conn_.fd(), bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
            if (n <= 0) throw LinkError("frame send failed: " + std::string(std::strerror(errno)));
            off += static_cast<size_t>(n);
        }
    }

    bool wait_reply(uint32_t seq, int timeout_ms) override {
        for (const auto& c : pending_)
            if (c.seq >= seq) return true;
        for (int waited = 0; waited <= timeout_ms;) {
            drain_udp();
            for (const auto& c : pending_)
                if (c.seq >= seq) return true;
            pollfd pfd{udp_.fd(), POLLIN, 0};
            int step = 20;
            if (::poll(&pfd, 1, step) < 0) return false;
            waited += step;
        }
        drain_udp();
        for (const auto& c : pending_)
            if (c.seq >= seq) return true;
        return false;
    }

    void poll(uint64_t now_us) override {
        drain_udp();
        for (const auto& c : pending_) deliver(c, now_us);
        pending_.clear();
    }

    void close_frame_stream() { conn_.reset(); }

  private:
    void drain_udp() {
        uint8_t buf[256];
        while (true) {
            ssize_t n = ::recv(udp_.fd(), buf, sizeof(buf), MSG_DONTWAIT);
            if (n <= 0) break;
            auto dec = decode_command(std::span<const uint8_t>(buf, static_cast<size_t>(n)));
            if (dec.ok()) pending_.push_back(*dec);
        }
    }

    net::Socket listen_;
    net::Socket conn_;
    net::Socket udp_;
    std::vector<AvoidCommandMsg> pending_;
    std::string host_;
    uint16_t frame_port_ = 0;
    uint16_t cmd_port_ = 0;
};

// Two-process mode, perception side: a blocking frame source plus a command
// datagram sink.
class SocketPerceptEndpoint {
  public:
    SocketPerceptEndpoint(const std::string& frame_addr, const std::string& cmd_addr,
                          int connect_timeout_ms = 5000) {
        net::Endpoint fep = net::parse_endpoint(frame_addr);
        sockaddr_in sa = net::make_sockaddr(fep);
        int waited = 0;
        while (true) {
            tcp_.reset(::socket(AF_INET, SOCK_STREAM, 0));
            if (::connect(tcp_.fd(), reinterpret_cast<sockaddr*>(&sa), sizeof(sa)) == 0) break;
            tcp_.reset();
            if (waited >= connect_timeout_ms)
                throw LinkError("cannot connect to frame endpoint " + frame_addr);
            usleep(50 * 1000);
            waited += 50;
        }
        int one = 1;
        setsockopt(tcp_.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
        udp_.reset(::socket(AF_INET, SOCK_DGRAM, 0));
        cmd_dest_ = net::make_sockaddr(net::parse_endpoint(cmd_addr));
    }

    // Next frame to process: drains everything already buffered and keeps the
    // newest; blocks when nothing complete is available. EOF -> nullopt.
    std::optional<FrameMessage> next_frame() {
        std::optional<FrameMessage> newest;
        while (true) {
            while (true) {  // extract all complete messages
                auto dec = decode_frame(buf_);
                if (!dec.ok()) {
                    if (dec.error == FrameDecodeError::Truncated) break;
                    throw LinkError("corrupt frame stream");
                }
                newest = std::move(dec->message);
                buf_.erase(buf_.begin(), buf_.begin() + static_cast<long>(dec->consumed));
            }
            if (newest) {
                // opportunistically grab anything else already queued
                if (!read_more(false)) return newest;
                auto dec = decode_frame(buf_);
                if (!dec.ok() && dec.error == FrameDecodeError::Truncated) return newest;
                continue;
            }
            if (!read_more(true)) return std::nullopt;  // EOF before a full frame
        }
    }

    void send_command(const AvoidCommandMsg& msg) {
        std::vector<uint8_t> bytes = encode_command(msg);
        ::sendto(udp_.fd(), bytes.data(), bytes.size(), 0,
                 reinterpret_cast<const sockaddr*>(&cmd_dest_), sizeof(cmd_dest_));
    }

  private:
    bool read_more(bool block) {
        uint8_t tmp[65536];
        net::set_nonblocking(tcp_.fd(), !block);
        ssize_t n = ::recv(tcp_.fd(), tmp, sizeof(tmp), 0);
        if (n > 0) {
            buf_.insert(buf_.end(), tmp, tmp + n);
            return true;
        }
        if (n == 0) return false;  // EOF
        if (errno == EAGAIN || errno == EWOULDBLOCK) return false;
        return false;
    }

    net::Socket tcp_;
    net::Socket udp_;
    sockaddr_in cmd_dest_{};
    std::vector<uint8_t> buf_;
};

// Main loop of the standalone perception process: one command per frame.
inline void run_perception_loop(SocketPerceptEndpoint& endpoint, const PerceptionPipeline& pipeline) {
    while (auto frame = endpoint.next_frame()) {
        AvoidCommandMsg cmd = pipeline.process(depth_from_frame(*frame), frame->seq);
        endpoint.send_command(cmd);
    }
}

}  // namespace servosim
