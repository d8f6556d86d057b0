// Frame format and channel abstraction. Every message travels as
//
//   offset  size  field
//   0       1     type
//   1       4     seq, big-endian, per direction, starts at 0, +1 per frame
//   5       2     payload length, big-endian
//   7       len   payload
//   7+len   4     CRC-32 over bytes [0, 7+len), big-endian
//
// The CRC uses the same polynomial as the input generator, MSB-first, with
// all-ones initial value and a final complement. Bit-package payloads carry
// the package bits packed MSB-first (4 bytes for the default 32-bit package).

#pragma once

#include "tpmkex/errors.hpp"

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace tpmkex {

enum class FrameType : std::uint8_t {
    bit_package = 0x01,
    bp_ack = 0x02,
    req_key = 0x10,
    key_cha = 0x11,
    key_com = 0x12,
    sync_error = 0x20,
    hello = 0x21,
};

struct Frame {
    FrameType type = FrameType::hello;
    std::uint32_t seq = 0;
    std::vector<std::uint8_t> payload;

    bool operator==(const Frame&) const = default;
};

inline constexpr std::size_t frame_overhead_bytes = 11;  // header + check
inline constexpr std::size_t max_payload_bytes = 1024;

/// CRC-32, MSB-first, init all-ones, final complement.
std::uint32_t crc32(std::span<const std::uint8_t> data);

std::vector<std::uint8_t> encode_frame(const Frame& frame);

/// Parses one complete frame. Truncation or a length mismatch raises
/// FramingError, a failed check IntegrityError, and an unknown type (with a
/// valid check) ProtocolError. A corrupted buffer never decodes silently.
Frame decode_frame(std::span<const std::uint8_t> bytes);

/// Reliable, ordered, loss-free frame channel. One endpoint per owner.
class Channel {
public:
    virtual ~Channel() = default;
    virtual void send(const Frame& frame) = 0;
    virtual Frame receive() = 0;
    virtual void close() = 0;
};

/// Two connected in-memory endpoints. Delivery is FIFO and delay-free;
/// frames pass through the real codec so the wire format is exercised.
std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> loopback_pair();

/// TCP client endpoint; address is "host:port".
std::unique_ptr<Channel> connect_channel(const std::string& address);

/// TCP acceptor; address "host:port", port 0 picks an ephemeral port.
class Listener {
public:
    explicit Listener(const std::string& address);
    ~Listener();
    Listener(const Listener&) = delete;
    Listener& operator=(const Listener&) = delete;

    std::unique_ptr<Channel> accept_one();
    int port() const { return port_; }

private:
    int fd_ = -1;
    int port_ = 0;
};

/// Decorator that remembers every frame passing through an endpoint, for
/// transcript comparisons across transports.
class RecordingChannel : public Channel {
public:
    explicit RecordingChannel(std::unique_ptr<Channel> inner)
        : inner_(std::move(inner)) {}

    void send(const Frame& frame) override {
        sent.push_back(frame);
        inner_->send(frame);
    }
    Frame receive() override {
        Frame f = inner_->receive();
        received.push_back(f);
        return f;
    }
    void close() override { inner_->close(); }

    std::vector<Frame> sent;
    std::vector<Frame> received;

private:
    std::unique_ptr<Channel> inner_;
};

}  // namespace tpmkex
